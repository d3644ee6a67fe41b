//! Bracketed scalar root finding and minimization (Brent).

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
}

/// Brent's method on a bracket `[a, b]` with `f(a) f(b) <= 0`.
///
/// Returns `None` when the endpoints do not bracket a sign change. `f` may
/// fail; the first error aborts the search.
pub fn brent_root<T: Real, E>(
    mut f: impl FnMut(T) -> Result<T, E>,
    a: T,
    b: T,
    xtol: T,
    max_iter: usize,
) -> Result<Option<RootResult<T>>, E> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == T::zero() {
        return Ok(Some(RootResult { x: a, fx: fa, iterations: 0 }));
    }
    if fb == T::zero() {
        return Ok(Some(RootResult { x: b, fx: fb, iterations: 0 }));
    }
    if fa.signum() == fb.signum() {
        return Ok(None);
    }
    let two = T::lit(2.0);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * T::epsilon() * b.abs() + xtol / two;
        let m = (c - b) / two;
        if m.abs() <= tol || fb == T::zero() {
            return Ok(Some(RootResult { x: b, fx: fb, iterations: it }));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * m * s;
                q = T::one() - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (two * m * qa * (qa - r) - (b - a) * (r - T::one()));
                q = (qa - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (T::lit(3.0) * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol { b + d } else { b + tol * m.signum() };
        fb = f(b)?;
    }
    Ok(Some(RootResult { x: b, fx: fb, iterations: max_iter }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinResult<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
}

/// Brent's parabolic/golden-section minimizer on `[a, b]`.
pub fn brent_minimize<T: Real, E>(
    mut f: impl FnMut(T) -> Result<T, E>,
    a: T,
    b: T,
    rel_tol: T,
    max_iter: usize,
) -> Result<MinResult<T>, E> {
    let golden = T::lit(0.381_966_011_250_105_1);
    let two = T::lit(2.0);
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (T::zero(), T::zero());
    let abs_tol = T::epsilon().sqrt() * T::lit(1e-3);
    for it in 1..=max_iter {
        let xm = (a + b) / two;
        let tol1 = rel_tol * x.abs() + abs_tol;
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - (b - a) / two {
            return Ok(MinResult { x, fx, iterations: it });
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (q * etemp / two).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1 * (xm - x).signum();
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1 * d.signum() };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok(MinResult { x, fx, iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    #[test]
    fn root_of_cubic() {
        let r = brent_root(|x: f64| Ok::<_, Infallible>(x * x * x - 2.0 * x - 5.0), 2.0, 3.0, 1e-14, 100)
            .unwrap()
            .unwrap();
        assert!((r.x - 2.094_551_481_542_326_5).abs() < 1e-13);
    }

    #[test]
    fn no_bracket() {
        let r = brent_root(|x: f64| Ok::<_, Infallible>(x * x + 1.0), -1.0, 1.0, 1e-12, 50).unwrap();
        assert!(r.is_none());
    }

    #[test]
    fn minimize_quartic() {
        let m = brent_minimize(|x: f64| Ok::<_, Infallible>((x - 0.3).powi(4) + (x - 0.3).powi(2)), -2.0, 2.0, 1e-10, 200)
            .unwrap();
        assert!((m.x - 0.3).abs() < 1e-7, "{}", m.x);
    }

    #[test]
    fn minimize_cos() {
        let m = brent_minimize(|x: f64| Ok::<_, Infallible>(x.cos()), 2.0, 4.5, 1e-12, 200).unwrap();
        assert!((m.x - std::f64::consts::PI).abs() < 1e-7);
    }
}
