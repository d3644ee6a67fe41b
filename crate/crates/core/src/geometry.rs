//! Side computations on the flat and round pictures: Q-curvature of the
//! round sphere, radial flat Laplacians, the scalar-positivity inequality,
//! mean curvature of geodesic spheres, Kelvin and cylindrical transforms.

use num_rational::Ratio;
use serde::Serialize;

use crate::delaunay::DelaunayOrbit;
use crate::series::Series2;
use crate::{Error, Real, Result};

fn check_dim(n: u32) -> Result<()> {
    if n < 5 {
        return Err(Error::Dimension { n, min: 5, max: u32::MAX });
    }
    Ok(())
}

/// `Q` of the round metric from its curvature data
/// (`R = n(n-1)`, `|Ric|^2 = n(n-1)^2`, `Lap R = 0`), in exact arithmetic.
pub fn q_round_exact(n: u32) -> Result<Ratio<i64>> {
    check_dim(n)?;
    let k = n as i64;
    let r = Ratio::from_integer(k * (k - 1));
    let ric2 = Ratio::from_integer(k * (k - 1) * (k - 1));
    let lap_r = Ratio::from_integer(0);
    let a = Ratio::new(-1, 2 * (k - 1));
    let b = Ratio::new(-2, (k - 2) * (k - 2));
    let c = Ratio::new(k * k * k - 4 * k * k + 16 * k - 16, 8 * (k - 1) * (k - 1) * (k - 2) * (k - 2));
    Ok(a * lap_r + b * ric2 + c * r * r)
}

/// Floating-point evaluation of the same formula.
pub fn q_round<T: Real>(n: u32) -> Result<T> {
    check_dim(n)?;
    let nf = T::int(n);
    let one = T::one();
    let two = T::lit(2.0);
    let r = nf * (nf - one);
    let ric2 = nf * (nf - one) * (nf - one);
    let c = (nf * nf * nf - T::lit(4.0) * nf * nf + T::lit(16.0) * nf - T::lit(16.0))
        / (T::lit(8.0) * (nf - one).powi(2) * (nf - two).powi(2));
    Ok(-two / (nf - two).powi(2) * ric2 + c * r * r)
}

/// A positive function of `r = |x|` with derivatives through order four.
pub trait RadialProfile<T: Real> {
    /// `[f, f', f'', f''', f'''']` at `r > 0`.
    fn derivs(&self, r: T) -> Result<[T; 5]>;

    fn value(&self, r: T) -> Result<T> {
        Ok(self.derivs(r)?[0])
    }
}

fn check_radius<T: Real>(r: T) -> Result<()> {
    if r > T::zero() && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be positive, got {r}")))
    }
}

/// `U_sph = ((1+r^2)/2)^{(4-n)/2}`.
#[derive(Debug, Clone, Copy)]
pub struct USph {
    pub n: u32,
}

impl<T: Real> RadialProfile<T> for USph {
    fn derivs(&self, r: T) -> Result<[T; 5]> {
        let q = (T::int(self.n) - T::lit(4.0)) / T::lit(2.0);
        let x = Series2::var_t(r);
        Ok(((x * x + T::one()) / T::lit(2.0)).powf(-q).t_derivatives())
    }
}

/// `c r^k`.
#[derive(Debug, Clone, Copy)]
pub struct PowerProfile<T> {
    pub c: T,
    pub k: T,
}

impl<T: Real> RadialProfile<T> for PowerProfile<T> {
    fn derivs(&self, r: T) -> Result<[T; 5]> {
        check_radius(r)?;
        let mut out = [T::zero(); 5];
        let mut falling = self.c;
        for (j, o) in out.iter_mut().enumerate() {
            *o = falling * r.powf(self.k - T::lit(j as f64));
            falling = falling * (self.k - T::lit(j as f64));
        }
        Ok(out)
    }
}

/// `u_eps(r) = r^{(4-n)/2} v_eps(-log r)`.
pub struct DelaunayProfile<'a, T> {
    pub orbit: &'a DelaunayOrbit<T>,
}

impl<T: Real> RadialProfile<T> for DelaunayProfile<'_, T> {
    fn derivs(&self, r: T) -> Result<[T; 5]> {
        check_radius(r)?;
        let x = Series2::var_t(r);
        let t = -x.ln();
        let st = self.orbit.eval(t.value());
        let prof = t.compose([st.v, st.dv, st.d2v, st.d3v, self.orbit.fourth_derivative(t.value())]);
        Ok((x.powf(-self.orbit.coeffs().weight()) * prof).t_derivatives())
    }
}

/// `u_lambda(r) = lambda^{(n-4)/2} u(lambda r)`.
pub struct ScaledProfile<'a, T, P: ?Sized> {
    pub inner: &'a P,
    pub lambda: T,
    pub n: u32,
}

impl<T: Real, P: RadialProfile<T> + ?Sized> RadialProfile<T> for ScaledProfile<'_, T, P> {
    fn derivs(&self, r: T) -> Result<[T; 5]> {
        let q = (T::int(self.n) - T::lit(4.0)) / T::lit(2.0);
        let d = self.inner.derivs(self.lambda * r)?;
        let mut out = [T::zero(); 5];
        let mut scale = self.lambda.powf(q);
        for (o, dk) in out.iter_mut().zip(d) {
            *o = scale * dk;
            scale = scale * self.lambda;
        }
        Ok(out)
    }
}

/// A profile given by a closure returning the derivative array.
pub struct FnProfile<F> {
    pub f: F,
}

impl<T: Real, F: Fn(T) -> Result<[T; 5]>> RadialProfile<T> for FnProfile<F> {
    fn derivs(&self, r: T) -> Result<[T; 5]> {
        (self.f)(r)
    }
}

/// `Lap f = f'' + (n-1) f'/r`.
pub fn radial_laplacian<T: Real, P: RadialProfile<T> + ?Sized>(profile: &P, r: T, n: u32) -> Result<T> {
    check_radius(r)?;
    let d = profile.derivs(r)?;
    Ok(d[2] + T::int(n - 1) * d[1] / r)
}

/// `Lap^2 f` from the radial formula applied twice.
pub fn radial_bilaplacian<T: Real, P: RadialProfile<T> + ?Sized>(profile: &P, r: T, n: u32) -> Result<T> {
    check_radius(r)?;
    let d = profile.derivs(r)?;
    let m = T::int(n - 1);
    let (r2, r3) = (r * r, r * r * r);
    // g = Lap f, and its first two derivatives
    let g1 = d[3] + m * (d[2] / r - d[1] / r2);
    let g2 = d[4] + m * (d[3] / r - T::lit(2.0) * d[2] / r2 + T::lit(2.0) * d[1] / r3);
    Ok(g2 + m * g1 / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityReport {
    /// Minimum over the grid of `-Lap w - (2/(n-4)) |w'|^2 / w`.
    pub min_margin: f64,
    pub argmin: f64,
    pub pass: bool,
}

/// Tolerance below which the margin counts as a violation.
pub const POSITIVITY_TOL: f64 = -1e-10;

/// Checks `-Lap w >= (2/(n-4)) |grad w|^2 / w` on a radial grid.
pub fn scalar_positivity<T: Real, P: RadialProfile<T> + ?Sized>(w: &P, grid: &[T], n: u32) -> Result<PositivityReport> {
    check_dim(n)?;
    let k = T::lit(2.0) / (T::int(n) - T::lit(4.0));
    let mut min_margin = f64::INFINITY;
    let mut argmin = f64::NAN;
    for &r in grid {
        let d = w.derivs(r)?;
        if !(d[0] > T::zero()) {
            return Err(Error::NonPositive { value: d[0].to_f64().unwrap_or(f64::NAN) });
        }
        let margin = -radial_laplacian(w, r, n)? - k * d[1] * d[1] / d[0];
        let m = margin.to_f64().unwrap_or(f64::NAN);
        if m < min_margin || m.is_nan() {
            min_margin = m;
            argmin = r.to_f64().unwrap_or(f64::NAN);
        }
    }
    Ok(PositivityReport { min_margin, argmin, pass: min_margin >= POSITIVITY_TOL })
}

/// Mean curvature, for the inward normal, of the sphere `|x| = r` in the
/// round metric `(2/(1+|x|^2))^2 delta`: `(n-1)(1-r^2)/(2r)`.
pub fn mean_curvature_geodesic_sphere<T: Real>(r: T, n: u32) -> T {
    T::int(n - 1) * (T::one() - r * r) / (T::lit(2.0) * r)
}

/// The expression `-2n r (1+r^2) + (n-1+n r^2)/r`, kept for comparison.
pub fn mean_curvature_printed<T: Real>(r: T, n: u32) -> T {
    let nf = T::int(n);
    -T::lit(2.0) * nf * r * (T::one() + r * r) + (nf - T::one() + nf * r * r) / r
}

/// `H = -d_l eta^l - eta^p Gamma^l_{lp}` for `|x| = r` in the metric
/// `phi(x)^2 delta`, `phi = 2/(1+|x|^2)`, with `eta = -x/(|x| phi)` the
/// inward unit normal. Christoffel symbols are assembled from metric
/// derivatives computed by forward-mode differentiation.
pub fn mean_curvature_christoffel<T: Real>(r: T, n: u32) -> T {
    let dim = n as usize;
    let x0: Vec<T> = (0..dim).map(|i| if i == 0 { r } else { T::zero() }).collect();
    // coordinates as series, the k-th one seeded
    let seeded = |k: usize| -> Vec<Series2<T>> {
        x0.iter()
            .enumerate()
            .map(|(i, &xi)| if i == k { Series2::var_t(xi) } else { Series2::constant(xi) })
            .collect()
    };
    let phi = |x: &[Series2<T>]| {
        let r2 = x.iter().fold(Series2::constant(T::zero()), |a, &xi| a + xi * xi);
        (r2 + T::one()).recip() * T::lit(2.0)
    };
    let metric = |x: &[Series2<T>], i: usize, j: usize| {
        if i == j {
            let p = phi(x);
            p * p
        } else {
            Series2::constant(T::zero())
        }
    };
    let eta = |x: &[Series2<T>], l: usize| {
        let r2 = x.iter().fold(Series2::constant(T::zero()), |a, &xi| a + xi * xi);
        -(x[l] / (r2.sqrt() * phi(x)))
    };

    // dg[k][i][j] = d_k g_ij at x0
    let mut dg = vec![vec![vec![T::zero(); dim]; dim]; dim];
    for (k, dgk) in dg.iter_mut().enumerate() {
        let xs = seeded(k);
        for (i, row) in dgk.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = metric(&xs, i, j).partial(1, 0);
            }
        }
    }
    let plain: Vec<Series2<T>> = x0.iter().map(|&xi| Series2::constant(xi)).collect();
    // the metric is diagonal here, so g^{lm} = delta_lm / g_ll
    let ginv: Vec<T> = (0..dim).map(|l| T::one() / metric(&plain, l, l).value()).collect();
    let gamma_trace = |p: usize| {
        let mut acc = T::zero();
        for l in 0..dim {
            // Gamma^l_{lp} = g^{ll}/2 (d_l g_lp + d_p g_ll - d_l g_lp)
            acc = acc + ginv[l] / T::lit(2.0) * (dg[l][l][p] + dg[p][l][l] - dg[l][l][p]);
        }
        acc
    };
    let mut div = T::zero();
    for l in 0..dim {
        div = div + eta(&seeded(l), l).partial(1, 0);
    }
    let mut contraction = T::zero();
    for p in 0..dim {
        contraction = contraction + eta(&plain, p).value() * gamma_trace(p);
    }
    -div - contraction
}

/// `K(u)(x) = |x|^{4-n} u(x/|x|^2)`.
pub fn kelvin<T: Real>(u: impl Fn(&[T]) -> Result<T>, x: &[T], n: u32) -> Result<T> {
    let r2 = x.iter().fold(T::zero(), |a, &xi| a + xi * xi);
    if !(r2 > T::zero()) {
        return Err(Error::Domain("Kelvin transform is undefined at x = 0".into()));
    }
    let y: Vec<T> = x.iter().map(|&xi| xi / r2).collect();
    Ok(r2.sqrt().powf(T::lit(4.0) - T::int(n)) * u(&y)?)
}

fn weight<T: Real>(n: u32) -> T {
    (T::int(n) - T::lit(4.0)) / T::lit(2.0)
}

fn u_sph_at<T: Real>(r2: T, n: u32) -> T {
    ((T::one() + r2) / T::lit(2.0)).powf(-weight::<T>(n))
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &xi| a + xi * xi).sqrt()
}

/// `v(t, theta) = e^{(4-n)t/2} (U_sph u)(e^{-t} theta)`, with `u` relative
/// to the round factor.
pub fn cyl_from_euclid<T: Real>(u: impl Fn(&[T]) -> Result<T>, t: T, theta: &[T], n: u32) -> Result<T> {
    let e = (-t).exp();
    let x: Vec<T> = theta.iter().map(|&th| e * th).collect();
    let r2 = x.iter().fold(T::zero(), |a, &xi| a + xi * xi);
    Ok((-weight::<T>(n) * t).exp() * u_sph_at(r2, n) * u(&x)?)
}

/// Inverse of [`cyl_from_euclid`].
pub fn euclid_from_cyl<T: Real>(v: impl Fn(T, &[T]) -> Result<T>, x: &[T], n: u32) -> Result<T> {
    let r = norm(x);
    if !(r > T::zero()) {
        return Err(Error::Domain("x = 0 has no cylindrical image".into()));
    }
    let theta: Vec<T> = x.iter().map(|&xi| xi / r).collect();
    let t = -r.ln();
    Ok((weight::<T>(n) * t).exp() * v(t, &theta)? / u_sph_at(r * r, n))
}

/// Flat convention: `v(t, theta) = e^{(4-n)t/2} u(e^{-t} theta)`.
pub fn cyl_from_euclid_flat<T: Real>(u: impl Fn(&[T]) -> Result<T>, t: T, theta: &[T], n: u32) -> Result<T> {
    let e = (-t).exp();
    let x: Vec<T> = theta.iter().map(|&th| e * th).collect();
    Ok((-weight::<T>(n) * t).exp() * u(&x)?)
}

/// Flat convention inverse: `u(x) = |x|^{(4-n)/2} v(-log|x|, x/|x|)`.
pub fn euclid_from_cyl_flat<T: Real>(v: impl Fn(T, &[T]) -> Result<T>, x: &[T], n: u32) -> Result<T> {
    let r = norm(x);
    if !(r > T::zero()) {
        return Err(Error::Domain("x = 0 has no cylindrical image".into()));
    }
    let theta: Vec<T> = x.iter().map(|&xi| xi / r).collect();
    Ok(r.powf(-weight::<T>(n)) * v(-r.ln(), &theta)?)
}

/// Defect `Lap^2 u_lambda - A u_lambda^{(n+4)/(n-4)}` at radius `r`.
pub fn scaling_check<T: Real, P: RadialProfile<T> + ?Sized>(u: &P, lambda: T, r: T, n: u32, a: T) -> Result<T> {
    check_dim(n)?;
    if !(lambda > T::zero()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let p = (T::int(n) + T::lit(4.0)) / (T::int(n) - T::lit(4.0));
    let scaled = ScaledProfile { inner: u, lambda, n };
    Ok(radial_bilaplacian(&scaled, r, n)? - a * scaled.value(r)?.powf(p))
}
