//! Truncated bivariate Taylor series in `(t, s)` up to total degree
//! [`DEGREE`], used as a forward-mode automatic differentiation engine.
//!
//! A series stores `c[i][j]`, the coefficient of `dt^i ds^j`; partial
//! derivatives are recovered as `i! j! c[i][j]`. Univariate use simply
//! leaves the `s` direction unseeded.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::Real;

pub const DEGREE: usize = 4;
const W: usize = DEGREE + 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Series2<T> {
    c: [[T; W]; W],
}

fn factorial<T: Real>(k: usize) -> T {
    (1..=k).fold(T::one(), |acc, i| acc * T::lit(i as f64))
}

impl<T: Real> Series2<T> {
    pub fn constant(x: T) -> Self {
        let mut c = [[T::zero(); W]; W];
        c[0][0] = x;
        Self { c }
    }

    /// The `t` coordinate seeded at `x`.
    pub fn var_t(x: T) -> Self {
        let mut s = Self::constant(x);
        s.c[1][0] = T::one();
        s
    }

    /// The `s` coordinate seeded at `x`.
    pub fn var_s(x: T) -> Self {
        let mut s = Self::constant(x);
        s.c[0][1] = T::one();
        s
    }

    pub fn value(&self) -> T {
        self.c[0][0]
    }

    pub fn coeff(&self, i: usize, j: usize) -> T {
        self.c[i][j]
    }

    /// `d^{i+j} / dt^i ds^j` at the expansion point.
    pub fn partial(&self, i: usize, j: usize) -> T {
        assert!(i + j <= DEGREE);
        self.c[i][j] * factorial::<T>(i) * factorial::<T>(j)
    }

    /// Derivatives in `t` alone, orders `0..=DEGREE`.
    pub fn t_derivatives(&self) -> [T; W] {
        let mut out = [T::zero(); W];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.partial(k, 0);
        }
        out
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut c = self.c;
        for row in c.iter_mut() {
            for x in row.iter_mut() {
                *x = f(*x);
            }
        }
        Self { c }
    }

    /// `f(self)` given the derivatives `f(x0), f'(x0), ..., f^{(4)}(x0)`
    /// of a univariate function at the current value.
    pub fn compose(&self, derivs: [T; W]) -> Self {
        let mut delta = *self;
        delta.c[0][0] = T::zero();
        let mut out = Self::constant(derivs[0]);
        let mut power = Self::constant(T::one());
        for (k, &d) in derivs.iter().enumerate().skip(1) {
            power = power * delta;
            out = out + power * (d / factorial::<T>(k));
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e; W])
    }

    pub fn ln(&self) -> Self {
        let x = self.value();
        let mut d = [T::zero(); W];
        d[0] = x.ln();
        let mut xk = T::one();
        for (k, dk) in d.iter_mut().enumerate().skip(1) {
            xk = xk * x;
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            *dk = sign * factorial::<T>(k - 1) / xk;
        }
        self.compose(d)
    }

    pub fn powf(&self, a: T) -> Self {
        let x = self.value();
        let mut d = [T::zero(); W];
        let mut falling = T::one();
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = falling * x.powf(a - T::lit(k as f64));
            falling = falling * (a - T::lit(k as f64));
        }
        self.compose(d)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(T::lit(0.5))
    }

    pub fn recip(&self) -> Self {
        self.powf(-T::one())
    }

    pub fn cosh(&self) -> Self {
        let (c, s) = (self.value().cosh(), self.value().sinh());
        self.compose([c, s, c, s, c])
    }
}

#[allow(clippy::needless_range_loop)]
impl<T: Real> Add for Series2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut c = self.c;
        for i in 0..W {
            for j in 0..W - i {
                c[i][j] = c[i][j] + o.c[i][j];
            }
        }
        Self { c }
    }
}

impl<T: Real> Sub for Series2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Real> Neg for Series2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|x| -x)
    }
}

impl<T: Real> Mul for Series2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut c = [[T::zero(); W]; W];
        for i1 in 0..W {
            for j1 in 0..W - i1 {
                let a = self.c[i1][j1];
                if a == T::zero() {
                    continue;
                }
                for i2 in 0..W - i1 - j1 {
                    for j2 in 0..W - i1 - j1 - i2 {
                        c[i1 + i2][j1 + j2] = c[i1 + i2][j1 + j2] + a * o.c[i2][j2];
                    }
                }
            }
        }
        Self { c }
    }
}

impl<T: Real> Div for Series2<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<T: Real> Add<T> for Series2<T> {
    type Output = Self;
    fn add(self, k: T) -> Self {
        let mut s = self;
        s.c[0][0] = s.c[0][0] + k;
        s
    }
}

impl<T: Real> Sub<T> for Series2<T> {
    type Output = Self;
    fn sub(self, k: T) -> Self {
        self + (-k)
    }
}

impl<T: Real> Mul<T> for Series2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        self.map(|x| x * k)
    }
}

impl<T: Real> Div<T> for Series2<T> {
    type Output = Self;
    fn div(self, k: T) -> Self {
        self.map(|x| x / k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_partials() {
        // f = t^2 s + 3 t s^2 at (2, -1)
        let t = Series2::var_t(2.0);
        let s = Series2::var_s(-1.0);
        let f = t * t * s + t * s * s * 3.0;
        assert_relative_eq!(f.value(), -4.0 + 6.0);
        assert_relative_eq!(f.partial(1, 0), -(2.0 * 2.0) + 3.0);
        assert_relative_eq!(f.partial(0, 1), 4.0 + -(3.0 * 2.0 * 2.0));
        assert_relative_eq!(f.partial(1, 1), 2.0 * 2.0 + -6.0);
        assert_relative_eq!(f.partial(2, 1), 2.0);
        assert_relative_eq!(f.partial(3, 0), 0.0);
    }

    #[test]
    fn exp_ln_roundtrip() {
        let x = Series2::var_t(0.7) + Series2::var_s(0.2) * 0.5;
        let y = x.exp().ln();
        for i in 0..W {
            for j in 0..W - i {
                assert_relative_eq!(y.coeff(i, j), x.coeff(i, j), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cosh_power_derivatives() {
        // (cosh t)^(-1/2): f'' (0) = -1/2, f''''(0) = 7/4
        let f = Series2::var_t(0.0).cosh().powf(-0.5);
        let d = f.t_derivatives();
        assert_relative_eq!(d[0], 1.0);
        assert_relative_eq!(d[1], 0.0);
        assert_relative_eq!(d[2], -0.5, epsilon = 1e-15);
        assert_relative_eq!(d[3], 0.0);
        assert_relative_eq!(d[4], 1.75, epsilon = 1e-14);
    }

    #[test]
    fn division() {
        let t = Series2::var_t(1.5);
        let q = (t * t + 1.0) / t;
        // t + 1/t
        assert_relative_eq!(q.partial(1, 0), 1.0 - 1.0 / 2.25, epsilon = 1e-15);
        assert_relative_eq!(q.partial(2, 0), 2.0 / 3.375, epsilon = 1e-15);
    }
}
