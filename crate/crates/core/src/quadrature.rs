//! Gauss quadrature for axisymmetric integrands on the unit sphere.
//!
//! For `f` depending only on `s = <theta, a>`,
//! `int_{S^{n-1}} f dtheta = |S^{n-2}| int_{-1}^{1} f(s) (1-s^2)^{(n-3)/2} ds`.
//! The weight is Gegenbauer with `lambda = (n-2)/2`; nodes come from the
//! Jacobi matrix by Sturm bisection and a Newton polish, and weights are
//! normalized to sum to one so that the slice integral is
//! `sphere_area(n) * sum w_k f(s_k)`.

use crate::coefficients::sphere_area;
use crate::{Error, Real, Result};

pub const DEFAULT_ORDER: usize = 64;
/// Relative change between the `m` and `2m` rules that counts as under-resolved.
pub const SELF_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussRule<T> {
    /// The `m`-point Gauss–Gegenbauer rule for dimension `n >= 3`.
    pub fn gegenbauer(n: u32, m: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Dimension { n, min: 3, max: u32::MAX });
        }
        if m == 0 {
            return Err(Error::InvalidConfig("quadrature order must be at least 1".into()));
        }
        let lambda = (T::int(n) - T::lit(2.0)) / T::lit(2.0);
        // off-diagonal of the orthonormal Jacobi matrix; b[k] couples p_{k-1}, p_k
        let b: Vec<T> = (0..m)
            .map(|k| {
                if k == 0 {
                    return T::zero();
                }
                let kf = T::lit(k as f64);
                let num = kf * (kf + T::lit(2.0) * lambda - T::one());
                let den = T::lit(4.0) * (kf + lambda) * (kf + lambda - T::one());
                (num / den).sqrt()
            })
            .collect();

        // Number of eigenvalues below x (Sturm count on the LDL^T pivots).
        let count_below = |x: T| -> usize {
            let mut d = -x;
            let mut neg = usize::from(d < T::zero());
            for bk in b.iter().skip(1) {
                if d == T::zero() {
                    d = T::epsilon();
                }
                d = -x - *bk * *bk / d;
                if d < T::zero() {
                    neg += 1;
                }
            }
            neg
        };
        // Orthonormal values p_0..p_m at x, and p_m'.
        let eval = |x: T| -> (Vec<T>, T) {
            let mut p = vec![T::one(); m + 1];
            let mut dp = vec![T::zero(); m + 1];
            let bm = {
                let kf = T::lit(m as f64);
                let num = kf * (kf + T::lit(2.0) * lambda - T::one());
                let den = T::lit(4.0) * (kf + lambda) * (kf + lambda - T::one());
                (num / den).sqrt()
            };
            for k in 0..m {
                let next_b = if k + 1 < m { b[k + 1] } else { bm };
                let (pm1, dpm1) = if k == 0 { (T::zero(), T::zero()) } else { (p[k - 1], dp[k - 1]) };
                p[k + 1] = (x * p[k] - b[k] * pm1) / next_b;
                dp[k + 1] = (p[k] + x * dp[k] - b[k] * dpm1) / next_b;
            }
            (p, dp[m])
        };

        let mut nodes = Vec::with_capacity(m);
        for k in 0..m {
            let (mut lo, mut hi) = (-T::one(), T::one());
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if count_below(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut x = (lo + hi) / T::lit(2.0);
            for _ in 0..3 {
                let (p, dp) = eval(x);
                if dp == T::zero() {
                    break;
                }
                let step = p[m] / dp;
                if step.abs() < (hi - lo).abs() * T::lit(4.0) + T::epsilon() {
                    x = x - step;
                }
            }
            nodes.push(x);
        }
        let mut weights: Vec<T> = nodes
            .iter()
            .map(|&x| {
                let (p, _) = eval(x);
                T::one() / p[..m].iter().fold(T::zero(), |acc, &pk| acc + pk * pk)
            })
            .collect();
        let total = weights.iter().fold(T::zero(), |a, &w| a + w);
        for w in &mut weights {
            *w = *w / total;
        }
        Ok(Self { nodes, weights })
    }

    /// Weighted mean `sum w_k f(s_k)`.
    pub fn mean<E>(&self, mut f: impl FnMut(T) -> Result<T, E>) -> Result<T, E> {
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + w * f(x)?;
        }
        Ok(acc)
    }
}

/// A pair of rules of orders `m` and `2m` over `S^{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceQuadrature<T> {
    pub n: u32,
    pub order: usize,
    pub rule: GaussRule<T>,
    pub refined: GaussRule<T>,
    pub area: T,
}

impl<T: Real> SliceQuadrature<T> {
    pub fn new(n: u32, order: usize) -> Result<Self> {
        Ok(Self {
            n,
            order,
            rule: GaussRule::gegenbauer(n, order)?,
            refined: GaussRule::gegenbauer(n, 2 * order)?,
            area: sphere_area(n),
        })
    }

    pub fn with_default_order(n: u32) -> Result<Self> {
        Self::new(n, DEFAULT_ORDER)
    }

    /// `int_{S^{n-1}} f(s) dtheta` with the order-`m` rule only.
    pub fn integrate_unchecked(&self, f: impl FnMut(T) -> Result<T>) -> Result<T> {
        Ok(self.area * self.rule.mean(f)?)
    }

    /// `int_{S^{n-1}} f(s) dtheta`, comparing the `m` and `2m` rules.
    ///
    /// Returns the `2m` value, or [`Error::QuadratureUnderResolved`] when the
    /// two differ by more than [`SELF_CHECK_TOL`] relative.
    pub fn integrate(&self, mut f: impl FnMut(T) -> Result<T>) -> Result<T> {
        let coarse = self.rule.mean(&mut f)?;
        let fine = self.refined.mean(&mut f)?;
        let scale = fine.abs().max(T::lit(1e-300));
        let rel = (fine - coarse).abs() / scale;
        // absolute floor for integrands that cancel to ~0
        if rel > T::lit(SELF_CHECK_TOL) && (fine - coarse).abs() > T::lit(1e-14) {
            return Err(Error::QuadratureUnderResolved { rel_change: rel.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(self.area * fine)
    }
}
