//! Dimension-indexed constants of the cylindrical constant Q-curvature ODE
//!
//! ```text
//! v'''' - c2 v'' + c0 v = c_rhs v^p,
//! c2 = (n(n-4)+8)/2,  c0 = n^2(n-4)^2/16,  c_rhs = n(n-4)(n^2-4)/16,  p = (n+4)/(n-4).
//! ```

use num_rational::Ratio;
use serde::Serialize;

use crate::{Error, Real, Result};

/// Smallest admissible dimension.
pub const MIN_DIM: u32 = 5;
/// Largest dimension accepted without widening the range.
pub const MAX_DIM: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeCoefficients<T> {
    pub n: u32,
    pub c2: T,
    pub c0: T,
    pub c_rhs: T,
    /// Critical exponent `(n+4)/(n-4)`.
    pub p: T,
    /// Necksize of the cylinder, the only constant solution.
    pub eps_n: T,
    /// Area of the unit `(n-1)`-sphere.
    pub sphere_area: T,
}

impl<T: Real> OdeCoefficients<T> {
    /// Coefficients for `n` in `5..=12`.
    pub fn new(n: u32) -> Result<Self> {
        if !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(Error::Dimension { n, min: MIN_DIM, max: MAX_DIM });
        }
        Ok(Self::build(n))
    }

    /// Coefficients for any `n >= 5`.
    pub fn with_wide_range(n: u32) -> Result<Self> {
        if n < MIN_DIM {
            return Err(Error::Dimension { n, min: MIN_DIM, max: u32::MAX });
        }
        Ok(Self::build(n))
    }

    fn build(n: u32) -> Self {
        let nf = T::int(n);
        let m4 = nf - T::lit(4.0);
        let two = T::lit(2.0);
        let sixteen = T::lit(16.0);
        let c2 = (nf * m4 + T::lit(8.0)) / two;
        let c0 = nf * nf * m4 * m4 / sixteen;
        let c_rhs = nf * m4 * (nf * nf - T::lit(4.0)) / sixteen;
        let p = (nf + T::lit(4.0)) / m4;
        let eps_n = (nf * m4 / (nf * nf - T::lit(4.0))).powf(m4 / T::lit(8.0));
        Self { n, c2, c0, c_rhs, p, eps_n, sphere_area: sphere_area(n) }
    }

    pub fn dim(&self) -> T {
        T::int(self.n)
    }

    /// Conformal weight `(n-4)/2`.
    pub fn weight(&self) -> T {
        (self.dim() - T::lit(4.0)) / T::lit(2.0)
    }

    /// Energy exponent `2n/(n-4) = p + 1`.
    pub fn energy_exponent(&self) -> T {
        T::lit(2.0) * self.dim() / (self.dim() - T::lit(4.0))
    }

    /// Coefficient `(n-4)^2 (n^2-4)/32 = c_rhs/(p+1)` of the potential term.
    pub fn potential_coeff(&self) -> T {
        let nf = self.dim();
        let m4 = nf - T::lit(4.0);
        m4 * m4 * (nf * nf - T::lit(4.0)) / T::lit(32.0)
    }

    /// Closed-form energy of the cylinder,
    /// `-((n-4)(n^2-4)/8) (n(n-4)/(n^2-4))^{n/4}`.
    pub fn cylinder_energy(&self) -> T {
        let nf = self.dim();
        let m4 = nf - T::lit(4.0);
        let q = nf * nf - T::lit(4.0);
        -(m4 * q / T::lit(8.0)) * (nf * m4 / q).powf(nf / T::lit(4.0))
    }

    /// Frequency of small oscillations about the cylinder:
    /// `omega^2 = (sqrt(c2^2 + 4 c0 (p-1)) - c2) / 2`.
    pub fn linearized_frequency(&self) -> T {
        let disc = (self.c2 * self.c2 + T::lit(4.0) * self.c0 * (self.p - T::one())).sqrt();
        ((disc - self.c2) / T::lit(2.0)).sqrt()
    }

    pub fn linearized_period(&self) -> T {
        T::lit(2.0) * T::PI() / self.linearized_frequency()
    }

    /// Real growth rate of the hyperbolic mode at the cylinder.
    pub fn linearized_growth(&self) -> T {
        let disc = (self.c2 * self.c2 + T::lit(4.0) * self.c0 * (self.p - T::one())).sqrt();
        ((disc + self.c2) / T::lit(2.0)).sqrt()
    }
}

/// `Gamma(k/2)` for a positive integer `k`, by the half-integer recurrence.
pub fn gamma_half<T: Real>(k: u32) -> T {
    assert!(k >= 1, "Gamma(k/2) needs k >= 1");
    let (mut acc, mut x) = if k.is_multiple_of(2) { (T::one(), T::one()) } else { (T::PI().sqrt(), T::lit(0.5)) };
    let target = T::int(k) / T::lit(2.0);
    while x < target {
        acc = acc * x;
        x = x + T::one();
    }
    acc
}

/// Area of the unit `(n-1)`-sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn sphere_area<T: Real>(n: u32) -> T {
    assert!(n >= 2, "sphere_area needs n >= 2");
    let half = T::int(n) / T::lit(2.0);
    T::lit(2.0) * T::PI().powf(half) / gamma_half(n)
}

/// The rational ODE coefficients, for exact identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCoefficients {
    pub n: u32,
    pub c2: Ratio<i64>,
    pub c0: Ratio<i64>,
    pub c_rhs: Ratio<i64>,
    pub p: Ratio<i64>,
}

impl ExactCoefficients {
    pub fn new(n: u32) -> Result<Self> {
        if n < MIN_DIM {
            return Err(Error::Dimension { n, min: MIN_DIM, max: u32::MAX });
        }
        let k = n as i64;
        Ok(Self {
            n,
            c2: Ratio::new(k * (k - 4) + 8, 2),
            c0: Ratio::new(k * k * (k - 4) * (k - 4), 16),
            c_rhs: Ratio::new(k * (k - 4) * (k * k - 4), 16),
            p: Ratio::new(k + 4, k - 4),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn n5_values() {
        let c = OdeCoefficients::<f64>::new(5).unwrap();
        assert_eq!(c.c2, 6.5);
        assert_eq!(c.c0, 25.0 / 16.0);
        assert_eq!(c.c_rhs, 105.0 / 16.0);
        assert_eq!(c.p, 9.0);
        assert_relative_eq!(c.eps_n, (5.0f64 / 21.0).powf(0.125), max_relative = 1e-15);
    }

    #[test]
    fn exact_n5() {
        let e = ExactCoefficients::new(5).unwrap();
        assert_eq!(e.c2, Ratio::new(13, 2));
        assert_eq!(e.c0, Ratio::new(25, 16));
        assert_eq!(e.c_rhs, Ratio::new(105, 16));
        assert_eq!(e.p, Ratio::from_integer(9));
    }

    #[test]
    fn constant_solution_identity() {
        for n in MIN_DIM..=MAX_DIM {
            let c = OdeCoefficients::<f64>::new(n).unwrap();
            let lhs = c.c0 * c.eps_n;
            let rhs = c.c_rhs * c.eps_n.powf(c.p);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            assert!(c.eps_n > 0.0 && c.eps_n < 1.0);
            assert!(c.c2 > 0.0 && c.c0 > 0.0 && c.c_rhs > 0.0 && c.p > 1.0);
        }
    }

    #[test]
    fn eps_n_decreasing() {
        let e: Vec<f64> = (MIN_DIM..=MAX_DIM).map(|n| OdeCoefficients::<f64>::new(n).unwrap().eps_n).collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn rejects_small_dimension() {
        assert!(matches!(OdeCoefficients::<f64>::new(4), Err(Error::Dimension { n: 4, .. })));
        assert!(OdeCoefficients::<f64>::new(13).is_err());
        assert!(OdeCoefficients::<f64>::with_wide_range(13).is_ok());
        assert!(ExactCoefficients::new(3).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area::<f64>(2), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area::<f64>(3), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area::<f64>(5), 8.0 * PI * PI / 3.0, max_relative = 1e-15);
    }

    // |S^{n-1}| = n |B^n|; estimate |B^5| by hit-or-miss sampling of the cube.
    #[test]
    fn sphere_area_monte_carlo() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let trials = 2_000_000;
        let mut hits = 0usize;
        for _ in 0..trials {
            let r2: f64 = (0..5).map(|_| next().powi(2)).sum();
            if r2 <= 1.0 {
                hits += 1;
            }
        }
        let ball = 32.0 * hits as f64 / trials as f64;
        assert_relative_eq!(5.0 * ball, sphere_area::<f64>(5), max_relative = 5e-3);
    }

    #[test]
    fn generic_f32() {
        let c = OdeCoefficients::<f32>::new(6).unwrap();
        assert!((c.c0 * c.eps_n - c.c_rhs * c.eps_n.powf(c.p)).abs() < 1e-5);
        assert!((c.cylinder_energy() as f64 - OdeCoefficients::<f64>::new(6).unwrap().cylinder_energy()).abs() < 1e-5);
    }

    #[test]
    fn cylinder_energy_matches_direct() {
        for n in MIN_DIM..=MAX_DIM {
            let c = OdeCoefficients::<f64>::new(n).unwrap();
            let e = c.eps_n;
            let direct = -0.5 * c.c0 * e * e + c.potential_coeff() * e.powf(c.energy_exponent());
            assert_relative_eq!(direct, c.cylinder_energy(), max_relative = 1e-12);
            assert_relative_eq!(c.potential_coeff(), c.c_rhs / (c.p + 1.0), max_relative = 1e-15);
        }
    }
}
