//! Periodic Delaunay orbits of the cylindrical ODE by shooting on `v''(0)`,
//! and their Euclidean and translated evaluations.

use serde::Serialize;

use crate::coefficients::OdeCoefficients;
use crate::ode::{derivative_tower, hamiltonian, hermite_two_point, integrate, IntegratorConfig, Stepper, TOWER};
use crate::optimize::brent_root;
use crate::state::CylState;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShootingConfig<T> {
    pub kappa_bracket_growth: T,
    pub half_period_tol: T,
    pub max_bisections: usize,
    /// Smallest necksize attempted; below it shooting reports `Degenerate`.
    pub min_eps: T,
    /// Samples per period in the stored table (even).
    pub samples_per_period: usize,
    pub integrator: IntegratorConfig<T>,
}

impl<T: Real> Default for ShootingConfig<T> {
    fn default() -> Self {
        Self {
            kappa_bracket_growth: T::lit(2.0),
            half_period_tol: T::lit(1e-10),
            max_bisections: 200,
            min_eps: T::lit(1e-3),
            samples_per_period: 1024,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl<T: Real> ShootingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if !(self.kappa_bracket_growth > T::one()) {
            return Err(Error::InvalidConfig("kappa_bracket_growth must exceed 1".into()));
        }
        if !(self.half_period_tol > T::zero()) || !(self.min_eps > T::zero()) || self.max_bisections == 0 {
            return Err(Error::InvalidConfig("shooting tolerances must be positive".into()));
        }
        if self.samples_per_period < 8 || self.samples_per_period % 2 == 1 {
            return Err(Error::InvalidConfig("samples_per_period must be even and at least 8".into()));
        }
        Ok(())
    }
}

/// Value and first three derivatives of `(cosh t)^{(4-n)/2}`.
pub fn v_sph<T: Real>(t: T, n: u32) -> CylState<T> {
    let q = (T::int(n) - T::lit(4.0)) / T::lit(2.0);
    let u = t.tanh();
    let f = t.cosh().powf(-q);
    let du = T::one() - u * u;
    let g2 = (q * q + q) * u * u - q;
    let d1 = -q * u * f;
    let d2 = g2 * f;
    let d3 = T::lit(2.0) * (q * q + q) * u * du * f - q * u * g2 * f;
    CylState::new(f, d1, d2, d3)
}

/// A periodic solution of the cylindrical ODE with minimum `eps` at `t = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct DelaunayOrbit<T> {
    pub n: u32,
    pub eps: T,
    pub kappa: T,
    /// Minimal period; for the cylinder, the linearization period.
    pub period: T,
    pub ham_level: T,
    pub constant: bool,
    /// `|v'''|` at the computed half period.
    pub half_period_residual: T,
    /// `(t, state)` on a uniform grid over `[0, period]`, both ends included.
    pub samples: Vec<(T, CylState<T>)>,
    #[serde(skip)]
    towers: Vec<[T; TOWER]>,
    #[serde(skip)]
    coeffs: OdeCoefficients<T>,
}

/// Outcome of one shooting trial.
enum Trial<T> {
    /// `v'` returned to zero at `tau` with the given `v'''`.
    Turn { tau: T, d3v: T },
    /// The orbit escaped (blow-up or no turn before the time limit).
    Escape,
}

fn trial_sign<T: Real>(trial: &Trial<T>) -> T {
    match trial {
        Trial::Turn { d3v, .. } => d3v.signum(),
        Trial::Escape => T::one(),
    }
}

/// Integrates from the minimum until `v'` first returns to zero.
fn shoot_once<T: Real>(eps: T, kappa: T, coeffs: &OdeCoefficients<T>, cfg: &IntegratorConfig<T>) -> Result<Trial<T>> {
    let start = CylState::at_minimum(eps, kappa);
    let mut stepper = Stepper::new(start, T::zero(), coeffs, cfg)?;
    let limit = cfg.max_time;
    while stepper.t < limit {
        let info = match stepper.advance(limit) {
            Ok(info) => info,
            Err(Error::BlowUp { .. }) => return Ok(Trial::Escape),
            Err(e) => return Err(e),
        };
        let dv = stepper.y[1];
        if dv <= T::zero() && info.t0 == T::zero() {
            // turned back within the first step: kappa is far too small
            return Ok(Trial::Turn { tau: stepper.t, d3v: -T::one() });
        }
        if dv <= T::zero() && info.y0[1] > T::zero() {
            // locate the zero of v' inside the last step by partial steps
            let partial = |theta: T| -> Result<[T; 4]> {
                stepper
                    .try_step(info.y0, info.f0, theta)
                    .map(|(y, _, _)| y)
                    .ok_or(Error::PositivityLost { t: (info.t0 + theta).to_f64().unwrap_or(f64::NAN) })
            };
            let h = info.h;
            let tol = T::epsilon() * T::lit(4.0) * (info.t0 + h).max(T::one());
            let root = brent_root(|theta| Ok::<_, Error>(partial(theta)?[1]), T::zero(), h, tol, 200)?;
            let theta = match root {
                Some(r) => r.x,
                None => h,
            };
            let y = if theta == h { stepper.y } else { partial(theta)? };
            return Ok(Trial::Turn { tau: info.t0 + theta, d3v: y[3] });
        }
    }
    Ok(Trial::Escape)
}

/// Builds the Delaunay orbit with minimum `eps`.
///
/// `eps` must lie in `[min_eps, eps_n]`; `eps = eps_n` gives the constant
/// cylinder orbit with the linearization period.
pub fn shoot_delaunay<T: Real>(eps: T, coeffs: &OdeCoefficients<T>, config: &ShootingConfig<T>) -> Result<DelaunayOrbit<T>> {
    config.validate()?;
    let eps_f = eps.to_f64().unwrap_or(f64::NAN);
    let eps_n = coeffs.eps_n;
    if !(eps > T::zero()) || eps > eps_n * (T::one() + T::lit(1e-12)) {
        return Err(Error::NoBracket { eps: eps_f });
    }
    if eps < config.min_eps {
        return Err(Error::Degenerate { eps: eps_f, cutoff: config.min_eps.to_f64().unwrap_or(f64::NAN) });
    }
    if (eps - eps_n).abs() <= T::lit(1e-12) * eps_n {
        return Ok(DelaunayOrbit::cylinder(coeffs, config.samples_per_period));
    }
    let cfg = &config.integrator;

    // Bracket: kappa = 0 turns back with v''' < 0; grow until the orbit escapes.
    // (at kappa = 0, v''''(0) = c_rhs eps^p - c0 eps < 0 for eps < eps_n)
    let mut lo = T::zero();
    let mut hi = T::lit(1e-6).max(T::lit(1e-3) * (eps_n - eps));
    let mut found = false;
    for _ in 0..200 {
        let trial = shoot_once(eps, hi, coeffs, cfg)?;
        if trial_sign(&trial) > T::zero() {
            found = true;
            break;
        }
        lo = hi;
        hi = hi * config.kappa_bracket_growth;
    }
    if !found {
        return Err(Error::NoBracket { eps: eps_f });
    }

    // Bisection on the sign of v''' at the turn.
    let mut best: Option<(T, T, T)> = None; // (kappa, tau, |v'''|)
    let mut consider = |kappa: T, trial: &Trial<T>| {
        if let Trial::Turn { tau, d3v } = trial {
            if best.is_none_or(|(_, _, r)| d3v.abs() < r) {
                best = Some((kappa, *tau, d3v.abs()));
            }
        }
    };
    for _ in 0..config.max_bisections {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let trial = shoot_once(eps, mid, coeffs, cfg)?;
        consider(mid, &trial);
        if let Trial::Turn { d3v, .. } = trial {
            if d3v.abs() <= config.half_period_tol {
                break;
            }
        }
        if trial_sign(&trial) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let Some((kappa, tau, residual)) = best else {
        return Err(Error::NoBracket { eps: eps_f });
    };

    let start = CylState::at_minimum(eps, kappa);
    let half = integrate(start, T::zero(), tau, &[], coeffs, cfg)?;
    let n_samples = config.samples_per_period;
    let period = T::lit(2.0) * tau;
    let dt = period / T::lit(n_samples as f64);
    let mut samples = Vec::with_capacity(n_samples + 1);
    for k in 0..=n_samples / 2 {
        let t = T::lit(k as f64) * dt;
        let s = if k == 0 { start } else { half.eval(t) };
        samples.push((t, s));
    }
    for k in n_samples / 2 + 1..=n_samples {
        let mirror = samples[n_samples - k].1.reflected();
        samples.push((T::lit(k as f64) * dt, mirror));
    }
    // the last sample is the exact start state
    samples[n_samples].1 = start;
    let towers = samples.iter().map(|(_, s)| derivative_tower(*s, coeffs)).collect::<Result<Vec<_>>>()?;
    Ok(DelaunayOrbit {
        n: coeffs.n,
        eps,
        kappa,
        period,
        ham_level: hamiltonian(start, coeffs)?,
        constant: false,
        half_period_residual: residual,
        samples,
        towers,
        coeffs: *coeffs,
    })
}

impl<T: Real> DelaunayOrbit<T> {
    /// The cylinder `v = eps_n`, with the linearization period.
    pub fn cylinder(coeffs: &OdeCoefficients<T>, samples_per_period: usize) -> Self {
        let period = coeffs.linearized_period();
        let state = CylState::constant(coeffs.eps_n);
        let dt = period / T::lit(samples_per_period as f64);
        let samples: Vec<_> = (0..=samples_per_period).map(|k| (T::lit(k as f64) * dt, state)).collect();
        let tower = derivative_tower(state, coeffs).expect("eps_n > 0");
        Self {
            n: coeffs.n,
            eps: coeffs.eps_n,
            kappa: T::zero(),
            period,
            ham_level: coeffs.cylinder_energy(),
            constant: true,
            half_period_residual: T::zero(),
            towers: vec![tower; samples.len()],
            samples,
            coeffs: *coeffs,
        }
    }

    pub fn coeffs(&self) -> &OdeCoefficients<T> {
        &self.coeffs
    }

    /// State at `t`, by periodic extension of the sample table.
    pub fn eval(&self, t: T) -> CylState<T> {
        let n = self.samples.len() - 1;
        let mut tr = t % self.period;
        if tr < T::zero() {
            tr = tr + self.period;
        }
        let dt = self.period / T::lit(n as f64);
        let i = (tr / dt).floor().to_usize().unwrap_or(0).min(n - 1);
        let x = tr - T::lit(i as f64) * dt;
        let (l, r) = (&self.towers[i], &self.towers[i + 1]);
        let comp = |k: usize| hermite_two_point(dt, &l[k..k + 4], &r[k..k + 4], x);
        CylState::new(comp(0), comp(1), comp(2), comp(3))
    }

    /// The fourth derivative at `t`, from the ODE.
    pub fn fourth_derivative(&self, t: T) -> T {
        let s = self.eval(t);
        let c = &self.coeffs;
        c.c2 * s.d2v - c.c0 * s.v + c.c_rhs * s.v.powf(c.p)
    }

    pub fn min_v(&self) -> T {
        self.samples.iter().fold(T::infinity(), |m, (_, s)| m.min(s.v))
    }

    pub fn max_v(&self) -> T {
        self.samples.iter().fold(T::neg_infinity(), |m, (_, s)| m.max(s.v))
    }

    /// `u(x) = |x|^{(4-n)/2} v(-log |x|)`.
    pub fn euclid(&self, x: &[T]) -> Result<T> {
        let r = x.iter().fold(T::zero(), |a, &xi| a + xi * xi).sqrt();
        if !(r > T::zero()) {
            return Err(Error::Domain("the puncture x = 0 is excluded".into()));
        }
        Ok(r.powf(-self.coeffs.weight()) * self.eval(-r.ln()).v)
    }

    /// Translated Delaunay `|theta - e^{-t} a|^{(4-n)/2} v(t + phase + log|theta - e^{-t} a|)`
    /// for axisymmetric data: `a_norm = |a|`, `s = <theta, a/|a|>`.
    pub fn translated(&self, a_norm: T, t: T, s: T, phase: T) -> Result<T> {
        let x = a_norm * (-t).exp();
        let rho2 = T::one() - T::lit(2.0) * x * s + x * x;
        if !(rho2 > T::zero()) {
            return Err(Error::Domain("theta coincides with e^{-t} a".into()));
        }
        let rho = rho2.sqrt();
        Ok(rho.powf(-self.coeffs.weight()) * self.eval(t + phase + rho.ln()).v)
    }

    /// Vector form of [`Self::translated`] with `theta` on the unit sphere.
    pub fn translated_vec(&self, a: &[T], t: T, theta: &[T]) -> Result<T> {
        if a.len() != theta.len() {
            return Err(Error::Domain("a and theta must have the same length".into()));
        }
        let e = (-t).exp();
        let rho2 = a.iter().zip(theta).fold(T::zero(), |acc, (&ai, &th)| {
            let d = th - e * ai;
            acc + d * d
        });
        if !(rho2 > T::zero()) {
            return Err(Error::Domain("theta coincides with e^{-t} a".into()));
        }
        let rho = rho2.sqrt();
        Ok(rho.powf(-self.coeffs.weight()) * self.eval(t + rho.ln()).v)
    }

    /// First-order expansion `v(t) + e^{-t} |a| s (-v'(t) + ((n-4)/2) v(t))`.
    pub fn translated_linear(&self, a_norm: T, t: T, s: T, phase: T) -> T {
        let st = self.eval(t + phase);
        st.v + (-t).exp() * a_norm * s * (-st.dv + self.coeffs.weight() * st.v)
    }
}

/// `delaunay_eval`: orbit state at `t`.
pub fn delaunay_eval<T: Real>(orbit: &DelaunayOrbit<T>, t: T) -> CylState<T> {
    orbit.eval(t)
}

/// `u_eps(x) = |x|^{(4-n)/2} v_eps(-log|x|)`.
pub fn euclid_delaunay<T: Real>(orbit: &DelaunayOrbit<T>, x: &[T]) -> Result<T> {
    orbit.euclid(x)
}

/// Translated Delaunay at `(t, s)` for `|a| = a_norm`.
pub fn translated_delaunay<T: Real>(orbit: &DelaunayOrbit<T>, a_norm: T, t: T, s: T) -> Result<T> {
    orbit.translated(a_norm, t, s, T::zero())
}
