//! The cylindrical ODE, its conserved energy, and an adaptive Dormand–Prince
//! 5(4) integrator with PI step control and Hermite dense output.

use serde::Serialize;

use crate::coefficients::OdeCoefficients;
use crate::state::CylState;
use crate::{Error, Real, Result};

/// Overflow guard on `|v|`; exceeding it is reported as [`Error::BlowUp`].
pub const BLOWUP_V: f64 = 1e6;
/// Overflow guard on the Euclidean norm of the state.
pub const BLOWUP_NORM: f64 = 1e8;

/// Number of `t`-derivatives of `v` kept per node for dense output.
pub const TOWER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_step: T,
    /// Longest integration interval accepted, in `t` units.
    pub max_time: T,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self { rel_tol: T::lit(1e-10), abs_tol: T::lit(1e-12), max_step: T::lit(0.05), max_time: T::lit(200.0) }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: T| x > T::zero() && x.is_finite();
        if !(pos(self.rel_tol) && pos(self.abs_tol) && pos(self.max_step) && pos(self.max_time)) {
            return Err(Error::InvalidConfig("integrator tolerances and limits must be positive".into()));
        }
        if self.rel_tol < T::lit(10.0) * T::epsilon() {
            return Err(Error::InvalidConfig(format!(
                "rel_tol {} below 10 x machine epsilon",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

fn require_positive<T: Real>(v: T) -> Result<()> {
    if v > T::zero() {
        Ok(())
    } else {
        Err(Error::NonPositive { value: v.to_f64().unwrap_or(f64::NAN) })
    }
}

/// Right-hand side `(v', v'', v''', c2 v'' - c0 v + c_rhs v^p)`.
pub fn ode_rhs<T: Real>(state: CylState<T>, coeffs: &OdeCoefficients<T>) -> Result<CylState<T>> {
    require_positive(state.v)?;
    let fourth = coeffs.c2 * state.d2v - coeffs.c0 * state.v + coeffs.c_rhs * state.v.powf(coeffs.p);
    Ok(CylState::new(state.dv, state.d2v, state.d3v, fourth))
}

/// The reduced Hamiltonian
///
/// ```text
/// H = -v' v''' + v''^2/2 + (c2/2) v'^2 - (c0/2) v^2 + ((n-4)^2 (n^2-4)/32) v^{2n/(n-4)},
/// ```
///
/// constant along solutions of the ODE.
pub fn hamiltonian<T: Real>(state: CylState<T>, coeffs: &OdeCoefficients<T>) -> Result<T> {
    require_positive(state.v)?;
    let half = T::lit(0.5);
    let CylState { v, dv, d2v, d3v } = state;
    Ok(-dv * d3v + half * d2v * d2v + half * coeffs.c2 * dv * dv - half * coeffs.c0 * v * v
        + coeffs.potential_coeff() * v.powf(coeffs.energy_exponent()))
}

/// `max |H(t) - H(t_0)| / max(1, |H(t_0)|)` over a sample table.
///
/// Samples with `v <= 0` count as infinite drift.
pub fn hamiltonian_drift<T: Real>(samples: &[(T, CylState<T>)], coeffs: &OdeCoefficients<T>) -> T {
    let Some((_, first)) = samples.first() else {
        return T::zero();
    };
    let Ok(h0) = hamiltonian(*first, coeffs) else {
        return T::infinity();
    };
    let scale = h0.abs().max(T::one());
    samples.iter().fold(T::zero(), |acc, (_, s)| match hamiltonian(*s, coeffs) {
        Ok(h) => acc.max((h - h0).abs() / scale),
        Err(_) => T::infinity(),
    })
}

/// Derivatives `v, v', ..., v^{(TOWER-1)}` at a state, from the ODE by
/// Taylor-coefficient recursion (`w = v^p` via `w' v = p v' w`).
pub fn derivative_tower<T: Real>(state: CylState<T>, coeffs: &OdeCoefficients<T>) -> Result<[T; TOWER]> {
    require_positive(state.v)?;
    let mut d = [T::zero(); TOWER];
    d[..4].copy_from_slice(&state.to_array());
    // Taylor coefficients a_k = d_k / k! and those of w = v^p.
    let mut fact = [T::one(); TOWER];
    for k in 1..TOWER {
        fact[k] = fact[k - 1] * T::int(k as u32);
    }
    let mut a = [T::zero(); TOWER];
    for k in 0..4 {
        a[k] = d[k] / fact[k];
    }
    let mut w = [T::zero(); TOWER];
    w[0] = a[0].powf(coeffs.p);
    for k in 0..TOWER - 4 {
        if k > 0 {
            let kf = T::int(k as u32);
            let mut acc = T::zero();
            for j in 1..=k {
                let jf = T::int(j as u32);
                acc = acc + ((coeffs.p + T::one()) * jf - kf) * a[j] * w[k - j];
            }
            w[k] = acc / (kf * a[0]);
        }
        d[k + 4] = coeffs.c2 * d[k + 2] - coeffs.c0 * d[k] + coeffs.c_rhs * fact[k] * w[k];
        a[k + 4] = d[k + 4] / fact[k + 4];
    }
    Ok(d)
}

/// Two-point Hermite interpolation on `[0, h]` with `m` derivatives known
/// at each end (`left[k] = f^{(k)}(0)`, `right[k] = f^{(k)}(h)`).
pub(crate) fn hermite_two_point<T: Real>(h: T, left: &[T], right: &[T], x: T) -> T {
    let m = left.len();
    debug_assert_eq!(m, right.len());
    let size = 2 * m;
    let z = |i: usize| if i < m { T::zero() } else { h };
    let mut fact = vec![T::one(); m];
    for k in 1..m {
        fact[k] = fact[k - 1] * T::int(k as u32);
    }
    // Divided-difference table with repeated nodes; column j kept in place.
    let mut q: Vec<T> = (0..size).map(|i| if i < m { left[0] } else { right[0] }).collect();
    let mut coef = vec![T::zero(); size];
    coef[0] = q[0];
    for j in 1..size {
        for i in (j..size).rev() {
            let (zi, zij) = (z(i), z(i - j));
            q[i] = if zi == zij {
                let f = if i < m { left[j] } else { right[j] };
                f / fact[j]
            } else {
                (q[i] - q[i - 1]) / (zi - zij)
            };
        }
        coef[j] = q[j];
    }
    let mut acc = coef[size - 1];
    for j in (0..size - 1).rev() {
        acc = acc * (x - z(j)) + coef[j];
    }
    acc
}

/// Interpolated state between two nodes with derivative towers.
fn interpolate_state<T: Real>(h: T, left: &[T; TOWER], right: &[T; TOWER], x: T) -> CylState<T> {
    const M: usize = 4;
    let comp = |k: usize| hermite_two_point(h, &left[k..k + M], &right[k..k + M], x);
    CylState::new(comp(0), comp(1), comp(2), comp(3))
}

/// An ordered table of integrator output with dense evaluation.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub nodes: Vec<(T, CylState<T>)>,
    towers: Vec<[T; TOWER]>,
}

impl<T: Real> Trajectory<T> {
    pub fn from_nodes(nodes: Vec<(T, CylState<T>)>, coeffs: &OdeCoefficients<T>) -> Result<Self> {
        let towers = nodes.iter().map(|(_, s)| derivative_tower(*s, coeffs)).collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes, towers })
    }

    pub fn start(&self) -> T {
        self.nodes[0].0
    }

    pub fn end(&self) -> T {
        self.nodes[self.nodes.len() - 1].0
    }

    pub fn last_state(&self) -> CylState<T> {
        self.nodes[self.nodes.len() - 1].1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Dense evaluation, clamped to the covered interval.
    pub fn eval(&self, t: T) -> CylState<T> {
        let n = self.nodes.len();
        if n == 1 || t <= self.start() {
            return self.nodes[0].1;
        }
        if t >= self.end() {
            return self.nodes[n - 1].1;
        }
        let i = self.nodes.partition_point(|(ti, _)| *ti <= t).saturating_sub(1).min(n - 2);
        let (t0, _) = self.nodes[i];
        let (t1, _) = self.nodes[i + 1];
        interpolate_state(t1 - t0, &self.towers[i], &self.towers[i + 1], t - t0)
    }

    pub fn drift(&self, coeffs: &OdeCoefficients<T>) -> T {
        hamiltonian_drift(&self.nodes, coeffs)
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// An accepted step, kept so callers can re-take partial steps from its start.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<T> {
    pub t0: T,
    pub y0: [T; 4],
    pub f0: [T; 4],
    pub h: T,
}

/// One-step driver over the autonomous ODE.
pub struct Stepper<'a, T> {
    coeffs: &'a OdeCoefficients<T>,
    cfg: &'a IntegratorConfig<T>,
    pub t: T,
    pub y: [T; 4],
    f: [T; 4],
    h: T,
    err_prev: T,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(initial: CylState<T>, t0: T, coeffs: &'a OdeCoefficients<T>, cfg: &'a IntegratorConfig<T>) -> Result<Self> {
        cfg.validate()?;
        require_positive(initial.v)?;
        let y = initial.to_array();
        let f = ode_rhs(initial, coeffs)?.to_array();
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..4 {
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs();
            d0 = d0 + (y[i] / sc).powi(2);
            d1 = d1 + (f[i] / sc).powi(2);
        }
        let (d0, d1) = (d0.sqrt(), d1.sqrt());
        let h = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-4) } else { T::lit(0.01) * d0 / d1 };
        let h = h.min(cfg.max_step).max(T::lit(1e-8));
        Ok(Self { coeffs, cfg, t: t0, y, f, h, err_prev: T::lit(1e-4) })
    }

    pub fn state(&self) -> CylState<T> {
        CylState::from_array(self.y)
    }

    fn rhs(&self, y: [T; 4]) -> Option<[T; 4]> {
        if !(y[0] > T::zero()) || !y.iter().all(|x| x.is_finite()) {
            return None;
        }
        let c = self.coeffs;
        Some([y[1], y[2], y[3], c.c2 * y[2] - c.c0 * y[0] + c.c_rhs * y[0].powf(c.p)])
    }

    /// A single Dormand–Prince step of size `h` from `(y0, f0)`. Returns the
    /// new state, its derivative and the embedded error vector, or `None`
    /// if a stage left the positive cone.
    pub fn try_step(&self, y0: [T; 4], f0: [T; 4], h: T) -> Option<([T; 4], [T; 4], [T; 4])> {
        let mut k = [[T::zero(); 4]; 7];
        k[0] = f0;
        for s in 1..7 {
            let mut ys = y0;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = T::lit(A[s][j]);
                if a != T::zero() {
                    for i in 0..4 {
                        ys[i] = ys[i] + h * a * kj[i];
                    }
                }
            }
            let _ = C[s];
            k[s] = self.rhs(ys)?;
            if s == 6 {
                let mut err = [T::zero(); 4];
                for (j, kj) in k.iter().enumerate() {
                    let e = T::lit(E[j]);
                    for i in 0..4 {
                        err[i] = err[i] + h * e * kj[i];
                    }
                }
                return Some((ys, k[6], err));
            }
        }
        None
    }

    fn error_norm(&self, y0: &[T; 4], y1: &[T; 4], err: &[T; 4]) -> T {
        let mut acc = T::zero();
        for i in 0..4 {
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            acc = acc + (err[i] / sc).powi(2);
        }
        (acc / T::lit(4.0)).sqrt()
    }

    /// Takes one accepted step without passing `t_stop`.
    pub fn advance(&mut self, t_stop: T) -> Result<StepInfo<T>> {
        let t_err = |t: T| t.to_f64().unwrap_or(f64::NAN);
        let h_min = T::lit(1e-14) * self.t.abs().max(T::one());
        loop {
            let remaining = t_stop - self.t;
            let h = self.h.min(self.cfg.max_step);
            // absorb a sliver left over by accumulated rounding in t
            let clipped = h >= remaining || remaining - h <= T::lit(1e-8) * h;
            let h = if clipped { remaining } else { h };
            if h <= h_min {
                return Err(Error::StepFailure { t: t_err(self.t) });
            }
            let Some((y1, f1, err)) = self.try_step(self.y, self.f, h) else {
                self.h = h * T::lit(0.25);
                if self.h <= h_min {
                    return Err(Error::PositivityLost { t: t_err(self.t) });
                }
                continue;
            };
            let e = self.error_norm(&self.y, &y1, &err);
            if !e.is_finite() {
                self.h = h * T::lit(0.2);
                continue;
            }
            if e <= T::one() {
                let info = StepInfo { t0: self.t, y0: self.y, f0: self.f, h };
                self.t = if clipped { t_stop } else { self.t + h };
                self.y = y1;
                self.f = f1;
                let ec = e.max(T::lit(1e-10));
                let fac = T::lit(0.9) * ec.powf(T::lit(-0.17)) * self.err_prev.powf(T::lit(0.04));
                let fac = fac.max(T::lit(0.2)).min(T::lit(10.0));
                self.h = (h * fac).min(self.cfg.max_step);
                self.err_prev = ec.max(T::lit(1e-4));
                let s = self.state();
                if !(s.v > T::zero()) {
                    return Err(Error::PositivityLost { t: t_err(self.t) });
                }
                if s.v.abs() > T::lit(BLOWUP_V) || s.norm() > T::lit(BLOWUP_NORM) {
                    return Err(Error::BlowUp { t: t_err(self.t) });
                }
                return Ok(info);
            }
            let fac = (T::lit(0.9) * e.powf(T::lit(-0.2))).max(T::lit(0.2));
            self.h = h * fac;
        }
    }
}

/// Integrates from `(t0, initial)` to `t_end`, recording every accepted
/// step and landing exactly on each point of `grid` inside `(t0, t_end]`.
pub fn integrate<T: Real>(
    initial: CylState<T>,
    t0: T,
    t_end: T,
    grid: &[T],
    coeffs: &OdeCoefficients<T>,
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    config.validate()?;
    require_positive(initial.v)?;
    let span = t_end - t0;
    if !(span > T::zero()) || span > config.max_time {
        return Err(Error::InvalidConfig(format!(
            "integration span {span} must lie in (0, {}]",
            config.max_time
        )));
    }
    let mut stops: Vec<T> = grid.iter().copied().filter(|&g| g > t0 && g < t_end).collect();
    stops.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    stops.dedup();
    stops.push(t_end);

    let mut stepper = Stepper::new(initial, t0, coeffs, config)?;
    let mut nodes = vec![(t0, initial)];
    for stop in stops {
        while stepper.t < stop {
            stepper.advance(stop)?;
            nodes.push((stepper.t, stepper.state()));
        }
    }
    Trajectory::from_nodes(nodes, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delaunay::v_sph;
    use crate::series::Series2;
    use approx::assert_relative_eq;

    fn c(n: u32) -> OdeCoefficients<f64> {
        OdeCoefficients::new(n).unwrap()
    }

    #[test]
    fn rhs_fixed_point() {
        let co = c(5);
        let r = ode_rhs(CylState::constant(co.eps_n), &co).unwrap();
        assert_eq!((r.v, r.dv, r.d2v), (0.0, 0.0, 0.0));
        assert!(r.d3v.abs() < 1e-14);
    }

    #[test]
    fn rhs_sphere_jet_n5() {
        let co = c(5);
        let r = ode_rhs(CylState::new(1.0, 0.0, -0.5, 0.0), &co).unwrap();
        assert_eq!((r.v, r.dv, r.d2v), (0.0, -0.5, 0.0));
        // 13/2 (-1/2) - 25/16 + 105/16
        assert_relative_eq!(r.d3v, 1.75, epsilon = 1e-15);
        // fourth derivative of (cosh t)^{-1/2} at 0, by series arithmetic
        let d = Series2::var_t(0.0).cosh().powf(-0.5).t_derivatives();
        assert_relative_eq!(r.d3v, d[4], epsilon = 1e-14);
    }

    #[test]
    fn rhs_direct_substitution_n6() {
        let co = c(6);
        let r = ode_rhs(CylState::new(1.0, 1.0, 1.0, 1.0), &co).unwrap();
        assert_eq!((r.v, r.dv, r.d2v), (1.0, 1.0, 1.0));
        assert_relative_eq!(r.d3v, co.c2 - co.c0 + co.c_rhs, epsilon = 1e-14);
    }

    #[test]
    fn rhs_rejects_nonpositive() {
        let co = c(5);
        assert!(matches!(ode_rhs(CylState::new(0.0, 0.0, 0.0, 0.0), &co), Err(Error::NonPositive { .. })));
        assert!(hamiltonian(CylState::new(-1.0, 0.0, 0.0, 0.0), &co).is_err());
    }

    #[test]
    fn hamiltonian_direct_substitution() {
        let co = c(5);
        let h = hamiltonian(CylState::new(0.5, 0.0, 0.3, 0.0), &co).unwrap();
        let expect = 0.5 * 0.09 - 25.0 / 32.0 * 0.25 + 21.0 / 32.0 * 0.5f64.powi(10);
        assert_relative_eq!(h, expect, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_energies() {
        for n in 5..=12 {
            let co = c(n);
            let hs = hamiltonian(v_sph(0.0, n), &co).unwrap();
            assert!(hs.abs() <= 1e-12, "n={n}: {hs}");
            let hc = hamiltonian(CylState::constant(co.eps_n), &co).unwrap();
            assert_relative_eq!(hc, co.cylinder_energy(), max_relative = 1e-12);
        }
    }

    #[test]
    fn tower_matches_series() {
        let co = c(7);
        for &t in &[-1.3, 0.0, 0.4, 2.2] {
            let tower = derivative_tower(v_sph(t, 7), &co).unwrap();
            let d = Series2::var_t(t).cosh().powf(-1.5).t_derivatives();
            for k in 0..=4 {
                assert_relative_eq!(tower[k], d[k], epsilon = 1e-12, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn hermite_reproduces_polynomials() {
        // degree-7 polynomial is reproduced exactly with 4 derivatives per end
        let p = |x: f64| [x.powi(7) - 2.0 * x.powi(3) + 1.0, 7.0 * x.powi(6) - 6.0 * x * x, 42.0 * x.powi(5) - 12.0 * x, 210.0 * x.powi(4) - 12.0];
        let h = 0.7;
        for &x in &[0.0, 0.1, 0.35, 0.69] {
            assert_relative_eq!(hermite_two_point(h, &p(0.0), &p(h), x), p(x)[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn constant_orbit_stays_constant() {
        let co = c(5);
        let cfg = IntegratorConfig::default();
        // rounding in eps_n excites the real mode e^(growth t), so the table is
        // constant only up to that amplification
        let tr = integrate(CylState::constant(co.eps_n), 0.0, 5.0, &[], &co, &cfg).unwrap();
        for (t, s) in &tr.nodes {
            let bound = 1e-14 * (co.linearized_growth() * t).exp();
            assert!((s.v - co.eps_n).abs() <= bound && s.d3v.abs() <= 100.0 * bound, "t={t}: {s:?}");
        }
        assert!(tr.drift(&co) < 1e-14);
    }

    #[test]
    fn sphere_orbit_matches_closed_form() {
        let co = c(5);
        let tight = IntegratorConfig { rel_tol: 1e-14, abs_tol: 1e-16, ..IntegratorConfig::default() };
        let tr = integrate(v_sph(-3.0, 5), -3.0, 3.0, &[0.0], &co, &tight).unwrap();
        assert!((tr.last_state() - v_sph(3.0, 5)).max_abs() < 1e-8, "{:?}", tr.last_state() - v_sph(3.0, 5));
        for n in [5, 6, 8] {
            let co = c(n);
            let tr = integrate(v_sph(-1.0, n), -1.0, 1.0, &[0.0], &co, &tight).unwrap();
            let end = tr.last_state();
            assert!((end - v_sph(1.0, n)).max_abs() < 1e-8, "n={n}: {:?}", end - v_sph(1.0, n));
            assert!((tr.eval(0.0) - v_sph(0.0, n)).max_abs() < 1e-8);
            // dense output between nodes
            assert!((tr.eval(0.61) - v_sph(0.61, n)).max_abs() < 1e-8);
        }
    }

    #[test]
    fn grid_points_are_hit_exactly() {
        let co = c(6);
        let grid = [0.1, 0.25, 0.5];
        let tr = integrate(v_sph(0.0, 6), 0.0, 1.0, &grid, &co, &IntegratorConfig::default()).unwrap();
        for g in grid {
            assert!(tr.nodes.iter().any(|(t, _)| *t == g));
        }
        assert_eq!(tr.end(), 1.0);
    }

    #[test]
    fn wrong_kappa_blows_up() {
        let co = c(5);
        let eps = 0.5 * co.eps_n;
        let cfg = IntegratorConfig::default();
        let r = integrate(CylState::at_minimum(eps, 5.0), 0.0, 100.0, &[], &co, &cfg);
        assert!(matches!(r, Err(Error::BlowUp { .. })), "{r:?}");
    }

    #[test]
    fn span_validation() {
        let co = c(5);
        let cfg = IntegratorConfig::default();
        assert!(integrate(v_sph(0.0, 5), 0.0, 0.0, &[], &co, &cfg).is_err());
        assert!(integrate(v_sph(0.0, 5), 0.0, 500.0, &[], &co, &cfg).is_err());
        let bad = IntegratorConfig { rel_tol: 1e-17, ..cfg };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }
}
