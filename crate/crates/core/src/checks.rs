//! The invariant suite: every module's properties as named, timed checks.

use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{fit_tail_detailed, project_modes, FitConfig, OrbitCache, TailSamples};
use crate::coefficients::{OdeCoefficients, MAX_DIM, MIN_DIM};
use crate::delaunay::{shoot_delaunay, v_sph, DelaunayOrbit, ShootingConfig};
use crate::geometry::{
    kelvin, mean_curvature_christoffel, mean_curvature_geodesic_sphere, q_round_exact, radial_bilaplacian, scalar_positivity,
    RadialProfile, USph,
};
use crate::ode::{hamiltonian, integrate, ode_rhs, IntegratorConfig, Stepper};
use crate::pohozaev::{
    necksize_from_pohozaev, pohozaev_of_necksize, scaled_slice_invariant, slice_invariant, ScaledField, TranslatedDelaunay,
};
use crate::quadrature::SliceQuadrature;
use crate::state::CylState;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub n: u32,
    pub integrator: IntegratorConfig<f64>,
}

impl CheckConfig {
    pub fn new(n: u32) -> Self {
        Self { n, integrator: IntegratorConfig::default() }
    }

    fn shooting(&self) -> ShootingConfig<f64> {
        ShootingConfig { integrator: self.integrator, ..ShootingConfig::default() }
    }
}

/// Necksizes, relative to `eps_n`, of the shooting grid.
pub const EPS_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

type Check = fn(&CheckConfig, &Ctx) -> Result<(bool, String)>;
type Field<'a> = &'a dyn Fn(&[f64]) -> Result<f64>;

/// Orbits shared across checks.
struct Ctx {
    orbits: Vec<(f64, Result<DelaunayOrbit<f64>>)>,
}

fn ok(pass: bool, detail: impl Into<String>) -> Result<(bool, String)> {
    Ok((pass, detail.into()))
}

fn coeffs(cfg: &CheckConfig) -> Result<OdeCoefficients<f64>> {
    OdeCoefficients::new(cfg.n)
}

fn constant_solution_identity(_: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut decreasing = true;
    let mut prev = f64::INFINITY;
    for n in MIN_DIM..=MAX_DIM {
        let c = OdeCoefficients::<f64>::new(n)?;
        worst = worst.max((c.c0 * c.eps_n - c.c_rhs * c.eps_n.powf(c.p)).abs() / (c.c0 * c.eps_n));
        decreasing &= c.eps_n < prev && c.eps_n > 0.0 && c.eps_n < 1.0;
        prev = c.eps_n;
    }
    ok(worst <= 1e-12 && decreasing, format!("max relative defect {worst:e}; eps_n decreasing in (0,1): {decreasing}"))
}

fn closed_form_energies(_: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let (mut sph, mut cyl): (f64, f64) = (0.0, 0.0);
    for n in MIN_DIM..=MAX_DIM {
        let c = OdeCoefficients::<f64>::new(n)?;
        sph = sph.max(hamiltonian(v_sph(0.0, n), &c)?.abs());
        let h = hamiltonian(CylState::constant(c.eps_n), &c)?;
        cyl = cyl.max((h / c.cylinder_energy() - 1.0).abs());
    }
    ok(sph <= 1e-12 && cyl <= 1e-12, format!("|H(v_sph)| <= {sph:e}; cylinder relative error {cyl:e}"))
}

fn v_sph_conservation(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let start = v_sph(-5.0, cfg.n);
    let h0 = hamiltonian(start, &c)?;
    let mut st = Stepper::new(start, -5.0, &c, &cfg.integrator)?;
    let mut drift: f64 = 0.0;
    while st.t < 5.0 {
        if let Err(e) = st.advance(5.0) {
            // perturbations along the growing modes of the homoclinic orbit can
            // carry the numerical solution out of v > 0
            return ok(false, format!("{e}; drift up to t = {:.3} was {drift:e}", st.t));
        }
        drift = drift.max((hamiltonian(st.state(), &c)? - h0).abs() / h0.abs().max(1.0));
    }
    let end = (st.state() - v_sph(5.0, cfg.n)).max_abs();
    ok(drift <= 1e-8, format!("drift {drift:e}, end-state error {end:e}"))
}

fn random_state_conservation(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = CylState::new(
            rng.gen_range(0.2..1.5) * c.eps_n,
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        );
        let h0 = hamiltonian(s, &c)?;
        let mut st = Stepper::new(s, 0.0, &c, &cfg.integrator)?;
        // run until the state leaves the box |state| <= 10 or 20 time units pass
        while st.t < 20.0 {
            if st.advance(20.0).is_err() {
                break;
            }
            let cur = st.state();
            if cur.max_abs() > 10.0 || cur.v < 1e-2 {
                break;
            }
            let h = hamiltonian(cur, &c)?;
            worst = worst.max((h - h0).abs() / h0.abs().max(1.0));
        }
    }
    let bound = 100.0 * cfg.integrator.rel_tol;
    ok(worst <= bound, format!("max drift {worst:e} over 100 random states (bound {bound:e})"))
}

fn gradient_structure(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = CylState::new(rng.gen_range(0.1..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let f = ode_rhs(s, &c)?;
        let d = (hamiltonian(s + f * h, &c)? - hamiltonian(s - f * h, &c)?) / (2.0 * h);
        worst = worst.max(d.abs());
    }
    ok(worst <= 1e-6, format!("max |dH/dt| by central differences {worst:e}"))
}

fn integrator_order(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    // loose tolerances make the step length equal max_step throughout
    let fixed = |h: f64| IntegratorConfig { rel_tol: 1.0, abs_tol: 1.0, max_step: h, max_time: 200.0 };
    let h = 0.6 / cfg.n as f64;
    let d1 = integrate(v_sph(-1.0, cfg.n), -1.0, 1.0, &[], &c, &fixed(h))?.drift(&c);
    let d2 = integrate(v_sph(-1.0, cfg.n), -1.0, 1.0, &[], &c, &fixed(h / 2.0))?.drift(&c);
    let ratio = d1 / d2;
    ok(ratio >= 4.0, format!("drift {d1:e} at step {h:.4}, {d2:e} at half the step, ratio {ratio:.1}"))
}

fn orbit_of(ctx: &Ctx, rel: f64) -> Result<&DelaunayOrbit<f64>> {
    let (_, r) = ctx.orbits.iter().find(|(e, _)| *e == rel).expect("grid orbit");
    r.as_ref().map_err(Clone::clone)
}

fn shooting_grid(_: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let (mut min_err, mut sym): (f64, f64) = (0.0, 0.0);
    for &rel in &EPS_GRID {
        let o = orbit_of(ctx, rel)?;
        min_err = min_err.max((o.min_v() - o.eps).abs());
        sym = sym.max(o.half_period_residual);
    }
    ok(min_err <= 1e-8 && sym <= 1e-9, format!("max |min v - eps| {min_err:e}; max half-period residual {sym:e}"))
}

/// Re-integrates each orbit from its start over two periods.
pub fn reintegration_defect(o: &DelaunayOrbit<f64>, integrator: &IntegratorConfig<f64>) -> Result<f64> {
    let start = CylState::at_minimum(o.eps, o.kappa);
    let tr = integrate(start, 0.0, 2.0 * o.period, &[], o.coeffs(), integrator);
    match tr {
        Ok(tr) => Ok((tr.last_state() - start).max_abs()),
        Err(Error::BlowUp { .. }) | Err(Error::PositivityLost { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn reintegration_periodicity(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &rel in &EPS_GRID {
        let d = reintegration_defect(orbit_of(ctx, rel)?, &cfg.integrator)?;
        worst = worst.max(d);
        parts.push(format!("{rel}:{d:.1e}"));
    }
    ok(worst <= 1e-6, format!("max return defect after two periods {worst:e} [{}]", parts.join(" ")))
}

fn orbit_conservation(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let mut worst: f64 = 0.0;
    for &rel in &EPS_GRID {
        let o = orbit_of(ctx, rel)?;
        let tr = integrate(CylState::at_minimum(o.eps, o.kappa), 0.0, o.period, &[], &c, &cfg.integrator)?;
        worst = worst.max(tr.drift(&c));
        let table = crate::ode::hamiltonian_drift(&o.samples, &c);
        worst = worst.max(table);
    }
    ok(worst <= 1e-8, format!("max drift over one period {worst:e}"))
}

fn energy_ordering(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let levels: Vec<f64> = EPS_GRID.iter().map(|&r| orbit_of(ctx, r).map(|o| o.ham_level)).collect::<Result<_>>()?;
    let monotone = levels.windows(2).all(|w| w[0] > w[1]);
    let bounded = levels.iter().all(|&h| h < 0.0 && h > c.cylinder_energy());
    ok(monotone && bounded, format!("H from {:.6e} (0.1 eps_n) to {:.6e} (0.9 eps_n), cylinder {:.6e}", levels[0], levels[8], c.cylinder_energy()))
}

fn linearization_limit(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let o = shoot_delaunay(0.999 * c.eps_n, &c, &cfg.shooting())?;
    let rel = (o.period / c.linearized_period() - 1.0).abs();
    ok(rel <= 0.01, format!("T = {}, 2 pi/omega = {}, relative gap {rel:e}", o.period, c.linearized_period()))
}

fn pohozaev_correspondence(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let sc = cfg.shooting();
    let p: Vec<f64> = EPS_GRID.iter().map(|&r| orbit_of(ctx, r).map(|o| c.sphere_area * o.ham_level)).collect::<Result<_>>()?;
    let negative = p.iter().all(|&x| x < 0.0);
    let monotone = p.windows(2).all(|w| w[0] > w[1]);
    let mut worst: f64 = 0.0;
    for &rel in &[0.2, 0.5, 0.8] {
        let e = rel * c.eps_n;
        let back = necksize_from_pohozaev(pohozaev_of_necksize(e, &c, &sc)?, &c, &sc)?;
        worst = worst.max((back / e - 1.0).abs());
    }
    ok(negative && monotone && worst <= 1e-7, format!("negative {negative}, monotone {monotone}, round trip {worst:e}"))
}

fn slice_reduction(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let q = SliceQuadrature::with_default_order(cfg.n)?;
    let o = orbit_of(ctx, 0.5)?;
    let mut exact = true;
    for k in 0..16 {
        let t = k as f64 * 0.37;
        exact &= slice_invariant(o, t, &c, &q)? == c.sphere_area * hamiltonian(o.eval(t), &c)?;
    }
    ok(exact, format!("slice = |S^(n-1)| H bit-for-bit on 16 slices: {exact}"))
}

fn slice_t_independence(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let q = SliceQuadrature::with_default_order(cfg.n)?;
    let mut worst: f64 = 0.0;
    for &rel in &[0.3, 0.6] {
        let o = shoot_delaunay(rel * c.eps_n, &c, &cfg.shooting())?;
        let base = slice_invariant(&o, 0.0, &c, &q)?;
        for &a in &[0.25, 0.5] {
            let f = TranslatedDelaunay::new(&o, a);
            for k in 0..=8 {
                let t = 2.0 + 0.5 * k as f64;
                worst = worst.max((slice_invariant(&f, t, &c, &q)? / base - 1.0).abs());
            }
        }
    }
    ok(worst <= 1e-6, format!("max relative deviation from the a = 0 value over t in [2,6]: {worst:e}"))
}

fn scaling_consistency(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let q = SliceQuadrature::with_default_order(cfg.n)?;
    let o = orbit_of(ctx, 0.4)?;
    let mut worst: f64 = 0.0;
    for &a in &[0.1, 0.4] {
        let tr = TranslatedDelaunay::new(o, a);
        let z = ScaledField { inner: tr, factor: 1.0 / o.eps };
        for &t in &[2.0, 4.0] {
            let direct = slice_invariant(&tr, t, &c, &q)?;
            let assembled = scaled_slice_invariant(&z, o.eps, t, &c, &q)?;
            worst = worst.max((direct / assembled - 1.0).abs());
        }
    }
    ok(worst <= 1e-10, format!("max relative gap between evaluation orders {worst:e}"))
}

fn grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

fn asymptotics_round_trip(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let fc = FitConfig { shooting: cfg.shooting(), ..FitConfig::default() };
    let cache = OrbitCache::new();
    let mut worst = [0.0f64; 3];
    let mut beta_min = f64::INFINITY;
    for (rel, tphase, a) in [(0.5, 0.3, 0.25), (0.8, 0.6, 0.5)] {
        let o = orbit_of(ctx, rel)?;
        let phase = tphase * o.period;
        let field = TranslatedDelaunay { orbit: o, a_norm: a, phase };
        let samples = TailSamples::from_fn(grid(3.0, 8.0, 41), grid(-1.0, 1.0, 16), |t, s| Ok(field.series(t, s)?.value()))?;
        let r = fit_tail_detailed(&samples, &c, &fc, &cache)?;
        worst[0] = worst[0].max((r.eps_hat / o.eps - 1.0).abs());
        worst[1] = worst[1].max((r.t_hat / phase - 1.0).abs());
        worst[2] = worst[2].max((r.a_hat / a - 1.0).abs());
        beta_min = beta_min.min(r.beta_hat.unwrap_or(f64::NAN));
    }
    let pass = worst[0] <= 1e-4 && worst[1] <= 1e-4 && worst[2] <= 1e-3 && beta_min >= 1.9;
    ok(pass, format!("relative errors eps {:e}, T {:e}, |a| {:e}; min beta {beta_min:.3}", worst[0], worst[1], worst[2]))
}

fn phase_equivariance(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let fc = FitConfig { shooting: cfg.shooting(), ..FitConfig::default() };
    let cache = OrbitCache::new();
    let o = orbit_of(ctx, 0.6)?;
    let phase = 0.35 * o.period;
    let delta = 0.9;
    let fit = |t0: f64| -> Result<f64> {
        let s = TailSamples::from_fn(grid(t0, t0 + 5.0, 41), grid(-1.0, 1.0, 12), |t, _| Ok(o.eval(t + phase).v))?;
        Ok(fit_tail_detailed(&s, &c, &fc, &cache)?.t_hat)
    };
    let (a, b) = (fit(3.0)?, fit(3.0 + delta)?);
    // data shifted by delta in t is the same field, so the phase is unchanged
    let gap = (a - b).abs().min(o.period - (a - b).abs());
    // reparametrizing the window origin shifts the phase by -delta
    let shifted = (b + delta).rem_euclid(o.period);
    let s = TailSamples::from_fn(grid(3.0, 8.0, 41), grid(-1.0, 1.0, 12), |t, _| Ok(o.eval(t + delta + phase).v))?;
    let moved = fit_tail_detailed(&s, &c, &fc, &cache)?.t_hat;
    let gap2 = (moved - shifted).abs().min(o.period - (moved - shifted).abs());
    ok(gap <= 1e-5 && gap2 <= 1e-5, format!("phase drift under window shift {gap:e}, equivariance gap {gap2:e}"))
}

fn mode_orthogonality(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let t = grid(3.0, 8.0, 12);
    let s = grid(-1.0, 1.0, 12);
    let samples = TailSamples::from_fn(t.clone(), s.clone(), |t, s| Ok(2.0 + (-t).exp() + 0.3 * (-t).exp() * s))?;
    let m = project_modes(&samples, cfg.n)?;
    let mut worst: f64 = 0.0;
    for (i, row) in samples.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((m.f0[i] + m.f1[i] * s[j] - v).abs());
        }
    }
    ok(worst <= 1e-12, format!("re-synthesis error {worst:e}"))
}

fn q_round_identity(_: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let all = (MIN_DIM..=MAX_DIM).all(|n| {
        let k = n as i64;
        q_round_exact(n).map(|q| q == Ratio::new(k * (k * k - 4), 8)).unwrap_or(false)
    });
    ok(all, format!("Q(round) = n(n^2-4)/8 exactly for n = 5..12: {all}"))
}

fn u_sph_identities(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let c = coeffs(cfg)?;
    let u = USph { n: cfg.n };
    let radii: Vec<f64> = (0..=200).map(|k| 0.1 * 100f64.powf(k as f64 / 200.0)).collect();
    let mut worst: f64 = 0.0;
    for &r in &radii {
        worst = worst.max((radial_bilaplacian(&u, r, cfg.n)? - c.c_rhs * u.value(r)?.powf(c.p)).abs());
    }
    let pos = scalar_positivity(&u, &radii, cfg.n)?;
    ok(worst <= 1e-8 && pos.pass, format!("bilaplacian residual {worst:e}; positivity margin {:e}", pos.min_margin))
}

fn mean_curvature_oracle(cfg: &CheckConfig, _: &Ctx) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for &r in &[0.1, 0.5, 1.0, 3.0, 5.0, 10.0] {
        let a: f64 = mean_curvature_geodesic_sphere(r, cfg.n);
        let b = mean_curvature_christoffel(r, cfg.n);
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    let negative = (1..=100).all(|k| mean_curvature_christoffel(3.0 + 0.1 * k as f64, cfg.n) < 0.0);
    ok(worst <= 1e-10 && negative, format!("closed form vs oracle {worst:e}; negative beyond r = 3: {negative}"))
}

fn kelvin_involution(cfg: &CheckConfig, ctx: &Ctx) -> Result<(bool, String)> {
    let n = cfg.n;
    let d = n as usize;
    let o = orbit_of(ctx, 0.5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let fields: [Field; 3] = [
        &|x: &[f64]| Ok(((1.0 + x.iter().map(|a| a * a).sum::<f64>()) / 2.0).powf(-(n as f64 - 4.0) / 2.0)),
        &|x: &[f64]| o.euclid(x),
        &|x: &[f64]| Ok(1.0 + x[0] * x[0] + 0.5 * x[d - 1]),
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for f in &fields {
            let kk = kelvin(|y: &[f64]| kelvin(f, y, n), &x, n)?;
            let v = f(&x)?;
            worst = worst.max((kk - v).abs() / v.abs().max(1e-300));
        }
    }
    ok(worst <= 1e-12, format!("max relative involution defect {worst:e}"))
}

const CHECKS: &[(&str, Check)] = &[
    ("core.constant_solution", constant_solution_identity),
    ("ode.closed_form_energies", closed_form_energies),
    ("ode.conservation_v_sph", v_sph_conservation),
    ("ode.conservation_random_states", random_state_conservation),
    ("ode.gradient_structure", gradient_structure),
    ("ode.integrator_order", integrator_order),
    ("delaunay.shooting_grid", shooting_grid),
    ("delaunay.reintegration_periodicity", reintegration_periodicity),
    ("delaunay.orbit_conservation", orbit_conservation),
    ("delaunay.energy_ordering", energy_ordering),
    ("delaunay.linearization_limit", linearization_limit),
    ("pohozaev.correspondence", pohozaev_correspondence),
    ("pohozaev.slice_reduction", slice_reduction),
    ("pohozaev.slice_t_independence", slice_t_independence),
    ("pohozaev.scaling_consistency", scaling_consistency),
    ("asymptotics.round_trip", asymptotics_round_trip),
    ("asymptotics.phase_equivariance", phase_equivariance),
    ("asymptotics.mode_orthogonality", mode_orthogonality),
    ("geometry.q_round", q_round_identity),
    ("geometry.u_sph", u_sph_identities),
    ("geometry.mean_curvature", mean_curvature_oracle),
    ("geometry.kelvin_involution", kelvin_involution),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs the suite; `progress` sees each outcome as it completes.
pub fn run_checks(cfg: &CheckConfig, mut progress: impl FnMut(&CheckOutcome)) -> Result<Vec<CheckOutcome>> {
    let c = coeffs(cfg)?;
    cfg.integrator.validate()?;
    let start = Instant::now();
    let sc = cfg.shooting();
    let ctx = Ctx { orbits: EPS_GRID.iter().map(|&r| (r, shoot_delaunay(r * c.eps_n, &c, &sc))).collect() };
    let setup = start.elapsed().as_secs_f64();
    let mut out = Vec::with_capacity(CHECKS.len());
    for (i, (name, check)) in CHECKS.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match check(cfg, &ctx) {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let mut seconds = t0.elapsed().as_secs_f64();
        if i == 0 {
            seconds += setup;
        }
        let o = CheckOutcome { name: (*name).to_string(), pass, detail, seconds };
        progress(&o);
        out.push(o);
    }
    Ok(out)
}
