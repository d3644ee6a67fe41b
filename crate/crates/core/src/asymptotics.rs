//! Fitting the refined asymptotic model
//!
//! ```text
//! v(t, theta) = v_eps(t+T) + e^{-t} <theta, a> (-v_eps'(t+T) + ((n-4)/2) v_eps(t+T)) + O(e^{-beta t})
//! ```
//!
//! to sampled tails of axisymmetric solutions. The fit is two-stage: the
//! spherical mean fixes `(eps, T)` by nonlinear least squares, then the
//! degree-one mode gives `|a|` linearly. Second-order terms of the
//! translated family are folded in as iterated corrections so that the
//! estimates are not biased by the `O(e^{-2t})` remainder.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficients::OdeCoefficients;
use crate::delaunay::{shoot_delaunay, DelaunayOrbit, ShootingConfig};
use crate::optimize::brent_minimize;
use crate::pohozaev::TranslatedDelaunay;
use crate::{Error, Result};

/// Field values on a tensor grid `t_i x s_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSamples {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `values[i][j] = v(t_i, s_j)`.
    pub values: Vec<Vec<f64>>,
}

pub const MIN_NODES: usize = 8;

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    s: f64,
    v: f64,
}

fn sorted_unique(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

impl TailSamples {
    pub fn new(t: Vec<f64>, s: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let out = Self { t, s, values };
        out.validate()?;
        Ok(out)
    }

    /// Samples a field on a grid.
    pub fn from_fn(t: Vec<f64>, s: Vec<f64>, mut f: impl FnMut(f64, f64) -> Result<f64>) -> Result<Self> {
        let values = t.iter().map(|&ti| s.iter().map(|&sj| f(ti, sj)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
        Self::new(t, s, values)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSamples(m.to_string()));
        if self.t.len() < MIN_NODES || self.s.len() < MIN_NODES {
            return bad("need at least 8 t-nodes and 8 s-nodes");
        }
        if !self.t.windows(2).all(|w| w[0] < w[1]) || !self.s.windows(2).all(|w| w[0] < w[1]) {
            return bad("grids must be strictly increasing");
        }
        if !(self.t[0] >= 1.0) || !self.t.iter().all(|x| x.is_finite()) {
            return bad("t window must start at t0 >= 1");
        }
        if !self.s.iter().all(|x| (-1.0..=1.0).contains(x)) {
            return bad("s values must lie in [-1, 1]");
        }
        if self.values.len() != self.t.len() || self.values.iter().any(|row| row.len() != self.s.len()) {
            return bad("value matrix does not match the grid");
        }
        if let Some(v) = self.values.iter().flatten().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidSamples(format!("field values must be positive and finite, found {v}")));
        }
        Ok(())
    }

    /// Reads long-format CSV with header `t,s,v`.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["t", "s", "v"] {
            return Err(Error::Csv(format!("expected header t,s,v, found {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let rows: Vec<Row> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        if rows.is_empty() {
            return Err(Error::InvalidSamples("no data rows".into()));
        }
        let t = sorted_unique(rows.iter().map(|r| r.t).collect());
        let s = sorted_unique(rows.iter().map(|r| r.s).collect());
        let mut values = vec![vec![f64::NAN; s.len()]; t.len()];
        let mut seen = vec![vec![false; s.len()]; t.len()];
        for r in &rows {
            let i = t.binary_search_by(|x| x.total_cmp(&r.t)).expect("grid built from rows");
            let j = s.binary_search_by(|x| x.total_cmp(&r.s)).expect("grid built from rows");
            if seen[i][j] {
                return Err(Error::InvalidSamples(format!("duplicate sample at t={}, s={}", r.t, r.s)));
            }
            seen[i][j] = true;
            values[i][j] = r.v;
        }
        if rows.len() != t.len() * s.len() {
            return Err(Error::InvalidSamples("samples do not form a full t x s grid".into()));
        }
        Self::new(t, s, values)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        w.write_record(["t", "s", "v"])?;
        for (i, &t) in self.t.iter().enumerate() {
            for (j, &s) in self.s.iter().enumerate() {
                w.write_record([t.to_string(), s.to_string(), self.values[i][j].to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Spherical mean `f0` and degree-one coefficient `f1` at each `t_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Modes {
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

/// Orthonormal Gegenbauer polynomials for `S^{n-1}` up to `degree` at `s`.
fn sphere_harmonics(n: u32, degree: usize, s: f64) -> Vec<f64> {
    let lambda = (n as f64 - 2.0) / 2.0;
    let b = |k: usize| {
        let kf = k as f64;
        (kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0))).sqrt()
    };
    let mut p = vec![1.0; degree + 1];
    for k in 0..degree {
        let prev = if k == 0 { 0.0 } else { p[k - 1] };
        p[k + 1] = (s * p[k] - b(k) * prev) / b(k + 1);
    }
    p
}

/// Least-squares projection on spherical harmonics in `s`.
pub fn project_modes(samples: &TailSamples, n: u32) -> Result<Modes> {
    samples.validate()?;
    let degree = (samples.s.len() - 2).min(8);
    let b1 = sphere_harmonics(n, 1, 1.0)[1]; // p_1(s) = s / b_1
    let design = DMatrix::from_fn(samples.s.len(), degree + 1, |j, k| sphere_harmonics(n, degree, samples.s[j])[k]);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Err(Error::InvalidSamples("s-grid too coarse to separate spherical modes".into()));
    }
    let mut f0 = Vec::with_capacity(samples.t.len());
    let mut f1 = Vec::with_capacity(samples.t.len());
    for row in &samples.values {
        let rhs = DVector::from_column_slice(row);
        let c = svd.solve(&rhs, 1e-14).map_err(|e| Error::InvalidSamples(e.to_string()))?;
        f0.push(c[0]);
        f1.push(c[1] * b1);
    }
    Ok(Modes { f0, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitConfig {
    pub shooting: ShootingConfig<f64>,
    /// Necksizes, relative to `eps_n`, of the coarse initial map.
    pub coarse_points: usize,
    /// Phase grid resolution per period.
    pub phase_points: usize,
    /// Outer correction sweeps for the second-order terms.
    pub sweeps: usize,
    /// Relative tolerance on `eps` in the refinement.
    pub eps_tol: f64,
    /// RMS misfit of the mean mode, relative to its size, above which the
    /// fit is reported as not converged.
    pub max_misfit: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            shooting: ShootingConfig::default(),
            coarse_points: 24,
            phase_points: 96,
            sweeps: 4,
            eps_tol: 1e-11,
            max_misfit: 1e-3,
        }
    }
}

/// Orbits keyed by necksize, shared between fits.
type OrbitMap = HashMap<(u32, u64), Arc<DelaunayOrbit<f64>>>;

#[derive(Debug, Default)]
pub struct OrbitCache {
    map: RwLock<OrbitMap>,
}

impl OrbitCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, eps: f64, coeffs: &OdeCoefficients<f64>, cfg: &ShootingConfig<f64>) -> Result<Arc<DelaunayOrbit<f64>>> {
        let key = (coeffs.n, eps.to_bits());
        if let Some(o) = self.map.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(o));
        }
        let orbit = Arc::new(shoot_delaunay(eps, coeffs, cfg)?);
        self.map.write().expect("cache lock").entry(key).or_insert_with(|| Arc::clone(&orbit));
        Ok(orbit)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub n: u32,
    pub eps_rel: f64,
    pub period: f64,
    /// RMS misfit of the mean mode against the corrected model.
    pub mode0_rms: f64,
    pub converged: bool,
    pub beta_stderr: Option<f64>,
    /// Slope of the unnormalized residual profile.
    pub beta_raw: Option<f64>,
    pub oscillatory: Option<bool>,
    pub orbits_shot: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub eps_hat: f64,
    #[serde(rename = "T_hat")]
    pub t_hat: f64,
    pub a_hat: f64,
    pub beta_hat: Option<f64>,
    pub residual: f64,
    pub diagnostics: FitDiagnostics,
}

/// Mean-mode coefficient of the `|a|^2 e^{-2t}` term, at a state of `v_eps`.
fn second_order_mean(v: f64, dv: f64, d2v: f64, n: f64, q: f64) -> f64 {
    v * (-q / 2.0 + (q + q * q / 2.0) / n) + dv * (0.5 - (q + 1.0) / n) + d2v / (2.0 * n)
}

/// Degree-one coefficient of the `|a|^3 e^{-3t}` term.
fn third_order_axial(v: f64, dv: f64, d2v: f64, d3v: f64, n: f64, q: f64) -> f64 {
    let s1 = -(q * q / 2.0 + q) * v + (q + 1.0) * dv - d2v / 2.0;
    let s3 = (q * q * q / 6.0 + q * q + 4.0 * q / 3.0) * v - (q * q / 2.0 + 2.0 * q + 4.0 / 3.0) * dv + (q / 2.0 + 1.0) * d2v
        - d3v / 6.0;
    s1 + s3 * 3.0 / (n + 2.0)
}

struct Stage<'a> {
    t: &'a [f64],
    target: Vec<f64>,
    phase_points: usize,
}

impl Stage<'_> {
    fn misfit(&self, orbit: &DelaunayOrbit<f64>, phase: f64) -> f64 {
        self.t.iter().zip(&self.target).map(|(&t, &y)| (y - orbit.eval(t + phase).v).powi(2)).sum()
    }

    /// Best phase in `[0, T_eps)` and its misfit.
    fn best_phase(&self, orbit: &DelaunayOrbit<f64>) -> (f64, f64) {
        let period = orbit.period;
        let m = self.phase_points;
        let (k, _) = (0..m)
            .map(|k| (k, self.misfit(orbit, period * k as f64 / m as f64)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("phase grid is nonempty");
        let h = period / m as f64;
        let center = period * k as f64 / m as f64;
        let r = brent_minimize(|p| Ok::<_, Error>(self.misfit(orbit, p)), center - h, center + h, 1e-12, 200)
            .expect("misfit is infallible");
        (r.x.rem_euclid(period), r.fx)
    }
}

/// Fits `(eps, T, |a|)`; a non-converged fit is returned with
/// `diagnostics.converged = false` instead of an error.
pub fn fit_tail_detailed(samples: &TailSamples, coeffs: &OdeCoefficients<f64>, config: &FitConfig, cache: &OrbitCache) -> Result<FitResult> {
    let modes = project_modes(samples, coeffs.n)?;
    let t = &samples.t;
    let nf = coeffs.dim();
    let q = coeffs.weight();
    let eps_n = coeffs.eps_n;
    let lo = config.shooting.min_eps / eps_n;
    let shots_before = cache.len();

    // coarse map: geometric near the small-eps end, uniform above
    let k = config.coarse_points.max(4);
    let mut grid: Vec<f64> = (0..k)
        .map(|i| {
            let x = i as f64 / (k - 1) as f64;
            if x < 0.25 {
                lo * (0.1 / lo).powf(x / 0.25)
            } else {
                0.1 + 0.9 * (x - 0.25) / 0.75
            }
        })
        .collect();
    grid.dedup();

    let mut a_hat = 0.0;
    let mut eps_hat = f64::NAN;
    let mut phase_hat = 0.0;
    let mut misfit = f64::INFINITY;
    let mut orbit: Option<Arc<DelaunayOrbit<f64>>> = None;
    let mut boundary = false;

    for sweep in 0..config.sweeps.max(1) {
        // mean mode with the current second-order correction removed
        let target: Vec<f64> = match &orbit {
            Some(o) if a_hat != 0.0 => t
                .iter()
                .zip(&modes.f0)
                .map(|(&ti, &f)| {
                    let st = o.eval(ti + phase_hat);
                    f - a_hat * a_hat * (-2.0 * ti).exp() * second_order_mean(st.v, st.dv, st.d2v, nf, q)
                })
                .collect(),
            _ => modes.f0.clone(),
        };
        let stage = Stage { t, target, phase_points: config.phase_points };
        let score = |rel: f64| -> Result<(f64, f64, Arc<DelaunayOrbit<f64>>)> {
            let o = cache.get(rel * eps_n, coeffs, &config.shooting)?;
            let (p, m) = stage.best_phase(&o);
            Ok((m, p, o))
        };

        let (lo_rel, hi_rel) = if sweep == 0 {
            let mut scored: Vec<(f64, f64)> = Vec::new();
            for &g in &grid {
                // shooting can fail at the extreme small-eps end; such points are skipped
                if let Ok((m, _, _)) = score(g) {
                    scored.push((g, m));
                }
            }
            if scored.len() < 3 {
                return Err(Error::NoConvergence { detail: "too few necksizes could be shot for the initial map".into() });
            }
            let best = (0..scored.len()).min_by(|&a, &b| scored[a].1.total_cmp(&scored[b].1)).expect("nonempty");
            if best <= 1 {
                boundary = true;
            }
            let l = scored[best.saturating_sub(1)].0;
            let h = scored[(best + 1).min(scored.len() - 1)].0;
            (l, h)
        } else {
            let e = eps_hat / eps_n;
            let w = (1e-3 * e).max(1e-6);
            ((e - w).max(lo), (e + w).min(1.0))
        };

        let mut err: Option<Error> = None;
        let r = brent_minimize(
            |rel| {
                if rel >= 1.0 {
                    return score(1.0).map(|x| x.0);
                }
                match score(rel) {
                    Ok((m, _, _)) => Ok(m),
                    Err(e) => {
                        err.get_or_insert(e);
                        Ok(f64::INFINITY)
                    }
                }
            },
            lo_rel,
            hi_rel,
            config.eps_tol,
            300,
        )?;
        let rel = r.x.min(1.0);
        let (m, p, o) = match score(rel) {
            Ok(x) => x,
            Err(e) => return Err(err.unwrap_or(e)),
        };
        eps_hat = rel * eps_n;
        phase_hat = p;
        misfit = m;
        if boundary && rel <= lo * (1.0 + 1e-3) {
            return Err(Error::EpsAtBoundary { eps: eps_hat });
        }

        // degree-one mode: f1 = a g1 + a^3 g3 (e^{-t}, e^{-3t} weights)
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &ti) in t.iter().enumerate() {
            let st = o.eval(ti + p);
            let g1 = (-ti).exp() * (-st.dv + q * st.v);
            let g3 = (-3.0 * ti).exp() * third_order_axial(st.v, st.dv, st.d2v, st.d3v, nf, q);
            let y = modes.f1[i] - a_hat.powi(3) * g3;
            num += g1 * y;
            den += g1 * g1;
        }
        a_hat = if den > 0.0 { num / den } else { 0.0 };
        orbit = Some(o);
    }
    let orbit = orbit.expect("at least one sweep");
    if boundary && eps_hat <= config.shooting.min_eps * 2.0 {
        return Err(Error::EpsAtBoundary { eps: eps_hat });
    }

    // leftover against the plain first-order model
    let mut profile = Vec::with_capacity(t.len());
    let mut residual: f64 = 0.0;
    for (i, &ti) in t.iter().enumerate() {
        let st = orbit.eval(ti + phase_hat);
        let lin = (-ti).exp() * a_hat * (-st.dv + q * st.v);
        let worst = samples.values[i].iter().zip(&samples.s).map(|(&v, &s)| (v - st.v - lin * s).abs()).fold(0.0, f64::max);
        residual = residual.max(worst);
        profile.push(worst);
    }
    let raw = measure_decay(t, &profile).ok();
    // the window is usually shorter than a period, so divide out the periodic
    // shape of the quadratic term before regressing
    let mut normalized = Vec::with_capacity(t.len());
    for (&ti, &r) in t.iter().zip(&profile) {
        normalized.push(r / quadratic_shape(&orbit, phase_hat, ti, &samples.s)?);
    }
    let decay = measure_decay(t, &normalized).ok();

    let scale = modes.f0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mode0_rms = misfit.sqrt() / scale.max(f64::MIN_POSITIVE);
    let converged = mode0_rms.is_finite() && mode0_rms <= config.max_misfit;
    let span = t[t.len() - 1] - t[0];
    Ok(FitResult {
        eps_hat,
        t_hat: phase_hat,
        a_hat,
        beta_hat: decay.as_ref().map(|d| d.beta),
        residual,
        diagnostics: FitDiagnostics {
            n: coeffs.n,
            eps_rel: eps_hat / eps_n,
            period: orbit.period,
            mode0_rms,
            converged,
            beta_stderr: decay.as_ref().map(|d| d.stderr),
            beta_raw: raw.as_ref().map(|d| d.beta),
            oscillatory: decay.as_ref().map(|d| d.oscillatory),
            orbits_shot: cache.len() - shots_before,
            note: (span < MIN_DECAY_SPAN).then(|| format!("window spans {span} < {MIN_DECAY_SPAN}; no decay rate")),
        },
    })
}

/// `max_s |d^2 v/da^2| / 2` of the translated orbit, with the `e^{-2t}` factor removed;
/// periodic in `t` with the orbit's period.
fn quadratic_shape(orbit: &DelaunayOrbit<f64>, phase: f64, t: f64, s: &[f64]) -> Result<f64> {
    let d = 1e-3 * t.exp();
    let at = |a: f64, si: f64| -> Result<f64> { Ok(TranslatedDelaunay { orbit, a_norm: a, phase }.series(t, si)?.value()) };
    let mut m: f64 = 0.0;
    for &si in s {
        let second = (at(d, si)? + at(-d, si)? - 2.0 * at(0.0, si)?) / (2.0 * d * d);
        m = m.max(second.abs());
    }
    Ok(m * (2.0 * t).exp())
}

/// Fits `(eps, T, |a|)`, failing with [`Error::NoConvergence`] when the
/// mean-mode misfit stays above the configured level.
pub fn fit_tail(samples: &TailSamples, coeffs: &OdeCoefficients<f64>, config: &FitConfig) -> Result<FitResult> {
    let cache = OrbitCache::new();
    let r = fit_tail_detailed(samples, coeffs, config, &cache)?;
    if !r.diagnostics.converged {
        return Err(Error::NoConvergence {
            detail: format!(
                "best candidate eps = {}, T = {}, |a| = {}, relative misfit {:e}",
                r.eps_hat, r.t_hat, r.a_hat, r.diagnostics.mode0_rms
            ),
        });
    }
    Ok(r)
}

/// Minimum window, in `t` units, for a decay estimate.
pub const MIN_DECAY_SPAN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub beta: f64,
    pub stderr: f64,
    /// Largest deviation of `log r` from the regression line.
    pub max_log_deviation: f64,
    pub oscillatory: bool,
}

/// Threshold on the log-deviation above which the profile is flagged oscillatory.
pub const OSCILLATION_THRESHOLD: f64 = 0.02;

/// Log-linear regression `log r(t) ~ c - beta t`.
pub fn measure_decay(t: &[f64], r: &[f64]) -> Result<DecayEstimate> {
    if t.len() != r.len() {
        return Err(Error::InvalidSamples("t and r lengths differ".into()));
    }
    let pts: Vec<(f64, f64)> = t.iter().zip(r).filter(|(_, &ri)| ri > 0.0 && ri.is_finite()).map(|(&ti, &ri)| (ti, ri.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidSamples("need at least three positive residual values".into()));
    }
    let span = pts[pts.len() - 1].0 - pts[0].0;
    if span < MIN_DECAY_SPAN {
        return Err(Error::WindowTooShort { span, required: MIN_DECAY_SPAN });
    }
    let m = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let dev: Vec<f64> = pts.iter().map(|p| p.1 - (ym + slope * (p.0 - tm))).collect();
    let sse: f64 = dev.iter().map(|d| d * d).sum();
    let stderr = (sse / (m - 2.0) / sxx).sqrt();
    let max_dev = dev.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    Ok(DecayEstimate { beta: -slope, stderr, max_log_deviation: max_dev, oscillatory: max_dev > OSCILLATION_THRESHOLD })
}
