//! `qcurv`: tabulate Delaunay orbits, invert the Pohozaev map, fit tails and
//! run the invariant suite.

mod output;

use std::fs::File;
use std::io::{self, Read};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use output::{sink, write_object, write_rows, Format};
use qcurv::asymptotics::{fit_tail_detailed, OrbitCache};
use qcurv::checks::{run_checks, CheckConfig};
use qcurv::ode::hamiltonian;
use qcurv::pohozaev::{necksize_from_pohozaev, pohozaev_of_cylinder, pohozaev_of_necksize, TranslatedDelaunay};
use qcurv::{shoot_delaunay, Coefficients, Error, FitConfig, Integrator, Shooting, TailSamples};

#[derive(Parser)]
#[command(name = "qcurv", version, about = "Delaunay-type solutions of the constant Q-curvature equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Dimension, 5..=12.
    #[arg(long, default_value_t = 5)]
    n: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write data here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integrator relative tolerance.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, env = "QCURV_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Necksize, kappa, period, energy and Pohozaev invariant over a grid.
    Table {
        #[command(flatten)]
        common: Common,
        /// start:stop:count in units of eps_n.
        #[arg(long)]
        eps_grid: String,
    },
    /// One orbit sampled over a number of periods.
    Orbit {
        #[command(flatten)]
        common: Common,
        /// Necksize in units of eps_n.
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        periods: usize,
    },
    /// Necksize with the given radial Pohozaev invariant.
    PohoInverse {
        #[command(flatten)]
        common: Common,
        #[arg(allow_hyphen_values = true)]
        p: f64,
    },
    /// Fit a Delaunay asymptote to a tail given as t,s,v CSV (stdin if no file).
    Fit {
        #[command(flatten)]
        common: Common,
        input: Option<PathBuf>,
    },
    /// Run the invariant suite.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Sample a translated Delaunay tail as t,s,v CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Necksize in units of eps_n.
        #[arg(long)]
        eps: f64,
        /// Phase in units of the period.
        #[arg(long, default_value_t = 0.0)]
        phase: f64,
        /// Translation length.
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        /// start:stop:count of the t nodes.
        #[arg(long, default_value = "3:8:41")]
        t_grid: String,
        #[arg(long, default_value_t = 16)]
        s_count: usize,
    },
}

/// Failure with its exit code.
struct Fail {
    code: u8,
    msg: String,
}

impl Fail {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Csv(_) | Error::InvalidSamples(_) | Error::Dimension { .. } | Error::InvalidConfig(_) => 2,
            Error::OutOfRange { .. } => 3,
            Error::NoConvergence { .. } => 4,
            _ => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Self { code: 1, msg: format!("i/o error: {e}") }
    }
}

type Outcome = Result<u8, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let r = match cli.command {
        Command::Table { common, eps_grid } => table(&common, &eps_grid),
        Command::Orbit { common, eps, periods } => orbit(&common, eps, periods),
        Command::PohoInverse { common, p } => poho_inverse(&common, p),
        Command::Fit { common, input } => fit(&common, input),
        Command::Check { common } => check(&common),
        Command::Synth { common, eps, phase, a, t_grid, s_count } => synth(&common, eps, phase, a, &t_grid, s_count),
    };
    eprintln!("elapsed {:.3} s", start.elapsed().as_secs_f64());
    match r {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn coeffs(c: &Common) -> Result<Coefficients, Fail> {
    Ok(Coefficients::new(c.n)?)
}

fn integrator(c: &Common) -> Result<Integrator, Fail> {
    let mut cfg = Integrator::default();
    if let Some(r) = c.rel_tol {
        cfg.rel_tol = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn shooting(c: &Common) -> Result<Shooting, Fail> {
    Ok(Shooting { integrator: integrator(c)?, ..Shooting::default() })
}

/// Parses `start:stop:count` into `count` evenly spaced values.
fn parse_grid(spec: &str) -> Result<Vec<f64>, Fail> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Fail::usage(format!("grid '{spec}' must be start:stop:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if k == 0 {
        return Err(Fail::usage(format!("grid '{spec}' is empty")));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if k == 1 {
        return Ok(vec![a]);
    }
    Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect())
}

fn check_rel(eps: f64) -> Result<(), Fail> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Fail::usage(format!("necksize {eps} (units of eps_n) outside (0, 1]")))
    }
}

fn pool(c: &Common) -> Result<rayon::ThreadPool, Fail> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(Fail::usage("--jobs must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| Fail { code: 1, msg: e.to_string() })
}

#[derive(Serialize)]
struct TableRow {
    eps_rel: f64,
    eps_abs: f64,
    kappa: f64,
    period: f64,
    ham_level: f64,
    pohozaev: f64,
}

fn table(c: &Common, spec: &str) -> Outcome {
    let co = coeffs(c)?;
    let sc = shooting(c)?;
    let mut grid = parse_grid(spec)?;
    for &g in &grid {
        check_rel(g)?;
    }
    grid.sort_by(f64::total_cmp);
    let rows: Vec<Result<TableRow, Fail>> = pool(c)?.install(|| {
        grid.par_iter()
            .map(|&rel| {
                let o = shoot_delaunay(rel * co.eps_n, &co, &sc)
                    .map_err(|e| Fail { code: Fail::from(e.clone()).code.max(1), msg: format!("eps = {rel} eps_n: {e}") })?;
                Ok(TableRow {
                    eps_rel: rel,
                    eps_abs: o.eps,
                    kappa: o.kappa,
                    period: o.period,
                    ham_level: o.ham_level,
                    pohozaev: co.sphere_area * o.ham_level,
                })
            })
            .collect()
    });
    let mut out = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    out.push(TableRow {
        eps_rel: 1.0,
        eps_abs: co.eps_n,
        kappa: 0.0,
        period: co.linearized_period(),
        ham_level: co.cylinder_energy(),
        pohozaev: pohozaev_of_cylinder(&co),
    });
    write_rows(&out, c.format, sink(c.out.as_deref())?)?;
    eprintln!("table: {} necksizes, n = {}", grid.len(), c.n);
    Ok(0)
}

#[derive(Serialize)]
struct OrbitRow {
    t: f64,
    v: f64,
    dv: f64,
    d2v: f64,
    d3v: f64,
    ham_drift: f64,
}

fn orbit(c: &Common, eps: f64, periods: usize) -> Outcome {
    let co = coeffs(c)?;
    check_rel(eps)?;
    if periods == 0 {
        return Err(Fail::usage("--periods must be at least 1"));
    }
    let o = shoot_delaunay(eps * co.eps_n, &co, &shooting(c)?)?;
    let per = o.samples.len() - 1;
    let h0 = hamiltonian(o.samples[0].1, &co)?;
    let mut drift: f64 = 0.0;
    let mut rows = Vec::with_capacity(periods * per + 1);
    for k in 0..=periods * per {
        // the last row closes the final period with the exact end sample
        let (cycle, i) = if k == periods * per { (periods - 1, per) } else { (k / per, k % per) };
        let (t, s) = o.samples[i];
        let t = t + cycle as f64 * o.period;
        drift = drift.max((hamiltonian(s, &co)? - h0).abs() / h0.abs().max(1.0));
        rows.push(OrbitRow { t, v: s.v, dv: s.dv, d2v: s.d2v, d3v: s.d3v, ham_drift: drift });
    }
    write_rows(&rows, c.format, sink(c.out.as_deref())?)?;
    eprintln!("orbit: eps = {} ({} eps_n), period {}, kappa {}", o.eps, eps, o.period, o.kappa);
    Ok(0)
}

#[derive(Serialize)]
struct PohoRow {
    pohozaev: f64,
    eps_rel: f64,
    eps_abs: f64,
    pohozaev_check: f64,
}

fn poho_inverse(c: &Common, p: f64) -> Outcome {
    let co = coeffs(c)?;
    let sc = shooting(c)?;
    let eps = match necksize_from_pohozaev(p, &co, &sc) {
        Ok(e) => e,
        Err(Error::Degenerate { .. }) => {
            let hi = pohozaev_of_necksize(sc.min_eps, &co, &sc)?;
            let lo = pohozaev_of_cylinder(&co);
            return Err(Fail { code: 3, msg: format!("P = {p} outside the admissible interval [{lo}, {hi}]") });
        }
        Err(e) => return Err(e.into()),
    };
    let back = if eps >= co.eps_n { pohozaev_of_cylinder(&co) } else { pohozaev_of_necksize(eps, &co, &sc)? };
    let row = PohoRow { pohozaev: p, eps_rel: eps / co.eps_n, eps_abs: eps, pohozaev_check: back };
    let w = sink(c.out.as_deref())?;
    match c.format {
        Format::Csv => write_rows(&[row], Format::Csv, w)?,
        Format::Json => write_object(&row, w)?,
    }
    Ok(0)
}

fn fit(c: &Common, input: Option<PathBuf>) -> Outcome {
    let co = coeffs(c)?;
    let mut text = Vec::new();
    match &input {
        Some(p) => File::open(p)?.read_to_end(&mut text)?,
        None => io::stdin().lock().read_to_end(&mut text)?,
    };
    let samples = TailSamples::from_csv(&text[..])?;
    let cfg = FitConfig { shooting: shooting(c)?, ..FitConfig::default() };
    let cache = OrbitCache::new();
    let r = pool(c)?.install(|| fit_tail_detailed(&samples, &co, &cfg, &cache))?;
    write_object(&r, sink(c.out.as_deref())?)?;
    eprintln!("fit: {} orbits shot", r.diagnostics.orbits_shot);
    if r.diagnostics.converged {
        Ok(0)
    } else {
        eprintln!("error: fit did not converge (mode-0 rms {:e}); best candidate printed", r.diagnostics.mode0_rms);
        Ok(4)
    }
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    pass: bool,
    detail: &'a str,
}

fn check(c: &Common) -> Outcome {
    let cfg = CheckConfig { n: c.n, integrator: integrator(c)? };
    coeffs(c)?;
    let outcomes = run_checks(&cfg, |o| eprintln!("{} {} ({:.3} s)", if o.pass { "PASS" } else { "FAIL" }, o.name, o.seconds))?;
    let rows: Vec<CheckRow> = outcomes.iter().map(|o| CheckRow { name: &o.name, pass: o.pass, detail: &o.detail }).collect();
    write_rows(&rows, c.format, sink(c.out.as_deref())?)?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        eprintln!("check: all {} passed", outcomes.len());
        Ok(0)
    } else {
        eprintln!("check: {} of {} failed: {}", failed.len(), outcomes.len(), failed.join(", "));
        Ok(1)
    }
}

fn synth(c: &Common, eps: f64, phase: f64, a: f64, t_grid: &str, s_count: usize) -> Outcome {
    let co = coeffs(c)?;
    check_rel(eps)?;
    let t = parse_grid(t_grid)?;
    if s_count < 2 {
        return Err(Fail::usage("--s-count must be at least 2"));
    }
    let s: Vec<f64> = (0..s_count).map(|j| -1.0 + 2.0 * j as f64 / (s_count - 1) as f64).collect();
    let o = shoot_delaunay(eps * co.eps_n, &co, &shooting(c)?)?;
    let field = TranslatedDelaunay { orbit: &o, a_norm: a, phase: phase * o.period };
    let samples = TailSamples::from_fn(t, s, |t, s| Ok(field.series(t, s)?.value()))?;
    samples.write_csv(sink(c.out.as_deref())?)?;
    Ok(0)
}
