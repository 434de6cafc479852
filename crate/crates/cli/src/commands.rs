//! The five subcommands. Each writes its tables into the run directory and
//! records invariant checks; `run` adds the manifest.

use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use porous_frac::experiments::{self, WindowPolicy};
use porous_frac::fit::fit_loglog;
use porous_frac::kernel::{check_kernel_identity, DiffusiveGrid};
use porous_frac::modal::{self, SimConfig};
use porous_frac::resolvent::{self, ForcingChoice, ModeForcing, ProbeFrequency};
use porous_frac::spectrum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Command, Forcing, Probe, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{Artifacts, Cell, InvariantCheck};
use crate::plot::{Plot, Series, Style};

pub const MANIFEST: &str = "manifest.json";
/// Row cap for the decay table; longer traces are strided.
pub const MAX_DECAY_ROWS: usize = 5000;

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub kind: &'static str,
    pub alpha: f64,
    pub step: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub nodes: usize,
}

impl GridInfo {
    fn of(kind: &'static str, g: &DiffusiveGrid) -> Self {
        Self {
            kind,
            alpha: g.alpha,
            step: g.substitution.step,
            u_min: g.substitution.u_min,
            u_max: g.substitution.u_max,
            nodes: g.len(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    status: &'static str,
    error: Option<String>,
    config: &'a RunConfig,
    grid: &'a Option<GridInfo>,
    elapsed_seconds: f64,
    checks: &'a [InvariantCheck],
    results: &'a Map<String, Value>,
    files: &'a [String],
}

#[derive(Debug, Clone)]
pub struct Report {
    pub out_dir: PathBuf,
    pub checks: Vec<InvariantCheck>,
    pub files: Vec<String>,
}

struct Ctx {
    art: Artifacts,
    checks: Vec<InvariantCheck>,
    results: Map<String, Value>,
    grid: Option<GridInfo>,
}

impl Ctx {
    fn check(&mut self, c: InvariantCheck) {
        if !c.passed {
            warn!("check {} failed: {} > {}", c.name, c.value, c.threshold);
        }
        self.checks.push(c);
    }

    fn result<T: Serialize>(&mut self, key: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.results.insert(key.to_string(), v);
    }

    fn plot(&mut self, cfg: &RunConfig, name: &str, plot: Plot) -> CliResult<()> {
        if cfg.plots {
            self.art.write(name, &plot.render())?;
        }
        Ok(())
    }
}

/// Runs the configured command. The manifest is written even when the run
/// fails part way, with status `FAILED` and whatever files were produced.
pub fn run(cfg: &RunConfig) -> CliResult<Report> {
    let start = Instant::now();
    let mut ctx = Ctx {
        art: Artifacts::create(&cfg.out_dir)?,
        checks: Vec::new(),
        results: Map::new(),
        grid: None,
    };
    info!("{} -> {}", cfg.command.name(), cfg.out_dir.display());
    let outcome = match cfg.command {
        Command::KernelCheck => kernel_check(cfg, &mut ctx),
        Command::Simulate => simulate(cfg, &mut ctx),
        Command::Spectrum => spectrum_cmd(cfg, &mut ctx),
        Command::Resolvent => resolvent_cmd(cfg, &mut ctx),
        Command::DecayFit => decay_fit(cfg, &mut ctx),
    };
    let failed: Vec<String> = ctx
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    let outcome = outcome.and_then(|()| {
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
        }
    });

    let mut files = ctx.art.files.clone();
    files.push(MANIFEST.to_string());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name(),
        status: if outcome.is_ok() { "ok" } else { "FAILED" },
        error: outcome.as_ref().err().map(|e| e.to_string()),
        config: cfg,
        grid: &ctx.grid,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        checks: &ctx.checks,
        results: &ctx.results,
        files: &files,
    };
    ctx.art.json(MANIFEST, &manifest)?;
    outcome?;
    Ok(Report {
        out_dir: cfg.out_dir.clone(),
        checks: ctx.checks,
        files,
    })
}

fn kernel_check(cfg: &RunConfig, ctx: &mut Ctx) -> CliResult<()> {
    let p = &cfg.params;
    let mut alphas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    if !alphas.iter().any(|a| (a - p.alpha).abs() < 1e-12) {
        alphas.push(p.alpha);
    }
    let mut kappas = vec![0.5, 1.0, 5.0];
    if p.kappa > 0.0 && !kappas.contains(&p.kappa) {
        kappas.push(p.kappa);
    }
    let lambdas = [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(10.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, 10.0),
    ];
    let mut rows = Vec::new();
    let mut worst = (0.0, 0.0, 0.0, Complex64::new(0.0, 0.0));
    for &alpha in &alphas {
        let grid = DiffusiveGrid::calibration(alpha)?;
        if alpha == p.alpha {
            ctx.grid = Some(GridInfo::of("calibration", &grid));
        }
        for &kappa in &kappas {
            for &lambda in &lambdas {
                let c = check_kernel_identity(&grid, alpha, kappa, lambda)?;
                if c.rel_err > worst.0 {
                    worst = (c.rel_err, alpha, kappa, lambda);
                }
                rows.push(vec![
                    Cell::F(alpha),
                    Cell::F(kappa),
                    Cell::F(lambda.re),
                    Cell::F(lambda.im),
                    Cell::F(c.numeric.re),
                    Cell::F(c.numeric.im),
                    Cell::F(c.exact.re),
                    Cell::F(c.exact.im),
                    Cell::F(c.rel_err),
                ]);
            }
        }
    }
    ctx.art.csv(
        "kernel_check.csv",
        &[
            "alpha", "kappa", "lambda_re", "lambda_im", "numeric_re", "numeric_im", "exact_re",
            "exact_im", "rel_err",
        ],
        &rows,
    )?;
    ctx.result("cases", rows.len());
    ctx.result(
        "worst",
        json!({ "rel_err": worst.0, "alpha": worst.1, "kappa": worst.2, "lambda": [worst.3.re, worst.3.im] }),
    );
    ctx.check(InvariantCheck::at_most("kernel_rel_err", worst.0, cfg.numerics.kernel_tol));
    Ok(())
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Every `stride`-th index, always keeping the last.
fn strided(len: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

fn energy_checks(ctx: &mut Ctx, trace: &modal::EnergyTrace, gamma: f64) {
    let e0 = trace.initial_energy();
    let min_e = trace.energy.iter().cloned().fold(f64::INFINITY, f64::min);
    ctx.check(InvariantCheck::flag("energy_nonnegative", min_e >= 0.0));
    ctx.check(InvariantCheck::at_most("energy_increase", trace.max_increase(), 1e-12 * e0));
    ctx.check(InvariantCheck::at_most("balance_residual", trace.max_abs_residual(), 1e-12 * e0));
    if gamma == 0.0 {
        let drift = (trace.energy.last().copied().unwrap_or(e0) - e0).abs();
        ctx.check(InvariantCheck::at_most("energy_drift", drift, 1e-10 * e0));
    }
}

fn simulate(cfg: &RunConfig, ctx: &mut Ctx) -> CliResult<()> {
    let n = &cfg.numerics;
    let t_end = n.t_end.unwrap_or(20.0);
    let mut sim = SimConfig::new(cfg.params, n.modes, n.dt, t_end)?.with_initial(cfg.initial.to_initial()?);
    sim.snapshot_every = n.snapshot_every;
    ctx.grid = Some(GridInfo::of("dynamics", &sim.grid));
    let out = modal::simulate(&sim)?;
    let tr = &out.trace;
    let rows: Vec<Vec<Cell>> = (0..tr.times.len())
        .map(|k| {
            vec![
                Cell::F(tr.times[k]),
                Cell::F(tr.energy[k]),
                Cell::F(tr.dissipation[k]),
                Cell::F(tr.residual[k]),
            ]
        })
        .collect();
    ctx.art.csv("energy.csv", &["t", "E", "D", "residual"], &rows)?;

    if n.snapshot_every > 0 {
        let xs = linspace(0.0, out.length, n.snapshot_points);
        let mut snap_rows = Vec::new();
        for snap in &out.trajectory {
            let f = modal::reconstruct(std::slice::from_ref(snap), out.length, &xs, snap.time)?;
            for i in 0..xs.len() {
                snap_rows.push(vec![Cell::F(f.time), Cell::F(xs[i]), Cell::F(f.z[i]), Cell::F(f.u[i])]);
            }
        }
        ctx.art.csv("snapshots.csv", &["t", "x", "z", "u"], &snap_rows)?;
        ctx.result("snapshots", out.trajectory.len());
    }

    energy_checks(ctx, tr, cfg.params.gamma);
    ctx.result("steps", sim.steps());
    ctx.result("t_end", t_end);
    ctx.result("initial_energy", tr.initial_energy());
    ctx.result("final_energy", tr.energy.last().copied());
    ctx.result("cumulative_defect", tr.cumulative_defect());

    let idx = strided(tr.times.len(), tr.times.len().div_ceil(2000));
    let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (tr.times[k], tr.energy[k])).collect();
    let positive = pts.iter().all(|p| p.1 > 0.0);
    let mut plot = Plot::new("energy", "t", "E(t)").with(Series::new("E", pts, Style::Line));
    if positive {
        plot = plot.log_y();
    }
    ctx.plot(cfg, "energy.svg", plot)
}

fn spectrum_cmd(cfg: &RunConfig, ctx: &mut Ctx) -> CliResult<()> {
    let p = &cfg.params;
    let n = &cfg.numerics;
    let branches = spectrum::branch_sweep(p, n.n_min..=n.n_max, n.root_tol)?;
    let mut rows = Vec::new();
    let (mut max_res, mut max_re, mut max_conj) = (0.0f64, f64::NEG_INFINITY, 0.0f64);
    for b in &branches {
        for pt in &b.points {
            max_res = max_res.max(pt.residual);
            max_re = max_re.max(pt.root.re);
            max_conj = max_conj.max(pt.conjugate_residual);
            rows.push(vec![
                Cell::from(pt.n),
                Cell::F(pt.mu_n),
                Cell::from(b.branch.label()),
                Cell::F(pt.root.re),
                Cell::F(pt.root.im),
                Cell::F(pt.residual),
                Cell::F(pt.eps_pred.re),
                Cell::F(pt.eps_pred.im),
                Cell::F(pt.scaled_re),
            ]);
        }
    }
    ctx.art.csv(
        "spectrum.csv",
        &[
            "n", "mu_n", "branch", "re_lambda", "im_lambda", "residual", "re_eps_pred", "im_eps_pred",
            "scaled_re",
        ],
        &rows,
    )?;
    ctx.check(InvariantCheck::at_most("root_residual", max_res, n.root_tol));
    ctx.check(InvariantCheck::flag("left_half_plane", max_re < 0.0));
    ctx.check(InvariantCheck::at_most("conjugate_residual", max_conj, 1e-10));

    // the asymptotic regime starts around n = 50; shorter sweeps fit what they have
    let tail_start = if n.n_max >= 100 { n.n_min.max(50) } else { n.n_min };
    let d = p.derived();
    let mut summary = Vec::new();
    let mut slope_plot = Plot::new("|Re λ| against μ", "μ_n", "|Re λ_n|").log_log();
    for b in &branches {
        let fit = b.decay_slope(tail_start..=n.n_max);
        let last = b.points.last();
        summary.push(json!({
            "branch": b.branch.label(),
            "speed": b.speed,
            "fit_range": [tail_start, n.n_max],
            "slope": fit.map(|f| f.slope),
            "slope_band_2se": fit.map(|f| f.band(2.0)),
            "target_slope": p.alpha - 1.0,
            "beta_predicted": b.beta_predicted,
            "beta_measured": last.map(|pt| pt.scaled_re),
            "ratio_bounds_hold_from_50": b.ratio_bounds_hold(&d, 50),
        }));
        let pts: Vec<(f64, f64)> = b.points.iter().map(|pt| (pt.mu_n, pt.root.re.abs())).collect();
        slope_plot = slope_plot.with(Series::new(&format!("branch {}", b.branch.label()), pts, Style::Markers));
    }
    ctx.result("branches", summary);

    let mut plane = Plot::new("spectrum", "Re λ", "Im λ");
    for b in &branches {
        let pts = b.points.iter().map(|pt| (pt.root.re, pt.root.im)).collect();
        plane = plane.with(Series::new(&format!("branch {}", b.branch.label()), pts, Style::Markers));
    }
    ctx.plot(cfg, "spectrum.svg", plane)?;
    ctx.plot(cfg, "spectrum_decay.svg", slope_plot)
}

/// Random static forcing whose modal coefficients decay like `n^{−2}`.
fn random_forcing(rng: &mut ChaCha8Rng, modes: usize) -> Vec<ModeForcing> {
    (1..=modes)
        .map(|n| {
            let scale = (n as f64).powi(-2);
            let mut c = || Complex64::new(rng.random_range(-1.0..1.0) * scale, 0.0);
            ModeForcing {
                f1: c(),
                f2: c(),
                f3: c(),
                f4: c(),
                f5: None,
            }
        })
        .collect()
}

fn resolvent_cmd(cfg: &RunConfig, ctx: &mut Ctx) -> CliResult<()> {
    let p = &cfg.params;
    let n = &cfg.numerics;
    let grid = DiffusiveGrid::calibration(p.alpha)?;
    ctx.grid = Some(GridInfo::of("calibration", &grid));
    let forcing = match n.forcing {
        Forcing::F2 => ForcingChoice::UnitF2,
        Forcing::F4 => ForcingChoice::UnitF4,
    };
    let probe = match n.probe {
        Probe::Limit => ProbeFrequency::LimitSpeed,
        Probe::Root => ProbeFrequency::RefinedRoot,
    };
    let g = resolvent::resolvent_growth(p, n.n_min..=n.n_max, forcing, probe, &grid)?;
    let rows: Vec<Vec<Cell>> = g
        .samples
        .iter()
        .map(|s| vec![Cell::from(s.n), Cell::F(s.lambda), Cell::F(s.ratio), Cell::F(s.det_abs)])
        .collect();
    ctx.art.csv("resolvent.csv", &["n", "lambda", "ratio", "det_abs"], &rows)?;

    let min_det = g.samples.iter().map(|s| s.det_abs).fold(f64::INFINITY, f64::min);
    ctx.check(InvariantCheck::flag("determinant_nonzero", min_det > 0.0));
    ctx.check(InvariantCheck::flag(
        "ratios_finite",
        g.samples.iter().all(|s| s.ratio.is_finite() && s.ratio > 0.0),
    ));
    let band = g.fit.band(2.0);
    let target = 1.0 - p.alpha;
    ctx.result(
        "growth",
        json!({
            "slope": g.fit.slope,
            "slope_stderr": g.fit.slope_stderr,
            "slope_band_2se": band,
            "r_squared": g.fit.r_squared,
            "target_slope": target,
            "target_in_band": band.0 <= target && target <= band.1,
            "min_det_abs": min_det,
        }),
    );

    // static problem with random smooth forcing
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ratios = Vec::with_capacity(n.trials);
    for _ in 0..n.trials {
        ratios.push(resolvent::static_solve(p, &random_forcing(&mut rng, n.modes), &grid)?.ratio());
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    ctx.check(InvariantCheck::flag("static_ratio_finite", ratios.iter().all(|r| r.is_finite())));
    ctx.result(
        "static",
        json!({ "seed": cfg.seed, "trials": n.trials, "modes": n.modes, "max_ratio": max_ratio, "ratios": ratios }),
    );

    let (x, y): (Vec<f64>, Vec<f64>) = g.samples.iter().map(|s| (s.lambda, s.ratio)).unzip();
    let line: Vec<(f64, f64)> = [x[0], x[x.len() - 1]]
        .iter()
        .map(|&l| (l, (g.fit.intercept + g.fit.slope * l.ln()).exp()))
        .collect();
    let plot = Plot::new("resolvent growth", "λ*", "‖U‖/‖F‖")
        .log_log()
        .with(Series::new("ratio", x.into_iter().zip(y).collect(), Style::Markers))
        .with(Series::new(&format!("slope {:.3}", g.fit.slope), line, Style::Line));
    ctx.plot(cfg, "resolvent.svg", plot)
}

fn decay_fit(cfg: &RunConfig, ctx: &mut Ctx) -> CliResult<()> {
    let p = &cfg.params;
    let n = &cfg.numerics;
    if p.gamma <= 0.0 {
        return Err(CliError::Validation(
            "decay-fit needs gamma > 0; without damping the energy is constant".into(),
        ));
    }
    let t_end = match n.t_end {
        Some(t) => t,
        None => experiments::suggested_t_end(p, n.modes)?,
    };
    let sim = SimConfig::new(*p, n.modes, n.dt, t_end)?.with_initial(cfg.initial.to_initial()?);
    ctx.grid = Some(GridInfo::of("dynamics", &sim.grid));
    let policy = WindowPolicy::Auto {
        variation: n.window_variation,
        smoothing: 2.0,
        samples_per_decade: 24,
    };
    let run = experiments::decay_fit(&sim, policy)?;
    let tr = &run.trace;
    let stride = tr.times.len().div_ceil(MAX_DECAY_ROWS).max(1);
    let rows: Vec<Vec<Cell>> = strided(tr.times.len(), stride)
        .into_iter()
        .map(|k| vec![Cell::F(tr.times[k]), Cell::F(tr.energy[k])])
        .collect();
    ctx.art.csv("decay.csv", &["t", "E"], &rows)?;
    let slope_rows: Vec<Vec<Cell>> = run
        .local_slopes
        .iter()
        .map(|&(t, s)| vec![Cell::F(t), Cell::F(s)])
        .collect();
    ctx.art.csv("decay_local_slopes.csv", &["t", "local_slope"], &slope_rows)?;

    let r = &run.result;
    if r.inconclusive {
        warn!("no window with a stable log-log slope; the fit is inconclusive");
    }
    let report = json!({
        "alpha": r.alpha,
        "q": r.q,
        "target": r.target,
        "relative_error": r.relative_error(),
        "window": r.window,
        "r_squared": r.r_squared,
        "exponential_floor": r.exponential_floor,
        "inconclusive": r.inconclusive,
        "t_end": t_end,
        "dt": n.dt,
        "modes": n.modes,
        "csv_stride": stride,
    });
    ctx.art.json("decay_fit.json", &report)?;
    ctx.result("fit", report);
    energy_checks(ctx, tr, p.gamma);

    let mut plot = Plot::new("energy decay", "t", "E(t)")
        .log_log()
        .with(Series::new("E", run.samples.clone(), Style::Line));
    if !r.inconclusive {
        let (x, y): (Vec<f64>, Vec<f64>) = run
            .samples
            .iter()
            .filter(|(t, _)| *t >= r.window.0 && *t <= r.window.1)
            .cloned()
            .unzip();
        if let Some(f) = fit_loglog(&x, &y) {
            let line = [r.window.0, r.window.1]
                .iter()
                .map(|&t| (t, (f.intercept + f.slope * t.ln()).exp()))
                .collect();
            plot = plot.with(Series::new(&format!("q = {:.3}", -f.slope), line, Style::Line));
        }
    }
    ctx.plot(cfg, "decay.svg", plot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_keep_the_endpoints() {
        assert_eq!(strided(10, 4), vec![0, 4, 8, 9]);
        assert_eq!(strided(9, 4), vec![0, 4, 8]);
        assert_eq!(strided(3, 1), vec![0, 1, 2]);
        assert!(strided(0, 3).is_empty());
    }

    #[test]
    fn linspace_hits_both_ends() {
        let x = linspace(0.0, 2.0, 5);
        assert_eq!(x, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
