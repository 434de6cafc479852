//! Decay-rate experiments tying the simulation to the spectral exponents.
//!
//! A finite modal truncation always ends in exponential decay at the rate of
//! the slowest mode, so the algebraic law `E ~ t^{−2/(1−α)}` is only visible
//! in an intermediate window. The spectral and resolvent exponents are the
//! sharp checks; the time-domain fit here is corroborative.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{fit_loglog, LineFit};
use crate::modal::{simulate_with, EnergyTrace, InitialData, Profile, SimConfig};
use crate::model::PhysicalParams;
use crate::spectrum;

/// How the fit window is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindowPolicy {
    /// Largest window over which the smoothed local log-log slope varies by
    /// less than `variation` relative to its mean.
    Auto {
        variation: f64,
        /// Local slopes are regressions over `[t, smoothing·t]`.
        smoothing: f64,
        samples_per_decade: usize,
    },
    Fixed { t_a: f64, t_b: f64 },
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy::Auto {
            variation: 0.15,
            smoothing: 2.0,
            samples_per_decade: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFitResult {
    pub alpha: f64,
    pub window: (f64, f64),
    /// Fitted exponent in `E ~ t^{−q}`.
    pub q: f64,
    /// `2/(1−α)`.
    pub target: f64,
    pub r_squared: f64,
    /// `2·min|Re λₙ|` over the simulated modes: the rate of the terminal
    /// exponential regime. The minimum sits at the highest mode.
    pub exponential_floor: f64,
    pub inconclusive: bool,
}

impl DecayFitResult {
    pub fn relative_error(&self) -> f64 {
        (self.q - self.target).abs() / self.target
    }
}

/// Fit result together with the data it was computed from.
#[derive(Debug, Clone)]
pub struct DecayRun {
    pub result: DecayFitResult,
    pub trace: EnergyTrace,
    /// `(t, E)` on the log-spaced sample grid.
    pub samples: Vec<(f64, f64)>,
    /// `(t, s)` with `s` the smoothed local slope over `[t, smoothing·t]`.
    pub local_slopes: Vec<(f64, f64)>,
}

/// Standard setup: `N` modes, `z₀` with sine coefficients `n^{−5/2}` (the
/// borderline decay for data in the generator domain), rest at zero.
pub fn standard_decay_config(params: PhysicalParams, n_modes: usize, dt: f64, t_end: f64) -> Result<SimConfig> {
    Ok(SimConfig::new(params, n_modes, dt, t_end)?.with_initial(InitialData {
        z0: Profile::PowerLaw {
            amplitude: 1.0,
            exponent: 2.5,
        },
        ..Default::default()
    }))
}

/// Final time that covers the algebraic window: the local slope of the
/// slowest exponential reaches the target exponent near `t = target/floor`.
pub fn suggested_t_end(params: &PhysicalParams, n_modes: usize) -> Result<f64> {
    let target = 2.0 / (1.0 - params.alpha);
    Ok((target / exponential_floor(params, n_modes)?).clamp(20.0, 400.0))
}

pub fn decay_fit(cfg: &SimConfig, policy: WindowPolicy) -> Result<DecayRun> {
    decay_fit_with(cfg, policy, Exec::default())
}

pub fn decay_fit_with(cfg: &SimConfig, policy: WindowPolicy, exec: Exec) -> Result<DecayRun> {
    let p = &cfg.params;
    if p.gamma <= 0.0 {
        return Err(Error::Domain(
            "decay fit needs γ > 0; without damping the energy is constant".into(),
        ));
    }
    if p.kappa <= 0.0 {
        return Err(Error::KappaGate("decay fit needs κ > 0".into()));
    }
    let out = simulate_with(cfg, exec)?;
    let trace = out.trace;
    let floor = exponential_floor(p, cfg.n_modes)?;
    let target = 2.0 / (1.0 - p.alpha);

    let per_decade = match policy {
        WindowPolicy::Auto {
            samples_per_decade, ..
        } => samples_per_decade,
        WindowPolicy::Fixed { .. } => 24,
    };
    let samples = log_samples(&trace, cfg.dt, per_decade);
    let (window, local_slopes) = match policy {
        WindowPolicy::Fixed { t_a, t_b } => {
            if !(t_a > 0.0 && t_a < t_b) {
                return Err(Error::Domain(format!("invalid fit window [{t_a}, {t_b}]")));
            }
            (Some((t_a, t_b)), Vec::new())
        }
        WindowPolicy::Auto {
            variation,
            smoothing,
            ..
        } => {
            let slopes = smoothed_slopes(&samples, smoothing);
            (select_window(&slopes, variation, smoothing), slopes)
        }
    };

    let (window, fit) = match window {
        Some(w) => (w, fit_window(&samples, w)),
        None => ((0.0, 0.0), None),
    };
    let result = match fit {
        Some(f) => DecayFitResult {
            alpha: p.alpha,
            window,
            q: -f.slope,
            target,
            r_squared: f.r_squared,
            exponential_floor: floor,
            inconclusive: false,
        },
        None => DecayFitResult {
            alpha: p.alpha,
            window,
            q: f64::NAN,
            target,
            r_squared: f64::NAN,
            exponential_floor: floor,
            inconclusive: true,
        },
    };
    Ok(DecayRun {
        result,
        trace,
        samples,
        local_slopes,
    })
}

/// `2·min|Re λₙ|` over modes `1..=n_modes` and both branches.
pub fn exponential_floor(p: &PhysicalParams, n_modes: usize) -> Result<f64> {
    let branches = spectrum::branch_sweep(p, 1..=n_modes.max(1), spectrum::DEFAULT_ROOT_TOL)?;
    let slowest = branches
        .iter()
        .flat_map(|b| b.points.iter())
        .fold(f64::INFINITY, |m, pt| m.min(pt.root.re.abs()));
    Ok(2.0 * slowest)
}

/// `(t, E)` at geometrically spaced step indices, skipping the first ten
/// steps and any energy below round-off.
fn log_samples(trace: &EnergyTrace, dt: f64, per_decade: usize) -> Vec<(f64, f64)> {
    let last = trace.energy.len() - 1;
    let e0 = trace.initial_energy();
    let ratio = 10f64.powf(1.0 / per_decade.max(1) as f64);
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut t = 10.0 * dt;
    while t <= last as f64 * dt * (1.0 + 1e-12) {
        let k = ((t / dt).round() as usize).min(last);
        let e = trace.energy[k];
        if e <= 1e-13 * e0 {
            break;
        }
        if out.last().is_none_or(|&(tl, _)| trace.times[k] > tl) {
            out.push((trace.times[k], e));
        }
        t *= ratio;
    }
    out
}

/// Least-squares slope of `log E` over `[t_i, smoothing·t_i]` for every
/// sample whose span fits in the record.
pub fn smoothed_slopes(samples: &[(f64, f64)], smoothing: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (i, &(t, _)) in samples.iter().enumerate() {
        let end = t * smoothing;
        if samples.last().is_none_or(|&(tl, _)| tl < end * (1.0 - 1e-9)) {
            break;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = samples[i..]
            .iter()
            .take_while(|&&(s, _)| s <= end * (1.0 + 1e-9))
            .copied()
            .unzip();
        if let Some(f) = fit_loglog(&x, &y) {
            out.push((t, f.slope));
        }
    }
    out
}

/// Longest run (in `log t`) of local slopes that are negative and stay
/// within `variation·|mean|` of each other. Needs at least three slopes.
pub fn select_window(slopes: &[(f64, f64)], variation: f64, smoothing: f64) -> Option<(f64, f64)> {
    let mut best: Option<(usize, usize)> = None;
    for i in 0..slopes.len() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut sum = 0.0;
        for j in i..slopes.len() {
            let s = slopes[j].1;
            if s >= 0.0 {
                break;
            }
            lo = lo.min(s);
            hi = hi.max(s);
            sum += s;
            let mean = sum / (j - i + 1) as f64;
            if hi - lo >= variation * mean.abs() {
                break;
            }
            if j >= i + 2 {
                let span = slopes[j].0 / slopes[i].0;
                if best.is_none_or(|(a, b)| span > slopes[b].0 / slopes[a].0) {
                    best = Some((i, j));
                }
            }
        }
    }
    best.map(|(i, j)| (slopes[i].0, slopes[j].0 * smoothing))
}

fn fit_window(samples: &[(f64, f64)], (t_a, t_b): (f64, f64)) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|&&(t, _)| t >= t_a * (1.0 - 1e-9) && t <= t_b * (1.0 + 1e-9))
        .copied()
        .unzip();
    fit_loglog(&x, &y)
}

/// One row of [`eigen_decay_crosscheck`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckRow {
    pub alpha: f64,
    /// Slope of `log|Re λₙ|` against `log μₙ`, fast then slow branch.
    pub slopes: [f64; 2],
    pub expected_slope: f64,
    /// `2/(1−α)`.
    pub time_exponent: f64,
    pub consistent: bool,
}

/// Branch decay slopes over `modes` for each `α`, compared against
/// `−(1−α)` with relative tolerance 5%.
pub fn eigen_decay_crosscheck(
    p: &PhysicalParams,
    alphas: &[f64],
    modes: std::ops::RangeInclusive<usize>,
) -> Result<Vec<CrosscheckRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let q = PhysicalParams {
                alpha,
                ..p.clone()
            };
            let branches = spectrum::branch_sweep(&q, modes.clone(), spectrum::DEFAULT_ROOT_TOL)?;
            let mut slopes = [0.0; 2];
            for (s, b) in slopes.iter_mut().zip(&branches) {
                *s = b
                    .decay_slope(modes.clone())
                    .ok_or_else(|| Error::Domain("branch slope needs at least two modes".into()))?
                    .slope;
            }
            let expected = -(1.0 - alpha);
            let consistent = slopes
                .iter()
                .all(|s| (s - expected).abs() < 0.05 * (1.0 - alpha));
            Ok(CrosscheckRow {
                alpha,
                slopes,
                expected_slope: expected,
                time_exponent: 2.0 / (1.0 - alpha),
                consistent,
            })
        })
        .collect()
}
