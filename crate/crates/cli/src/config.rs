//! Run configuration: defaults, then the config file, then the output-dir
//! environment variable, then command-line flags.
//!
//! The file is flat `key = value` text under `[section]` headers:
//!
//! ```text
//! [params]
//! alpha = 0.5
//! gamma = 1.0
//!
//! [numerics]
//! modes = 32
//! dt = 0.005
//!
//! [initial]
//! z0 = "parabola:1.0"
//!
//! [output]
//! dir = "runs/a05"
//! plots = "on"
//! ```

use std::path::{Path, PathBuf};

use porous_frac::modal::{InitialData, Profile};
use porous_frac::PhysicalParams;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "POROUS_FRAC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    KernelCheck,
    Simulate,
    Spectrum,
    Resolvent,
    DecayFit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Simulate => "simulate",
            Command::Spectrum => "spectrum",
            Command::Resolvent => "resolvent",
            Command::DecayFit => "decay-fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Probe {
    Limit,
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Forcing {
    F2,
    F4,
}

/// Numerical settings; `None` entries take per-command defaults at resolve
/// time.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Numerics {
    pub modes: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub root_tol: Option<f64>,
    pub kernel_tol: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub snapshot_points: Option<usize>,
    pub window_variation: Option<f64>,
    pub probe: Option<Probe>,
    pub forcing: Option<Forcing>,
    pub trials: Option<usize>,
}

/// Fully resolved numerical settings echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedNumerics {
    pub modes: usize,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub n_min: usize,
    pub n_max: usize,
    pub root_tol: f64,
    pub kernel_tol: f64,
    pub snapshot_every: usize,
    pub snapshot_points: usize,
    pub window_variation: f64,
    pub probe: Probe,
    pub forcing: Forcing,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialSpec {
    pub z0: String,
    pub z1: String,
    pub u0: String,
    pub u1: String,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            z0: "parabola:1.0".into(),
            z1: "zero".into(),
            u0: "zero".into(),
            u1: "zero".into(),
        }
    }
}

impl InitialSpec {
    /// Data for the decay fit: `z₀` with sine coefficients `n^{−5/2}`.
    pub fn decay_default() -> Self {
        Self {
            z0: "powerlaw:1.0:2.5".into(),
            ..Self::default()
        }
    }

    pub fn to_initial(&self) -> CliResult<InitialData> {
        Ok(InitialData {
            z0: parse_profile(&self.z0)?,
            z1: parse_profile(&self.z1)?,
            u0: parse_profile(&self.u0)?,
            u1: parse_profile(&self.u1)?,
        })
    }
}

/// `zero`, `sine:MODE:AMP`, `parabola:AMP`, `powerlaw:AMP:EXP` or
/// `coeffs:c1,c2,...`.
pub fn parse_profile(spec: &str) -> CliResult<Profile> {
    let bad = || {
        CliError::Config(format!(
            "bad profile '{spec}'; expected zero | sine:MODE:AMP | parabola:AMP | powerlaw:AMP:EXP | coeffs:c1,c2,..."
        ))
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.trim().split(':').collect();
    match parts.as_slice() {
        ["zero"] => Ok(Profile::Zero),
        ["sine", mode, amp] => Ok(Profile::Sine {
            mode: mode.trim().parse().map_err(|_| bad())?,
            amplitude: num(amp)?,
        }),
        ["parabola", amp] => Ok(Profile::Parabola { amplitude: num(amp)? }),
        ["powerlaw", amp, exp] => Ok(Profile::PowerLaw {
            amplitude: num(amp)?,
            exponent: num(exp)?,
        }),
        ["coeffs", list] => Ok(Profile::Coefficients(
            list.split(',').map(num).collect::<CliResult<_>>()?,
        )),
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: PhysicalParams,
    pub numerics: ResolvedNumerics,
    pub initial: InitialSpec,
    pub out_dir: PathBuf,
    pub plots: bool,
    pub seed: u64,
    /// Config file the values were read from, if any.
    pub source: Option<PathBuf>,
}

/// Values from the config file before flags are applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileConfig {
    pub params: PhysicalParams,
    pub numerics: Numerics,
    pub initial: InitialSpec,
    pub out_dir: Option<PathBuf>,
    pub plots: Option<bool>,
    pub seed: Option<u64>,
}

const PARAM_KEYS: [&str; 9] = [
    "rho_z", "rho_u", "a1", "a2", "a3", "gamma", "alpha", "kappa", "length",
];
const NUMERIC_KEYS: [&str; 13] = [
    "modes",
    "dt",
    "t_end",
    "n_min",
    "n_max",
    "root_tol",
    "kernel_tol",
    "snapshot_every",
    "snapshot_points",
    "window_variation",
    "probe",
    "forcing",
    "trials",
];
const INITIAL_KEYS: [&str; 4] = ["z0", "z1", "u0", "u1"];
const OUTPUT_KEYS: [&str; 2] = ["dir", "plots"];
const RUN_KEYS: [&str; 1] = ["seed"];
const SECTIONS: [(&str, &[&str]); 5] = [
    ("params", &PARAM_KEYS),
    ("numerics", &NUMERIC_KEYS),
    ("initial", &INITIAL_KEYS),
    ("output", &OUTPUT_KEYS),
    ("run", &RUN_KEYS),
];

fn valid_keys() -> String {
    SECTIONS
        .iter()
        .map(|(s, keys)| format!("[{s}] {}", keys.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn parse_on_off(s: &str) -> CliResult<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(CliError::Config(format!("expected on or off, got '{s}'"))),
    }
}

fn as_f64(section: &str, key: &str, v: &toml::Value) -> CliResult<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(CliError::Config(format!("[{section}] {key} must be a number"))),
    }
}

fn as_usize(section: &str, key: &str, v: &toml::Value) -> CliResult<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(CliError::Config(format!(
            "[{section}] {key} must be a nonnegative integer"
        ))),
    }
}

fn as_str<'a>(section: &str, key: &str, v: &'a toml::Value) -> CliResult<&'a str> {
    v.as_str()
        .ok_or_else(|| CliError::Config(format!("[{section}] {key} must be a quoted string")))
}

/// Parses config text. Unknown sections or keys are errors that list the
/// valid keys.
pub fn parse_config_text(text: &str) -> CliResult<FileConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut cfg = FileConfig::default();
    for (section, body) in &table {
        let keys = SECTIONS
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, k)| *k)
            .ok_or_else(|| {
                CliError::Config(format!("unknown section [{section}]; valid keys: {}", valid_keys()))
            })?;
        let body = body.as_table().ok_or_else(|| {
            CliError::Config(format!("'{section}' must be a [section] header; valid keys: {}", valid_keys()))
        })?;
        for (key, v) in body {
            if !keys.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key '{key}' in [{section}]; valid keys: {}",
                    valid_keys()
                )));
            }
            apply_key(&mut cfg, section, key, v)?;
        }
    }
    Ok(cfg)
}

fn apply_key(cfg: &mut FileConfig, section: &str, key: &str, v: &toml::Value) -> CliResult<()> {
    let p = &mut cfg.params;
    let n = &mut cfg.numerics;
    match (section, key) {
        ("params", "rho_z") => p.rho_z = as_f64(section, key, v)?,
        ("params", "rho_u") => p.rho_u = as_f64(section, key, v)?,
        ("params", "a1") => p.a1 = as_f64(section, key, v)?,
        ("params", "a2") => p.a2 = as_f64(section, key, v)?,
        ("params", "a3") => p.a3 = as_f64(section, key, v)?,
        ("params", "gamma") => p.gamma = as_f64(section, key, v)?,
        ("params", "alpha") => p.alpha = as_f64(section, key, v)?,
        ("params", "kappa") => p.kappa = as_f64(section, key, v)?,
        ("params", "length") => p.length = as_f64(section, key, v)?,
        ("numerics", "modes") => n.modes = Some(as_usize(section, key, v)?),
        ("numerics", "dt") => n.dt = Some(as_f64(section, key, v)?),
        ("numerics", "t_end") => n.t_end = Some(as_f64(section, key, v)?),
        ("numerics", "n_min") => n.n_min = Some(as_usize(section, key, v)?),
        ("numerics", "n_max") => n.n_max = Some(as_usize(section, key, v)?),
        ("numerics", "root_tol") => n.root_tol = Some(as_f64(section, key, v)?),
        ("numerics", "kernel_tol") => n.kernel_tol = Some(as_f64(section, key, v)?),
        ("numerics", "snapshot_every") => n.snapshot_every = Some(as_usize(section, key, v)?),
        ("numerics", "snapshot_points") => n.snapshot_points = Some(as_usize(section, key, v)?),
        ("numerics", "window_variation") => n.window_variation = Some(as_f64(section, key, v)?),
        ("numerics", "trials") => n.trials = Some(as_usize(section, key, v)?),
        ("numerics", "probe") => {
            n.probe = Some(match as_str(section, key, v)? {
                "limit" => Probe::Limit,
                "root" => Probe::Root,
                other => return Err(CliError::Config(format!("probe must be limit or root, got '{other}'"))),
            })
        }
        ("numerics", "forcing") => {
            n.forcing = Some(match as_str(section, key, v)? {
                "f2" => Forcing::F2,
                "f4" => Forcing::F4,
                other => return Err(CliError::Config(format!("forcing must be f2 or f4, got '{other}'"))),
            })
        }
        ("initial", k) => {
            let s = as_str(section, k, v)?.to_string();
            parse_profile(&s)?;
            match k {
                "z0" => cfg.initial.z0 = s,
                "z1" => cfg.initial.z1 = s,
                "u0" => cfg.initial.u0 = s,
                _ => cfg.initial.u1 = s,
            }
        }
        ("output", "dir") => cfg.out_dir = Some(PathBuf::from(as_str(section, key, v)?)),
        ("output", "plots") => {
            cfg.plots = Some(match v {
                toml::Value::Boolean(b) => *b,
                other => parse_on_off(as_str(section, key, other)?)?,
            })
        }
        ("run", "seed") => {
            cfg.seed = Some(match v {
                toml::Value::Integer(i) if *i >= 0 => *i as u64,
                _ => return Err(CliError::Config("[run] seed must be a nonnegative integer".into())),
            })
        }
        _ => unreachable!("key list and match arms agree"),
    }
    Ok(())
}

pub fn read_config_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_text(&text)
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub modes: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub plots: Option<bool>,
}

/// Merges file values, the output-dir environment override and flags, fills
/// per-command defaults and validates.
pub fn resolve(
    command: Command,
    file: FileConfig,
    source: Option<PathBuf>,
    env_out: Option<PathBuf>,
    flags: &Overrides,
) -> CliResult<RunConfig> {
    let mut params = file.params;
    if let Some(a) = flags.alpha {
        params.alpha = a;
    }
    if let Some(k) = flags.kappa {
        params.kappa = k;
    }
    if let Some(g) = flags.gamma {
        params.gamma = g;
    }
    let params = params.validated()?;

    let n = file.numerics;
    let decay = command == Command::DecayFit;
    let (default_nmin, default_nmax) = match command {
        Command::Resolvent => (20, 500),
        _ => (1, 500),
    };
    let numerics = ResolvedNumerics {
        modes: flags.modes.or(n.modes).unwrap_or(if decay { 200 } else { 16 }),
        dt: flags.dt.or(n.dt).unwrap_or(if decay { 4e-3 } else { 1e-2 }),
        t_end: flags.t_end.or(n.t_end).or(if decay { None } else { Some(20.0) }),
        n_min: n.n_min.unwrap_or(default_nmin),
        n_max: n.n_max.unwrap_or(default_nmax),
        root_tol: n.root_tol.unwrap_or(porous_frac::spectrum::DEFAULT_ROOT_TOL),
        kernel_tol: n.kernel_tol.unwrap_or(1e-6),
        snapshot_every: n.snapshot_every.unwrap_or(0),
        snapshot_points: n.snapshot_points.unwrap_or(101),
        window_variation: n.window_variation.unwrap_or(0.15),
        probe: n.probe.unwrap_or(Probe::Limit),
        forcing: n.forcing.unwrap_or(Forcing::F2),
        trials: n.trials.unwrap_or(20),
    };
    check_numerics(&numerics)?;
    file_initial_check(&file.initial)?;
    let initial = if decay && file.initial == InitialSpec::default() {
        InitialSpec::decay_default()
    } else {
        file.initial
    };

    let out_dir = flags
        .out
        .clone()
        .or(env_out)
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(RunConfig {
        command,
        params,
        numerics,
        initial,
        out_dir,
        plots: flags.plots.or(file.plots).unwrap_or(false),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        source,
    })
}

fn file_initial_check(spec: &InitialSpec) -> CliResult<()> {
    spec.to_initial().map(|_| ())
}

fn check_numerics(n: &ResolvedNumerics) -> CliResult<()> {
    let mut bad = Vec::new();
    if n.modes == 0 {
        bad.push("modes must be at least 1".to_string());
    }
    if !(n.dt > 0.0 && n.dt.is_finite()) {
        bad.push(format!("dt = {} must be positive", n.dt));
    }
    if let Some(t) = n.t_end {
        if !(t > 0.0 && t.is_finite()) {
            bad.push(format!("t_end = {t} must be positive"));
        }
    }
    if n.n_min == 0 || n.n_min > n.n_max {
        bad.push(format!("mode range [{}, {}] must satisfy 1 ≤ n_min ≤ n_max", n.n_min, n.n_max));
    }
    if !(n.root_tol > 0.0 && n.kernel_tol > 0.0) {
        bad.push("tolerances must be positive".to_string());
    }
    if !(n.window_variation > 0.0) {
        bad.push("window_variation must be positive".to_string());
    }
    if n.snapshot_points < 2 {
        bad.push("snapshot_points must be at least 2".to_string());
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(bad.join("; ")))
    }
}
