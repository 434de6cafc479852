use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use porous_frac_cli::config::{self, parse_on_off, FileConfig, OUT_DIR_ENV};
use porous_frac_cli::{CliResult, Command, Overrides};

#[derive(Parser)]
#[command(name = "porous-frac", version, about = "Modal solver and spectral probes for a damped two-field string model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Config file (`[params]`, `[numerics]`, `[initial]`, `[output]`, `[run]`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file and $POROUS_FRAC_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    kappa: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    modes: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write SVG plots next to the tables.
    #[arg(long, global = true, value_parser = ["on", "off"])]
    plots: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Quadrature of the diffusive kernel against its closed form.
    KernelCheck,
    /// Time-stepped modal simulation with the energy balance.
    Simulate,
    /// Refined eigenvalues of both branches over a mode range.
    Spectrum,
    /// Resolvent growth along the imaginary axis and the static problem.
    Resolvent,
    /// Power-law fit of the long-time energy decay.
    DecayFit,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::KernelCheck => Command::KernelCheck,
            Cmd::Simulate => Command::Simulate,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Resolvent => Command::Resolvent,
            Cmd::DecayFit => Command::DecayFit,
        }
    }
}

fn execute(cli: Cli) -> CliResult<porous_frac_cli::Report> {
    let file = match &cli.config {
        Some(path) => config::read_config_file(path)?,
        None => FileConfig::default(),
    };
    let flags = Overrides {
        out: cli.out,
        alpha: cli.alpha,
        kappa: cli.kappa,
        gamma: cli.gamma,
        modes: cli.modes,
        dt: cli.dt,
        t_end: cli.t_end,
        seed: cli.seed,
        plots: cli.plots.as_deref().map(parse_on_off).transpose()?,
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = config::resolve(cli.command.into(), file, cli.config, env_out, &flags)?;
    porous_frac_cli::run(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are configuration errors; help and version are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(report) => {
            println!("wrote {} files to {}", report.files.len(), report.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
