//! The `lenspol` command line: config loading, commands and run manifests.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "lenspol", version, about = "Lensless polarization imaging pipelines")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key, e.g. `--set solver.rho=10`. Repeatable;
    /// applied after the file, in order.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Global seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Affects wall time only.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Generate a stripe mask (ideal or measured model, optionally perturbed).
    MakeMask,
    /// Simulate a sensor measurement from scene, PSF and mask.
    Simulate,
    /// ADMM reconstruction of a measurement.
    Reconstruct,
    /// Matched vs mismatched mask sweep over blur, noise and interpolation.
    MismatchSweep,
    /// Stokes, DoLP and AoLP maps from four polarization sub-images.
    Stokes,
    /// PSNR and SSIM of a reconstruction against a reference.
    Metrics,
    /// Angular-spectrum mask gap experiment.
    Diffract,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::MakeMask => "make-mask",
            Command::Simulate => "simulate",
            Command::Reconstruct => "reconstruct",
            Command::MismatchSweep => "mismatch-sweep",
            Command::Stokes => "stokes",
            Command::Metrics => "metrics",
            Command::Diffract => "diffract",
        }
    }
}

/// A failure reported as one `error kind=<kind>: <message>` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            "config" => 2,
            _ => 1,
        }
    }
}

impl From<lenspol_core::Error> for CliError {
    fn from(e: lenspol_core::Error) -> Self {
        use lenspol_core::Error as E;
        let kind = match &e {
            E::Io { .. } => "io",
            E::Format(_) => "format",
            E::NonFinite(_) => "non-finite",
            E::Dimension { .. } => "dimension",
            E::InvalidArgument(_) => "invalid-argument",
            E::CgBreakdown { .. } => "cg-breakdown",
            E::Diverged { .. } => "diverged",
            E::Image(_) => "image",
        };
        CliError::new(kind, e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out_dir={}", toml::Value::String(out.display().to_string())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cli.threads {
        rayon_threads(n)?;
    }
    commands::execute(cli.command, cfg)
}

fn rayon_threads(n: usize) -> Result<(), CliError> {
    // core parallelism goes through rayon's global pool; RAYON_NUM_THREADS
    // is read once at pool start-up
    if n == 0 {
        return Err(CliError::new("config", "--threads must be at least 1"));
    }
    std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    Ok(())
}

/// Parses `args` (program name first) and runs one command. Errors are
/// printed as a single `error kind=<kind>: <message>` line on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.message.replace('\n', " ");
            eprintln!("error kind={}: {line}", e.kind);
            ExitCode::from(e.exit_code())
        }
    }
}
