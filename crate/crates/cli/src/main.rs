//! Command-line front end: `thermofsi <solve|audit|sweep|c2|selftest|run> --config FILE`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 a checked bound was violated (audit and selftest).

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thermofsi_core::diagnostics::DiagnosticsError;
use thermofsi_core::integrator::IntegratorError;
use thermofsi_core::limits::LimitError;
use thermofsi_core::Error;

use crate::config::Mode;
use crate::run::RunError;

const THREADS_ENV: &str = "THERMOFSI_THREADS";

#[derive(Parser)]
#[command(name = "thermofsi", version, about = "Coupled thermoelastic solid / viscous thermofluid solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config; built-in defaults fill anything it leaves out
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// override one key, e.g. --set params.alpha_p=100 (repeatable)
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// overrides run.output_dir
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// run whatever run.mode names
    Run(Common),
    /// integrate and write norm and pressure series
    Solve(Common),
    /// solve, then check the energy identity and a-priori bounds
    Audit(Common),
    /// α ladder toward a limit model (sweep.mode)
    Sweep(Common),
    /// solve the quasi-static limit model directly
    C2(Common),
    /// randomized invariant battery
    Selftest(Common),
}

fn exit_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(_) => 2,
        RunError::Core(e) => match e {
            Error::Params(_) | Error::Geometry(_) => 2,
            Error::Integrator(IntegratorError::StepCount { .. } | IntegratorError::TimeStep(_)) => 2,
            Error::Diagnostics(DiagnosticsError::NotHomogeneous | DiagnosticsError::NotPotential | DiagnosticsError::UnknownNorm(_)) => 2,
            Error::Limits(
                LimitError::Plan(_)
                | LimitError::WrongMode(_)
                | LimitError::UnknownMode(_)
                | LimitError::Params(_)
                | LimitError::Geometry(_)
                | LimitError::Integrator(IntegratorError::StepCount { .. } | IntegratorError::TimeStep(_))
                | LimitError::Diagnostics(DiagnosticsError::NotPotential | DiagnosticsError::NotHomogeneous),
            ) => 2,
            _ => 3,
        },
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV}={v} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (common, forced) = match cli.command {
        Command::Run(c) => (c, None),
        Command::Solve(c) => (c, Some(Mode::Solve)),
        Command::Audit(c) => (c, Some(Mode::Audit)),
        Command::Sweep(c) => (c, Some(Mode::Sweep)),
        Command::C2(c) => (c, Some(Mode::C2)),
        Command::Selftest(c) => (c, Some(Mode::Selftest)),
    };
    let mut overrides = common.overrides;
    if let Some(dir) = &common.output_dir {
        overrides.push(format!("run.output_dir=\"{}\"", dir.display().to_string().replace('\\', "\\\\").replace('"', "\\\"")));
    }
    let cfg = match config::load(common.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let mode = match forced.map_or_else(|| cfg.mode(), Ok) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let hash = cfg.hash();
    let header = output::header(&hash);
    println!("{}", header.trim_end_matches('\n').trim_start_matches("# "));
    println!("--- effective config ---\n{}------------------------", cfg.to_toml());

    let outcome = match run::execute(&cfg, mode) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let dir = PathBuf::from(&cfg.run.output_dir);
    let mut artifacts = outcome.artifacts;
    artifacts.push(output::Artifact::text("config.toml", cfg.to_toml()));
    if let Err(e) = output::write_all(&dir, &header, &artifacts) {
        eprintln!("error: cannot write to {}: {e}", dir.display());
        return ExitCode::from(3);
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", artifacts.len(), dir.display());
    if outcome.violated {
        eprintln!("a checked bound was violated");
        return ExitCode::from(4);
    }
    ExitCode::SUCCESS
}
