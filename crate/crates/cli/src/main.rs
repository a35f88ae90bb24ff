mod analyze;
mod setup;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specgconv::nn::gradcheck::{flip_depthwise_sign, run_suite};
use specgconv::Error;

/// Spectral design and frequency analysis of graph convolutions.
#[derive(Parser, Debug)]
#[command(name = "specgconv", version)]
struct Cli {
    /// Serial, bitwise reproducible execution. Every run already is, so this
    /// is accepted for compatibility and has no effect.
    #[arg(long, global = true)]
    strict_repro: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frequency profiles of the supports of one graph.
    Analyze(analyze::AnalyzeArgs),
    /// Train a model from a JSON experiment config.
    Train(train::TrainArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-case report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Flip the sign of depthwise gradients to show the check catches it.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(Error),
    Acceptance(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Acceptance(_) => 4,
            CliError::Core(e) => match e {
                Error::Diverged { .. }
                | Error::NoConvergence
                | Error::InvalidBasis(_)
                | Error::NonFinite(_)
                | Error::NotSymmetric(_)
                | Error::ZeroLambdaMax => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Acceptance(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let tamper: Option<&dyn Fn(&mut specgconv::nn::Parameters)> =
        if args.inject_fault { Some(&flip_depthwise_sign) } else { None };
    let reports = run_suite(args.seed, tamper)?;
    for r in &reports {
        println!(
            "{} {:<40} params={:<4} max_rel_error={:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.params,
            r.max_rel_error
        );
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Acceptance(format!("{failed} of {} gradient checks failed", reports.len())));
    }
    println!("all {} gradient checks passed", reports.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Train(a) => train::run(a, cli.strict_repro),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
