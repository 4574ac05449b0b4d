//! Configuration-driven experiment runner behind the `fapc` binary.
//!
//! Exit codes: 0 success, 1 hard failure, 2 partial success (some
//! semilinear instance did not converge).

pub mod config;
pub mod report;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, ConfigError, RunConfig};
pub use report::{ReportRow, HEADER};
pub use run::{
    run_semilinear, run_steer, run_sweep, run_verify, CliError, Outcome, RunOptions, EXIT_FAILURE, EXIT_OK,
    EXIT_PARTIAL,
};

#[derive(Debug, Parser)]
#[command(name = "fapc", version, about = "Finite-approximate steering of the controlled heat equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the operator identities on the configured Gramian.
    Verify(CommonArgs),
    /// Linear steering over the ε list.
    Steer(CommonArgs),
    /// Semilinear steering by damped Picard iteration.
    Semilinear(CommonArgs),
    /// Linear (configured and quadrature Gramian) and semilinear scenarios.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// CSV output; falls back to `output.csv_path` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record wall times in the CSV (makes it run-dependent).
    #[arg(long)]
    pub timing: bool,
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    }
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
        }
    };
    if let Some(threads) = std::env::var("FAPC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    match execute(&cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("fapc: {msg}");
            EXIT_FAILURE
        }
    }
}

fn execute(command: &Command) -> Result<i32, String> {
    let (args, runner, needs_out): (&CommonArgs, fn(&RunConfig, RunOptions) -> Result<Outcome, CliError>, bool) =
        match command {
            Command::Verify(a) => (a, run_verify, false),
            Command::Steer(a) => (a, run_steer, true),
            Command::Semilinear(a) => (a, run_semilinear, true),
            Command::Sweep(a) => (a, run_sweep, true),
        };
    let mut cfg = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let csv_path = args
        .out
        .clone()
        .or_else(|| cfg.output.csv_path.as_ref().map(|p| cfg.resolve(p)));
    if needs_out && csv_path.is_none() {
        return Err("no CSV destination: pass --out or set output.csv_path".into());
    }
    let outcome = runner(&cfg, RunOptions { timing: args.timing }).map_err(|e| e.to_string())?;
    if let Some(path) = csv_path {
        write_file(&path, &outcome.csv)?;
    }
    if let Some(path) = cfg.output.report_path.as_ref().map(|p| cfg.resolve(p)) {
        write_file(&path, &outcome.report)?;
    }
    print!("{}", outcome.report);
    if let Some(check) = &outcome.failure {
        eprintln!("fapc: check `{check}` failed");
    }
    if outcome.exit_code == EXIT_PARTIAL {
        eprintln!("fapc: some instances did not converge");
    }
    Ok(outcome.exit_code)
}
