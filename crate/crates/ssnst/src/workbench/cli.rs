//! Command-line interface: `simulate`, `fit`, `predict`, `evaluate`,
//! `diagnose`. Every subcommand takes `--config <path>` and an optional
//! `--seed <int>` override. Exit codes: 0 success, 1 validation error,
//! 2 numerical failure.

use std::path::PathBuf;
use std::sync::Once;

use clap::{Parser, Subcommand};

use crate::error::Result;

use super::config::RunConfig;
use super::pipeline;

#[derive(Parser)]
#[command(
    name = "ssnst",
    about = "Bayesian spatio-temporal stream-network models: simulate, fit, predict, evaluate, diagnose",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its input files.
    Simulate(CommonArgs),
    /// Fit the model by MCMC and write draws + diagnostics.
    Fit(CommonArgs),
    /// Krige at the prediction sites from a finished fit.
    Predict(CommonArgs),
    /// Score held-out truth and write metrics.json.
    Evaluate(CommonArgs),
    /// Print the R-hat / ESS / MCSE table of a finished fit.
    Diagnose(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the run-configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the stage's seed (simulation or MCMC).
    #[arg(long)]
    seed: Option<u64>,
}

static POOL: Once = Once::new();

/// Cap worker threads at SSNST_THREADS (default: available parallelism).
fn init_threads() {
    POOL.call_once(|| {
        let n = std::env::var("SSNST_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            });
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    });
}

fn dispatch(cmd: &Command) -> Result<()> {
    let (args, run): (&CommonArgs, fn(&RunConfig, &str, Option<u64>) -> Result<()>) = match cmd {
        Command::Simulate(a) => (a, |cfg, _, seed| pipeline::cmd_simulate(cfg, seed)),
        Command::Fit(a) => (a, pipeline::cmd_fit),
        Command::Predict(a) => (a, |cfg, _, _| pipeline::cmd_predict(cfg)),
        Command::Evaluate(a) => (a, |cfg, _, _| pipeline::cmd_evaluate(cfg).map(|_| ())),
        Command::Diagnose(a) => (a, |cfg, _, _| pipeline::cmd_diagnose(cfg)),
    };
    let (config, hash) = RunConfig::load(&args.config)?;
    run(&config, &hash, args.seed)
}

/// Entry point used by `main`; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Usage/help output; unknown subcommands and bad flags exit 1,
            // explicit --help/--version exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
