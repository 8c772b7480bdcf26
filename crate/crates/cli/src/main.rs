//! `photonbench` command-line workbench.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 numerical failure (non-convergence, unphysical result).

mod analyze;
mod calibrate;
mod config;
mod error;
mod report;
mod simulate;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::WorkbenchConfig;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "photonbench", version, about = "Single-photon source and SPAD calibration workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate emission, detection, HBT arms, a calibration point or a saturation sweep.
    Simulate(simulate::SimulateArgs),
    /// Histogram delays between two timestamp files.
    Correlate(analyze::CorrelateArgs),
    /// Fit the antibunching model to a histogram, or a saturation curve.
    Fit(analyze::FitArgs),
    /// SPAD detection efficiency from counts and reference voltages.
    Calibrate(calibrate::CalibrateArgs),
    /// Markdown report and plot tables for a run directory.
    Report(report::ReportArgs),
    /// Compare measured photon-number variance with binomial thinning.
    VarianceCheck(analyze::VarianceArgs),
    /// Combine an uncertainty budget table.
    Budget(calibrate::BudgetArgs),
    /// List the named emitter presets.
    Presets,
}

/// Configuration shared by the stochastic commands.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Workbench configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Emitter preset; replaces any emitter in the config.
    #[arg(long)]
    preset: Option<String>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<WorkbenchConfig> {
        let mut cfg = match &self.config {
            Some(path) => WorkbenchConfig::load(path)?,
            None => WorkbenchConfig::default(),
        };
        if let Some(name) = &self.preset {
            cfg.emitter = None;
            cfg.scenario_preset = Some(name.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("PHOTONBENCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PHOTONBENCH_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Correlate(a) => analyze::correlate(&a),
        Command::Fit(a) => analyze::fit(&a),
        Command::Calibrate(a) => calibrate::run(&a),
        Command::Report(a) => report::run(&a),
        Command::VarianceCheck(a) => analyze::variance_check(&a),
        Command::Budget(a) => calibrate::budget(&a),
        Command::Presets => {
            print!("{}", simulate::preset_table());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
