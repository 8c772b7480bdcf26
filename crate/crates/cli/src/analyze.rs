use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use photonbench::correlate::{full_correlation, start_stop_histogram, Histogram, HistogramMode};
use photonbench::fit::{fit_g2, fit_saturation, MIN_SATURATION_POINTS_QUENCH};
use photonbench::io::{read_histogram_file, read_stream_file, write_histogram_file};
use photonbench::stream::variance_check as check;

use crate::config::{CorrelatorSettings, WorkbenchConfig};
use crate::error::{CliError, CliResult};
use crate::tables::read_saturation;
use crate::ConfigArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// One stop per start on each side of zero delay (TCSPC).
    StartStop,
    /// Every start–stop pair in the window.
    Full,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Start-channel timestamps (PTMS or CSV).
    #[arg(long)]
    start: PathBuf,
    /// Stop-channel timestamps (PTMS or CSV).
    #[arg(long)]
    stop: PathBuf,
    /// Workbench configuration whose correlator settings fill in unset flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Histogram mode [default: start-stop].
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Bin width, ns [default: 0.25].
    #[arg(long)]
    bin: Option<f64>,
    /// Half-width of the delay window, ns; bins cover `[-range, range)` [default: 5000].
    #[arg(long)]
    range: Option<f64>,
    /// Histogram CSV to write.
    #[arg(long)]
    out: PathBuf,
}

pub fn correlate(args: &CorrelateArgs) -> CliResult<()> {
    let settings = match &args.config {
        Some(path) => WorkbenchConfig::load(path)?.correlator,
        None => CorrelatorSettings::default(),
    };
    let mode = args.mode.unwrap_or(match settings.mode {
        HistogramMode::StartStop => Mode::StartStop,
        HistogramMode::Full => Mode::Full,
    });
    let bin = args.bin.unwrap_or(settings.bin_width_ns);
    let range = args.range.unwrap_or(settings.half_range_ns);
    let start = read_stream_file(&args.start)?;
    let stop = read_stream_file(&args.stop)?;
    let h = match mode {
        Mode::StartStop => start_stop_histogram(&start, &stop, bin, -range, range)?,
        Mode::Full => full_correlation(&start, &stop, bin, -range, range)?,
    };
    write_histogram_file(&args.out, &h).map_err(|e| CliError::from(e).in_file(&args.out))?;
    println!(
        "{} histogram: {} bins of {} ns, {} coincidences, {} starts, {} stops",
        h.mode.as_str(),
        h.n_bins(),
        h.bin_width_ns,
        h.total(),
        h.n_starts,
        h.n_stops
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Antibunching dip with count-rate decay, fitted to a histogram.
    G2,
    /// Detected rate against pump power.
    Saturation,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Histogram CSV (g2) or `power_uw,rate_cps,stderr_cps` table (saturation).
    #[arg(long, alias = "histogram")]
    input: PathBuf,
    /// Include the high-power quench term in a saturation fit.
    #[arg(long)]
    quench: bool,
    /// JSON fit report to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_histogram(path: &Path) -> CliResult<Histogram> {
    read_histogram_file(path).map_err(|e| CliError::from(e).in_file(path))
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let converged = match args.model {
        Model::G2 => {
            let h = load_histogram(&args.input)?;
            let r = fit_g2(&h, None)?;
            println!(
                "g2(0) = {:.4} ± {:.4}  t1 = {:.4} ± {:.4} ns  R = {:.6e} ± {:.2e} /s  reduced chi2 = {:.3}",
                r.g2_zero.value, r.g2_zero.sigma, r.params.t1, r.t1_err, r.params.rate_r, r.rate_r_err, r.reduced_chi2
            );
            if let Some(out) = &args.out {
                write_json(out, &r)?;
            }
            r.converged
        }
        Model::Saturation => {
            let points = read_saturation(&args.input)?;
            if args.quench && points.len() < MIN_SATURATION_POINTS_QUENCH {
                return Err(CliError::Data(format!(
                    "{}: a quench fit needs at least {MIN_SATURATION_POINTS_QUENCH} points",
                    args.input.display()
                )));
            }
            let r = fit_saturation(&points, args.quench)?;
            println!(
                "R_inf = {:.6e} ± {:.2e} /s  P_sat = {:.4} ± {:.4} µW  reduced chi2 = {:.3}",
                r.r_inf.value, r.r_inf.sigma, r.p_sat.value, r.p_sat.sigma, r.reduced_chi2
            );
            if let Some(q) = &r.quench {
                println!(
                    "p_q = {:.4} ± {:.4}  m = {:.4} ± {:.4}",
                    q.p_q.value, q.p_q.sigma, q.exponent.value, q.exponent.sigma
                );
            }
            if let Some(out) = &args.out {
                write_json(out, &r)?;
            }
            r.converged
        }
    };
    if !converged {
        return Err(CliError::Numerical("fit did not converge".into()));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Emitted (pre-detection) timestamps.
    #[arg(long)]
    input: PathBuf,
    /// Detection efficiency applied by thinning.
    #[arg(long)]
    eta: f64,
    /// Counting window, s.
    #[arg(long)]
    window: f64,
    /// JSON report to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `|z|` at or above which the check fails.
pub const Z_LIMIT: f64 = 3.0;

pub fn variance_check(args: &VarianceArgs) -> CliResult<()> {
    let seed = args.config.resolve()?.seed()?;
    let emitted = read_stream_file(&args.input)?;
    let r = check(&emitted, args.eta, args.window, seed)?;
    println!(
        "{} windows of {} s: measured variance {:.6e}, predicted {:.6e} ± {:.2e} (photons/s)^2, z = {:.3}",
        r.n_windows, r.window_s, r.var_measured_flux, r.predicted_var, r.predicted_var_stderr, r.z_score
    );
    if let Some(out) = &args.out {
        write_json(out, &r)?;
    }
    if !(r.z_score.abs() < Z_LIMIT) {
        return Err(CliError::Numerical(format!(
            "measured variance departs from the thinning prediction (|z| = {:.2} >= {Z_LIMIT})",
            r.z_score.abs()
        )));
    }
    Ok(())
}
