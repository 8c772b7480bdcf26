use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use photonbench::calibrate::{combine_budget, efficiency_vs_flux, spad_efficiency, CalibrationInput, FluxPoint};

use crate::analyze::write_json;
use crate::config::WorkbenchConfig;
use crate::error::{CliError, CliResult};
use crate::tables::{read_components, read_spad_counts, read_voltages};

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Workbench configuration (JSON); supplies the analog readout and
    /// calibration settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `gate_s,counts` table; repeat together with --voltages for a flux sweep.
    #[arg(long = "spad-counts", required = true)]
    spad_counts: Vec<PathBuf>,
    /// `voltage_v` table, one per --spad-counts.
    #[arg(long, required = true)]
    voltages: Vec<PathBuf>,
    /// JSON result to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn calibration_input(cfg: &WorkbenchConfig, spad_counts: &Path, voltages: &Path) -> CliResult<CalibrationInput> {
    let cal = &cfg.calibration;
    Ok(CalibrationInput {
        spad_counts: read_spad_counts(spad_counts)?,
        spad_dark_cps: cal.spad_dark_cps,
        voltages: read_voltages(voltages)?,
        analog: cfg.analog,
        wavelength_nm: cal.wavelength_nm,
        dead_time_ns: cal.dead_time_ns,
        dead_time_model: cal.dead_time_model,
        type_b: cal.type_b,
    })
}

pub fn sweep_table(points: &[FluxPoint]) -> String {
    let mut out = String::from("| photon flux (/s) | power (fW) | eta_SPAD | u_c (%) | u (abs) |\n");
    out.push_str("|---:|---:|---:|---:|---:|\n");
    for p in points {
        let _ = writeln!(
            out,
            "| {:.4e} | {:.2} | {:.4} | {:.2} | {:.4} |",
            p.n_ref,
            p.phi_s * 1e15,
            p.eta_spad,
            p.u_combined,
            p.u_absolute
        );
    }
    out
}

pub fn run(args: &CalibrateArgs) -> CliResult<()> {
    if args.spad_counts.len() != args.voltages.len() {
        return Err(CliError::Usage(format!(
            "{} --spad-counts files but {} --voltages files; give them in pairs",
            args.spad_counts.len(),
            args.voltages.len()
        )));
    }
    let cfg = match &args.config {
        Some(path) => WorkbenchConfig::load(path)?,
        None => WorkbenchConfig::default(),
    };
    let inputs = args
        .spad_counts
        .iter()
        .zip(&args.voltages)
        .map(|(s, v)| calibration_input(&cfg, s, v))
        .collect::<CliResult<Vec<_>>>()?;

    if let [input] = inputs.as_slice() {
        let r = spad_efficiency(input)?;
        println!(
            "eta_SPAD = {:.4} ± {:.4} (u_c = {:.2} %), reference flux {:.4e} photons/s ({:.2} fW)\n",
            r.eta_spad,
            r.u_absolute,
            r.u_combined,
            r.n_ref,
            r.phi_s * 1e15
        );
        print!("{}", r.budget.render());
        if let Some(out) = &args.out {
            write_json(out, &r)?;
        }
    } else {
        let points = efficiency_vs_flux(&inputs)?;
        print!("{}", sweep_table(&points));
        if let Some(out) = &args.out {
            write_json(out, &points)?;
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// `source,percent,type` table; a percent of `-` marks an exact constant.
    #[arg(long)]
    components: PathBuf,
    /// JSON budget to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn budget(args: &BudgetArgs) -> CliResult<()> {
    let b = combine_budget(read_components(&args.components)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.components.display())))?;
    print!("{}", b.render());
    if let Some(out) = &args.out {
        write_json(out, &b)?;
    }
    Ok(())
}
