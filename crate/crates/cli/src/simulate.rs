use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use photonbench::calibrate::SpadGate;
use photonbench::detectors::{detect_spad, hbt_split, read_analog};
use photonbench::fit::SaturationPoint;
use photonbench::io::write_stream_file;
use photonbench::photophysics::{flux_to_power, photon_energy, PumpMode};
use photonbench::presets::PRESETS;
use photonbench::stream::{simulate_emission, PhotonStream};

use crate::config::WorkbenchConfig;
use crate::error::{CliError, CliResult};
use crate::tables::{write_rows, write_saturation, write_voltages};
use crate::ConfigArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Collected photons, before any detector.
    Emission,
    /// Clicks of the first SPAD.
    Detected,
    /// Start and stop clicks of a 50:50 HBT setup; `--out` is a directory.
    Hbt,
    /// SPAD gate counts and reference voltages at `--power-fw`; `--out` is a directory.
    Calibration,
    /// Detected rate against pump power; `--out` is a CSV file.
    Saturation,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Acquisition time per run, s.
    #[arg(long)]
    duration: f64,
    #[arg(long, value_enum, default_value_t = Stage::Emission)]
    stage: Stage,
    /// Output file (`.csv` for text, otherwise PTMS) or directory.
    #[arg(long)]
    out: PathBuf,
    /// Optical power on the detectors for the calibration stage, fW.
    #[arg(long)]
    power_fw: Option<f64>,
    /// Pump powers for the saturation stage, µW.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 5.0, 10.0, 20.0, 30.0, 50.0, 80.0, 120.0])]
    powers_uw: Vec<f64>,
}

const SPLIT_SEED: u64 = 1;
const START_SEED: u64 = 2;
const STOP_SEED: u64 = 3;
const ANALOG_SEED: u64 = 4;

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(CliError::Usage(format!("--duration must be > 0 s, got {}", args.duration)));
    }
    let cfg = args.config.resolve()?;
    let seed = cfg.seed()?;
    let wavelength = cfg.calibration.wavelength_nm;
    match args.stage {
        Stage::Emission => {
            let s = simulate_emission(&cfg.emitter()?, args.duration, seed)?;
            write_stream(&args.out, &s)?;
            summarize("emission", &s, wavelength)
        }
        Stage::Detected => {
            let photons = simulate_emission(&cfg.emitter()?, args.duration, seed)?;
            let s = detect_spad(&photons, &cfg.spads[0], seed.wrapping_add(START_SEED))?;
            write_stream(&args.out, &s)?;
            summarize("detected", &s, wavelength)
        }
        Stage::Hbt => {
            let photons = simulate_emission(&cfg.emitter()?, args.duration, seed)?;
            let (a, b) = hbt_split(&photons, seed.wrapping_add(SPLIT_SEED));
            let start = detect_spad(&a, &cfg.spads[0], seed.wrapping_add(START_SEED))?;
            let stop = detect_spad(&b, &cfg.spads[1], seed.wrapping_add(STOP_SEED))?;
            create_dir(&args.out)?;
            write_stream(&args.out.join("start.ptms"), &start)?;
            write_stream(&args.out.join("stop.ptms"), &stop)?;
            summarize("start", &start, wavelength)?;
            summarize("stop", &stop, wavelength)
        }
        Stage::Calibration => calibration_point(args, &cfg, seed),
        Stage::Saturation => saturation_sweep(args, &cfg, seed),
    }
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_stream(path: &Path, s: &PhotonStream) -> CliResult<()> {
    write_stream_file(path, s).map_err(|e| CliError::from(e).in_file(path))
}

fn summarize(label: &str, s: &PhotonStream, wavelength_nm: f64) -> CliResult<()> {
    let rate = s.rate();
    let power = flux_to_power(rate, wavelength_nm)?;
    println!(
        "{label}: {} events in {:.3} s, mean rate {:.6e} /s, {:.3} fW at {wavelength_nm} nm",
        s.len(),
        s.duration_s(),
        rate,
        power * 1e15
    );
    Ok(())
}

fn calibration_point(args: &SimulateArgs, cfg: &WorkbenchConfig, seed: u64) -> CliResult<()> {
    let power_fw = args
        .power_fw
        .ok_or_else(|| CliError::Usage("the calibration stage needs --power-fw".into()))?;
    if !(power_fw > 0.0 && power_fw.is_finite()) {
        return Err(CliError::Usage(format!("--power-fw must be > 0, got {power_fw}")));
    }
    let cal = &cfg.calibration;
    let power_w = power_fw * 1e-15;
    let flux = power_w / photon_energy(cal.wavelength_nm);

    let mut emitter = cfg.emitter()?;
    emitter.collection_efficiency = 1.0;
    let unit = emitter.steady_state_rate();
    if !(flux <= unit) {
        return Err(CliError::Usage(format!(
            "{power_fw} fW needs {flux:.4e} photons/s but the emitter delivers at most {unit:.4e}"
        )));
    }
    emitter.collection_efficiency = flux / unit;
    let photons = simulate_emission(&emitter, args.duration, seed)?;
    let clicks = detect_spad(&photons, &cfg.spads[0], seed.wrapping_add(START_SEED))?;

    let n_gates = cal.spad_gates as u64;
    let gate_ticks = clicks.duration_ticks() / n_gates;
    let gate_s = gate_ticks as f64 * clicks.resolution_ps() as f64 * 1e-12;
    let ts = clicks.timestamps();
    let gates: Vec<SpadGate> = (0..n_gates)
        .map(|g| {
            let lo = ts.partition_point(|&t| t < g * gate_ticks);
            let hi = ts.partition_point(|&t| t < (g + 1) * gate_ticks);
            SpadGate {
                gate_s,
                counts: (hi - lo) as u64,
            }
        })
        .collect();
    let volts = read_analog(power_w, &cfg.analog, cal.analog_samples, seed.wrapping_add(ANALOG_SEED))?;

    create_dir(&args.out)?;
    write_rows(&args.out.join("spad_counts.csv"), &gates)?;
    write_voltages(&args.out.join("voltages.csv"), &volts)?;
    let total: u64 = gates.iter().map(|g| g.counts).sum();
    println!(
        "calibration point: {power_fw} fW ({flux:.6e} photons/s), {total} SPAD counts in {} gates, {} voltage samples",
        gates.len(),
        volts.len()
    );
    Ok(())
}

fn saturation_sweep(args: &SimulateArgs, cfg: &WorkbenchConfig, seed: u64) -> CliResult<()> {
    let emitter = cfg.emitter()?;
    let PumpMode::Cw { pump_rate_per_ns } = emitter.pump else {
        return Err(CliError::Usage("saturation sweeps need a CW pump".into()));
    };
    let per_uw = pump_rate_per_ns / cfg.pump_power_uw()?;
    let mut points = Vec::with_capacity(args.powers_uw.len());
    for (k, &p) in args.powers_uw.iter().enumerate() {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(CliError::Usage(format!("pump powers must be >= 0 µW, got {p}")));
        }
        let mut e = emitter.clone();
        e.pump = PumpMode::Cw {
            pump_rate_per_ns: per_uw * p,
        };
        let run_seed = seed.wrapping_add(1000 * k as u64);
        let photons = simulate_emission(&e, args.duration, run_seed)?;
        let clicks = detect_spad(&photons, &cfg.spads[0], run_seed.wrapping_add(START_SEED))?;
        let t = clicks.duration_s();
        points.push(SaturationPoint {
            power_uw: p,
            rate: clicks.rate(),
            stderr: (clicks.len().max(1) as f64).sqrt() / t,
        });
    }
    write_saturation(&args.out, &points)?;
    for p in &points {
        println!("{:>8.2} µW  {:.6e} /s", p.power_uw, p.rate);
    }
    Ok(())
}

pub fn preset_table() -> String {
    let mut out = String::from("name        T (K)  pump (µW)  max rate (/s)  g2(0)\n");
    for p in &PRESETS {
        let g2 = match p.g2_zero {
            Some((v, u)) => format!("{v:.2} ± {u:.2}"),
            None => "-".into(),
        };
        let _ = writeln!(
            out,
            "{:<10}  {:>5.0}  {:>9.0}  {:>13.3e}  {g2}",
            p.name, p.temperature_k, p.pump_power_uw, p.max_rate
        );
    }
    out
}
