//! Markdown report plus plot-ready CSV tables for a run directory.
//!
//! Recognised artifacts, all optional but at least one required:
//! `config.json`, `histogram.csv`, `saturation.csv`, `stream.ptms` or
//! `stream.csv`, and `calibration/<point>/{spad_counts,voltages}.csv`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use photonbench::calibrate::{efficiency_vs_flux, spad_efficiency, FluxPoint};
use photonbench::fit::{fit_g2, fit_saturation, SaturationFitResult, MIN_SATURATION_POINTS_QUENCH};
use photonbench::io::{read_histogram_file, read_stream_file};
use photonbench::photophysics::{g2_model, saturation_rate, G2Params};
use photonbench::stream::window_counts;

use crate::calibrate::{calibration_input, sweep_table};
use crate::config::WorkbenchConfig;
use crate::error::{CliError, CliResult};
use crate::tables::read_saturation;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding the run artifacts.
    #[arg(long)]
    run_dir: PathBuf,
    /// Output directory; defaults to `<run-dir>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Windows in the count-rate trace.
const TRACE_WINDOWS: u64 = 50;

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let dir = &args.run_dir;
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{}: not a directory", dir.display())));
    }
    let out_dir = args.out.clone().unwrap_or_else(|| dir.join("report"));
    let config_path = dir.join("config.json");
    let cfg = if config_path.is_file() {
        WorkbenchConfig::load(&config_path)?
    } else {
        WorkbenchConfig::default()
    };

    let mut sections = Vec::new();
    let mut tables: Vec<(&str, Table)> = Vec::new();

    let hist = dir.join("histogram.csv");
    if hist.is_file() {
        let (text, table) = g2_section(&hist)?;
        sections.push(text);
        tables.push(("g2_curve.csv", table));
    }
    let sat = dir.join("saturation.csv");
    if sat.is_file() {
        let (text, table) = saturation_section(&sat)?;
        sections.push(text);
        tables.push(("saturation_curve.csv", table));
    }
    if let Some(stream) = ["stream.ptms", "stream.csv"].iter().map(|n| dir.join(n)).find(|p| p.is_file()) {
        let (text, table) = stability_section(&stream)?;
        sections.push(text);
        tables.push(("rate_trace.csv", table));
    }
    let cal_dir = dir.join("calibration");
    if cal_dir.is_dir() {
        let (text, points) = calibration_section(&cfg, &cal_dir)?;
        sections.push(text);
        tables.push(("efficiency_vs_flux.csv", points));
    }
    if sections.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no run artifacts (histogram.csv, saturation.csv, stream.ptms, calibration/)",
            dir.display()
        )));
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let mut md = String::from("# photonbench run report\n");
    for s in &sections {
        md.push('\n');
        md.push_str(s);
    }
    let report = out_dir.join("report.md");
    std::fs::write(&report, md).map_err(|e| CliError::io(&report, e))?;
    for (name, table) in &tables {
        table.write(&out_dir.join(name))?;
    }
    println!("wrote {} and {} tables", report.display(), tables.len());
    Ok(())
}

/// Header plus pre-formatted rows.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::csv(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::csv(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

fn g2_section(path: &Path) -> CliResult<(String, Table)> {
    let h = read_histogram_file(path).map_err(|e| CliError::from(e).in_file(path))?;
    let fit = fit_g2(&h, None).map_err(|e| CliError::from(e).in_file(path))?;
    let p = fit.params;
    let a = fit.amplitude.value;
    let mut text = String::from("## Antibunching\n\n");
    let _ = writeln!(
        text,
        "{} histogram, {} bins of {} ns over [{}, {}) ns, {} coincidences.\n",
        h.mode.as_str(),
        h.n_bins(),
        h.bin_width_ns,
        h.t_min_ns,
        h.t_max_ns,
        h.total()
    );
    text.push_str("| parameter | value | std. error |\n|---|---:|---:|\n");
    let _ = writeln!(text, "| g2(0) | {:.4} | {:.4} |", fit.g2_zero.value, fit.g2_zero.sigma);
    let _ = writeln!(text, "| b | {:.4} | {:.4} |", p.b, fit.b_err);
    let _ = writeln!(text, "| t1 (ns) | {:.4} | {:.4} |", p.t1, fit.t1_err);
    let _ = writeln!(text, "| R (1/s) | {:.5e} | {:.2e} |", p.rate_r, fit.rate_r_err);
    let _ = writeln!(text, "| amplitude (counts) | {:.3} | {:.3} |", a, fit.amplitude.sigma);
    let _ = writeln!(
        text,
        "\nReduced chi-square {:.3}, {} iterations, converged: {}.",
        fit.reduced_chi2,
        fit.n_iterations,
        if fit.converged { "yes" } else { "no" }
    );
    if h.n_stops > 0 && h.acquisition_duration_s > 0.0 {
        let stop_rate = h.n_stops as f64 / h.acquisition_duration_s;
        let _ = writeln!(
            text,
            "Stop-channel count rate {:.5e} /s; fitted R differs by {:+.2} %.",
            stop_rate,
            100.0 * (p.rate_r / stop_rate - 1.0)
        );
    }

    let dip = G2Params { rate_r: 0.0, ..p };
    let rows = h
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let t = h.bin_center(k);
            let envelope = a * (-p.rate_r * t.abs() * 1e-9).exp();
            vec![
                format!("{t:.4}"),
                c.to_string(),
                format!("{:.4}", a * g2_model(t, &p)),
                format!("{:.5}", c as f64 / envelope),
                format!("{:.5}", g2_model(t, &dip)),
            ]
        })
        .collect();
    Ok((
        text,
        Table {
            header: vec!["t_ns", "counts", "model_counts", "g2_measured", "g2_model"],
            rows,
        },
    ))
}

fn saturation_line(label: &str, r: &SaturationFitResult) -> String {
    let mut s = format!(
        "| {label} | {:.5e} ± {:.2e} | {:.3} ± {:.3} |",
        r.r_inf.value, r.r_inf.sigma, r.p_sat.value, r.p_sat.sigma
    );
    match &r.quench {
        Some(q) => {
            let _ = write!(
                s,
                " {:.3} ± {:.3} | {:.3} ± {:.3} |",
                q.p_q.value, q.p_q.sigma, q.exponent.value, q.exponent.sigma
            );
        }
        None => s.push_str(" - | - |"),
    }
    let _ = write!(s, " {:.3} |", r.reduced_chi2);
    s
}

fn saturation_section(path: &Path) -> CliResult<(String, Table)> {
    let points = read_saturation(path)?;
    let plain = fit_saturation(&points, false).map_err(|e| CliError::from(e).in_file(path))?;
    let quenched = if points.len() >= MIN_SATURATION_POINTS_QUENCH {
        fit_saturation(&points, true)
            .ok()
            .filter(|r| r.converged && r.reduced_chi2 < plain.reduced_chi2)
    } else {
        None
    };
    let mut text = String::from("## Saturation\n\n");
    let _ = writeln!(text, "{} pump powers.\n", points.len());
    text.push_str("| model | R_inf (1/s) | P_sat (µW) | p_q | m | reduced chi2 |\n|---|---:|---:|---:|---:|---:|\n");
    let _ = writeln!(text, "{}", saturation_line("saturation", &plain));
    match &quenched {
        Some(q) => {
            let _ = writeln!(text, "{}", saturation_line("with quench", q));
        }
        None if points.len() >= MIN_SATURATION_POINTS_QUENCH => {
            text.push_str("\nQuench terms do not lower the reduced chi-square; plain saturation model kept.\n");
        }
        None => {}
    }
    let model = |r: &SaturationFitResult, p: f64| {
        saturation_rate(p, r.r_inf.value, r.p_sat.value, r.quench().as_ref()).map(|v| format!("{v:.2}"))
    };
    let mut header = vec!["power_uw", "rate_cps", "stderr_cps", "model_cps"];
    if quenched.is_some() {
        header.push("model_quench_cps");
    }
    let rows = points
        .iter()
        .map(|pt| {
            let mut row = vec![
                format!("{:.4}", pt.power_uw),
                format!("{:.2}", pt.rate),
                format!("{:.2}", pt.stderr),
                model(&plain, pt.power_uw)?,
            ];
            if let Some(q) = &quenched {
                row.push(model(q, pt.power_uw)?);
            }
            Ok(row)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((text, Table { header, rows }))
}

fn stability_section(path: &Path) -> CliResult<(String, Table)> {
    let s = read_stream_file(path)?;
    if s.duration_ticks() < TRACE_WINDOWS {
        return Err(CliError::Data(format!("{}: stream too short for a rate trace", path.display())));
    }
    let dt = s.duration_s() / TRACE_WINDOWS as f64;
    let counts = window_counts(&s, dt)?;
    let rates: Vec<f64> = counts.iter().map(|&c| c as f64 / dt).collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut text = String::from("## Count-rate stability\n\n");
    let _ = writeln!(
        text,
        "{} events over {:.3} s in {} windows of {:.4} s: mean {:.5e} /s, relative scatter {:.3} % (Poisson expectation {:.3} %).",
        s.len(),
        s.duration_s(),
        rates.len(),
        dt,
        mean,
        100.0 * sd / mean,
        100.0 / (mean * dt).sqrt()
    );
    let rows = rates
        .iter()
        .enumerate()
        .map(|(k, r)| vec![format!("{:.6}", (k as f64 + 0.5) * dt), format!("{r:.2}")])
        .collect();
    Ok((
        text,
        Table {
            header: vec!["time_s", "rate_cps"],
            rows,
        },
    ))
}

fn calibration_section(cfg: &WorkbenchConfig, dir: &Path) -> CliResult<(String, Table)> {
    let mut point_dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    point_dirs.sort();
    let inputs = point_dirs
        .iter()
        .map(|p| calibration_input(cfg, &p.join("spad_counts.csv"), &p.join("voltages.csv")))
        .collect::<CliResult<Vec<_>>>()?;
    let mut points: Vec<FluxPoint> = match inputs.len() {
        0 => return Err(CliError::Data(format!("{}: no calibration points", dir.display()))),
        1 => {
            let r = spad_efficiency(&inputs[0])?;
            vec![FluxPoint {
                n_ref: r.n_ref,
                phi_s: r.phi_s,
                eta_spad: r.eta_spad,
                u_combined: r.u_combined,
                u_absolute: r.u_absolute,
            }]
        }
        _ => efficiency_vs_flux(&inputs)?,
    };
    let best = (0..inputs.len())
        .min_by(|&a, &b| points[a].u_combined.total_cmp(&points[b].u_combined))
        .unwrap_or(0);
    let best_result = spad_efficiency(&inputs[best])?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].n_ref.total_cmp(&points[b].n_ref));
    points = order.iter().map(|&k| points[k].clone()).collect();

    let weights: Vec<f64> = points.iter().map(|p| p.u_absolute.powi(-2)).collect();
    let wsum: f64 = weights.iter().sum();
    let mean = points.iter().zip(&weights).map(|(p, w)| p.eta_spad * w).sum::<f64>() / wsum;
    let chi2: f64 = points.iter().map(|p| ((p.eta_spad - mean) / p.u_absolute).powi(2)).sum();

    let mut text = String::from("## SPAD calibration\n\n");
    text.push_str(&sweep_table(&points));
    let _ = writeln!(
        text,
        "\nWeighted mean eta_SPAD = {:.4} ± {:.4}; chi-square {:.2} for {} points.\n",
        mean,
        wsum.powf(-0.5),
        chi2,
        points.len()
    );
    let _ = writeln!(
        text,
        "Budget at {:.2} fW (smallest combined uncertainty):\n\n```\n{}```",
        best_result.phi_s * 1e15,
        best_result.budget.render()
    );
    let rows = points
        .iter()
        .map(|p| {
            vec![
                format!("{:.2}", p.n_ref),
                format!("{:.4}", p.phi_s * 1e15),
                format!("{:.6}", p.eta_spad),
                format!("{:.4}", p.u_combined),
                format!("{:.6}", p.u_absolute),
            ]
        })
        .collect();
    Ok((
        text,
        Table {
            header: vec!["photon_flux", "power_fw", "eta_spad", "u_c_pct", "u_abs"],
            rows,
        },
    ))
}
