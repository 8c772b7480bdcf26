//! Small CSV tables exchanged by the subcommands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use photonbench::calibrate::{BudgetComponent, EvaluationType, SpadGate};
use photonbench::fit::SaturationPoint;

use crate::error::{CliError, CliResult};

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    reader(path)?
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::csv(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct VoltageRow {
    voltage_v: f64,
}

pub fn read_voltages(path: &Path) -> CliResult<Vec<f64>> {
    let v: Vec<f64> = read_rows::<VoltageRow>(path)?.into_iter().map(|r| r.voltage_v).collect();
    if v.is_empty() {
        return Err(CliError::Data(format!("{}: no voltage samples", path.display())));
    }
    Ok(v)
}

pub fn write_voltages(path: &Path, volts: &[f64]) -> CliResult<()> {
    let rows: Vec<VoltageRow> = volts.iter().map(|&voltage_v| VoltageRow { voltage_v }).collect();
    write_rows(path, &rows)
}

pub fn read_spad_counts(path: &Path) -> CliResult<Vec<SpadGate>> {
    let gates: Vec<SpadGate> = read_rows(path)?;
    if gates.is_empty() {
        return Err(CliError::Data(format!("{}: no SPAD counting gates", path.display())));
    }
    Ok(gates)
}

#[derive(Debug, Serialize, Deserialize)]
struct SaturationRow {
    power_uw: f64,
    rate_cps: f64,
    stderr_cps: f64,
}

pub fn read_saturation(path: &Path) -> CliResult<Vec<SaturationPoint>> {
    Ok(read_rows::<SaturationRow>(path)?
        .into_iter()
        .map(|r| SaturationPoint {
            power_uw: r.power_uw,
            rate: r.rate_cps,
            stderr: r.stderr_cps,
        })
        .collect())
}

pub fn write_saturation(path: &Path, points: &[SaturationPoint]) -> CliResult<()> {
    let rows: Vec<SaturationRow> = points
        .iter()
        .map(|p| SaturationRow {
            power_uw: p.power_uw,
            rate_cps: p.rate,
            stderr_cps: p.stderr,
        })
        .collect();
    write_rows(path, &rows)
}

/// `source,percent,type` rows; a percent of `-` marks an exact constant.
#[derive(Debug, Deserialize)]
struct ComponentRow {
    source: String,
    percent: String,
    #[serde(rename = "type")]
    kind: String,
}

pub fn read_components(path: &Path) -> CliResult<Vec<BudgetComponent>> {
    let rows: Vec<ComponentRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no budget components", path.display())));
    }
    rows.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let bad = |what: &str| CliError::Data(format!("{}: row {}: {what}", path.display(), k + 1));
            if r.percent == "-" {
                return Ok(BudgetComponent::exact(r.source));
            }
            let percent: f64 = r.percent.parse().map_err(|_| bad(&format!("bad percent `{}`", r.percent)))?;
            let kind = match r.kind.as_str() {
                "A" | "a" => EvaluationType::A,
                "B" | "b" => EvaluationType::B,
                other => return Err(bad(&format!("type must be A or B, got `{other}`"))),
            };
            Ok(BudgetComponent::new(r.source, percent, kind))
        })
        .collect()
}
