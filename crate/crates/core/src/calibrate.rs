//! SPAD detection-efficiency calibration against the analog reference
//! detector, with a GUM-style uncertainty budget.
//!
//! `η = N_SPAD / N_ref` with `N_ref = V·(1 − F_Lin)·λ / (F_Amp·s_Si·h·c)`.

use serde::{Deserialize, Serialize};

use crate::detectors::{dead_time_correct, AnalogConfig, DeadTimeModel};
use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::photophysics::{photon_energy, PLANCK, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvaluationType {
    A,
    B,
}

impl std::fmt::Display for EvaluationType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvaluationType::A => "A",
            EvaluationType::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetComponent {
    pub name: String,
    /// Relative standard uncertainty in percent.
    pub percent: f64,
    pub kind: EvaluationType,
    /// Exact constants are listed with zero uncertainty and rendered as `-`.
    #[serde(default)]
    pub exact: bool,
}

impl BudgetComponent {
    pub fn new(name: impl Into<String>, percent: f64, kind: EvaluationType) -> Self {
        BudgetComponent {
            name: name.into(),
            percent,
            kind,
            exact: false,
        }
    }

    /// A defined constant, listed without uncertainty.
    pub fn exact(name: impl Into<String>) -> Self {
        BudgetComponent {
            name: name.into(),
            percent: 0.0,
            kind: EvaluationType::B,
            exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub components: Vec<BudgetComponent>,
    /// Relative combined standard uncertainty in percent.
    pub combined: f64,
}

/// Root-sum-square of the relative components.
pub fn combine_budget(components: Vec<BudgetComponent>) -> Result<UncertaintyBudget> {
    if components.is_empty() {
        return Err(Error::param("components", "at least one component is required"));
    }
    for c in &components {
        if !(c.percent >= 0.0 && c.percent.is_finite()) {
            return Err(Error::param(
                "components",
                format!("`{}` has invalid uncertainty {}", c.name, c.percent),
            ));
        }
    }
    let scale = components.iter().fold(0.0f64, |m, c| m.max(c.percent));
    let combined = if scale == 0.0 {
        0.0
    } else {
        scale
            * components
                .iter()
                .map(|c| (c.percent / scale).powi(2))
                .sum::<f64>()
                .sqrt()
    };
    Ok(UncertaintyBudget { components, combined })
}

impl UncertaintyBudget {
    /// Two-column text table: source, standard uncertainty (%), type.
    pub fn render(&self) -> String {
        let width = self
            .components
            .iter()
            .map(|c| c.name.chars().count())
            .chain(["Source of uncertainty".len(), "Combined uncertainty, u_c".len()])
            .max()
            .unwrap_or(0);
        let mut out = format!("{:<width$}  {:>12}  Type\n", "Source of uncertainty", "Std. unc. (%)");
        for c in &self.components {
            let value = if c.exact {
                "-".to_string()
            } else {
                format!("{:.3}", c.percent)
            };
            let kind = if c.exact { "-".to_string() } else { c.kind.to_string() };
            out.push_str(&format!("{:<width$}  {:>12}  {kind}\n", c.name, value));
        }
        out.push_str(&format!(
            "{:<width$}  {:>12}\n",
            "Combined uncertainty, u_c",
            format!("{:.2}", self.combined)
        ));
        out
    }
}

/// Type-B relative uncertainties (%) of the calibration inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeBUncertainties {
    #[serde(default = "default_wavelength_pct")]
    pub wavelength_pct: f64,
    #[serde(default = "default_responsivity_pct")]
    pub responsivity_pct: f64,
    #[serde(default = "default_gain_pct")]
    pub gain_pct: f64,
    #[serde(default = "default_linearity_pct")]
    pub linearity_pct: f64,
    #[serde(default = "default_spad_counts_pct")]
    pub spad_counts_pct: f64,
    /// Optional dead-time correction model row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_time_pct: Option<f64>,
}

fn default_wavelength_pct() -> f64 {
    0.008
}
fn default_responsivity_pct() -> f64 {
    0.400
}
fn default_gain_pct() -> f64 {
    0.100
}
fn default_linearity_pct() -> f64 {
    0.030
}
fn default_spad_counts_pct() -> f64 {
    0.020
}

impl Default for TypeBUncertainties {
    fn default() -> Self {
        TypeBUncertainties {
            wavelength_pct: default_wavelength_pct(),
            responsivity_pct: default_responsivity_pct(),
            gain_pct: default_gain_pct(),
            linearity_pct: default_linearity_pct(),
            spad_counts_pct: default_spad_counts_pct(),
            dead_time_pct: None,
        }
    }
}

/// One SPAD counting gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadGate {
    pub gate_s: f64,
    pub counts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInput {
    pub spad_counts: Vec<SpadGate>,
    pub spad_dark_cps: f64,
    pub voltages: Vec<f64>,
    pub analog: AnalogConfig,
    pub wavelength_nm: f64,
    pub dead_time_ns: f64,
    pub dead_time_model: DeadTimeModel,
    pub type_b: TypeBUncertainties,
}

impl CalibrationInput {
    pub fn validate(&self) -> Result<()> {
        if self.spad_counts.is_empty() {
            return Err(Error::InsufficientData("no SPAD counting gates".into()));
        }
        if self.voltages.is_empty() {
            return Err(Error::InsufficientData("no reference voltage samples".into()));
        }
        for g in &self.spad_counts {
            check_positive("gate_s", g.gate_s)?;
        }
        check_non_negative("spad_dark_cps", self.spad_dark_cps)?;
        check_positive("wavelength_nm", self.wavelength_nm)?;
        check_non_negative("dead_time_ns", self.dead_time_ns)?;
        self.analog.validate()
    }

    pub fn mean_voltage(&self) -> f64 {
        self.voltages.iter().sum::<f64>() / self.voltages.len() as f64
    }

    /// Standard error of the mean voltage; zero for a single sample.
    pub fn voltage_sem(&self) -> f64 {
        let n = self.voltages.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_voltage();
        let var = self.voltages.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta_spad: f64,
    /// Relative combined uncertainty in percent.
    pub u_combined: f64,
    pub u_absolute: f64,
    /// Reference photon flux (photons/s).
    pub n_ref: f64,
    /// Corrected SPAD count rate (counts/s).
    pub n_spad: f64,
    /// Reference optical power (W).
    pub phi_s: f64,
    pub budget: UncertaintyBudget,
}

/// Photon flux implied by a mean reference-detector voltage.
pub fn reference_flux(mean_voltage: f64, cfg: &AnalogConfig, wavelength_nm: f64) -> Result<f64> {
    check_positive("mean_voltage", mean_voltage)?;
    check_positive("wavelength_nm", wavelength_nm)?;
    cfg.validate()?;
    Ok(mean_voltage * (1.0 - cfg.linearity_correction) * wavelength_nm * 1e-9
        / (cfg.gain_v_per_a * cfg.responsivity_a_per_w * PLANCK * SPEED_OF_LIGHT))
}

/// Pooled raw rate, minus dark counts, then corrected for dead time.
pub fn spad_rate(input: &CalibrationInput) -> Result<f64> {
    if input.spad_counts.is_empty() {
        return Err(Error::InsufficientData("no SPAD counting gates".into()));
    }
    for g in &input.spad_counts {
        check_positive("gate_s", g.gate_s)?;
    }
    let total_time: f64 = input.spad_counts.iter().map(|g| g.gate_s).sum();
    let total_counts: f64 = input.spad_counts.iter().map(|g| g.counts as f64).sum();
    let net = total_counts / total_time - input.spad_dark_cps;
    if !(net > 0.0) {
        return Err(Error::Unphysical(format!(
            "dark-corrected SPAD rate {net} counts/s is not positive"
        )));
    }
    dead_time_correct(net, input.dead_time_ns, input.dead_time_model)
}

pub fn spad_efficiency(input: &CalibrationInput) -> Result<CalibrationResult> {
    input.validate()?;
    let mean_v = input.mean_voltage();
    if !(mean_v > 0.0) {
        return Err(Error::Unphysical(format!("mean reference voltage {mean_v} V is not positive")));
    }
    let n_ref = reference_flux(mean_v, &input.analog, input.wavelength_nm)?;
    let n_spad = spad_rate(input)?;
    let eta = n_spad / n_ref;

    let b = &input.type_b;
    let mut rows = vec![
        BudgetComponent::exact("Planck's constant, h"),
        BudgetComponent::new("Wavelength, λ", b.wavelength_pct, EvaluationType::B),
        BudgetComponent::exact("Speed of light, c"),
        BudgetComponent::new("Si-detector spectral responsivity, s_Si", b.responsivity_pct, EvaluationType::B),
        BudgetComponent::new(
            "Si-detector measurement, V_f",
            100.0 * input.voltage_sem() / mean_v,
            EvaluationType::A,
        ),
        BudgetComponent::new("Amplification factor, F_Amp", b.gain_pct, EvaluationType::B),
        BudgetComponent::new("Linearity factor of the Si-detector, F_Lin", b.linearity_pct, EvaluationType::B),
        BudgetComponent::new("Si-SPAD counts", b.spad_counts_pct, EvaluationType::B),
    ];
    if let Some(dt) = b.dead_time_pct {
        rows.push(BudgetComponent::new("Dead-time correction", dt, EvaluationType::B));
    }
    let budget = combine_budget(rows)?;
    let u_abs = eta * budget.combined / 100.0;
    if eta > 1.0 + 3.0 * u_abs {
        return Err(Error::Unphysical(format!(
            "efficiency {eta:.4} exceeds 1 by more than three standard uncertainties ({u_abs:.4})"
        )));
    }
    Ok(CalibrationResult {
        eta_spad: eta,
        u_combined: budget.combined,
        u_absolute: u_abs,
        n_ref,
        n_spad,
        phi_s: n_ref * photon_energy(input.wavelength_nm),
        budget,
    })
}

/// One row of an efficiency-versus-flux sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxPoint {
    pub n_ref: f64,
    pub phi_s: f64,
    pub eta_spad: f64,
    pub u_combined: f64,
    pub u_absolute: f64,
}

pub fn efficiency_vs_flux(inputs: &[CalibrationInput]) -> Result<Vec<FluxPoint>> {
    if inputs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} flux points; at least 2 required",
            inputs.len()
        )));
    }
    inputs
        .iter()
        .map(|input| {
            let r = spad_efficiency(input)?;
            Ok(FluxPoint {
                n_ref: r.n_ref,
                phi_s: r.phi_s,
                eta_spad: r.eta_spad,
                u_combined: r.u_combined,
                u_absolute: r.u_absolute,
            })
        })
        .collect()
}
