//! Workbench configuration file (JSON, unit-suffixed field names).

use std::path::Path;

use serde::{Deserialize, Serialize};

use photonbench::calibrate::TypeBUncertainties;
use photonbench::correlate::HistogramMode;
use photonbench::detectors::{AnalogConfig, DeadTimeModel, SpadConfig};
use photonbench::photophysics::EmitterParams;
use photonbench::presets::{preset, Preset, CALIBRATION_SAMPLES};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkbenchConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Named preset supplying the emitter; exclusive with `emitter`.
    #[serde(default)]
    pub scenario_preset: Option<String>,
    #[serde(default)]
    pub emitter: Option<EmitterParams>,
    /// Pump power matching the emitter's CW pump rate, for saturation sweeps.
    #[serde(default)]
    pub pump_power_uw: Option<f64>,
    /// Start and stop detectors. The first one is also the detector under
    /// calibration.
    #[serde(default = "default_spads")]
    pub spads: [SpadConfig; 2],
    #[serde(default)]
    pub analog: AnalogConfig,
    #[serde(default)]
    pub correlator: CorrelatorSettings,
    #[serde(default)]
    pub calibration: CalibrationSettings,
}

fn default_spads() -> [SpadConfig; 2] {
    [SpadConfig::default(); 2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelatorSettings {
    pub mode: HistogramMode,
    pub bin_width_ns: f64,
    /// Histogram covers `[-half_range_ns, half_range_ns)`.
    pub half_range_ns: f64,
}

impl Default for CorrelatorSettings {
    fn default() -> Self {
        CorrelatorSettings {
            mode: HistogramMode::StartStop,
            bin_width_ns: 0.25,
            half_range_ns: 5000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub wavelength_nm: f64,
    pub spad_dark_cps: f64,
    pub dead_time_ns: f64,
    pub dead_time_model: DeadTimeModel,
    pub type_b: TypeBUncertainties,
    /// Reference-detector samples per simulated calibration point.
    pub analog_samples: usize,
    /// SPAD counting gates per simulated calibration point.
    pub spad_gates: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            wavelength_nm: 785.6,
            spad_dark_cps: 100.0,
            dead_time_ns: 22.0,
            dead_time_model: DeadTimeModel::NonParalyzable,
            type_b: TypeBUncertainties::default(),
            analog_samples: CALIBRATION_SAMPLES,
            spad_gates: 10,
        }
    }
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        WorkbenchConfig {
            seed: None,
            scenario_preset: None,
            emitter: None,
            pump_power_uw: None,
            spads: default_spads(),
            analog: AnalogConfig::default(),
            correlator: CorrelatorSettings::default(),
            calibration: CalibrationSettings::default(),
        }
    }
}

impl WorkbenchConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: WorkbenchConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.validate().map_err(|e| e.in_file(path))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.emitter.is_some() && self.scenario_preset.is_some() {
            return Err(CliError::Usage("set either `emitter` or `scenario_preset`, not both".into()));
        }
        if let Some(name) = &self.scenario_preset {
            preset(name)?;
        }
        if let Some(e) = &self.emitter {
            e.validate()?;
        }
        if let Some(p) = self.pump_power_uw {
            if !(p > 0.0 && p.is_finite()) {
                return Err(CliError::Usage(format!("pump_power_uw must be > 0, got {p}")));
            }
        }
        for s in &self.spads {
            s.validate()?;
        }
        self.analog.validate()?;
        let c = &self.correlator;
        if !(c.bin_width_ns > 0.0 && c.half_range_ns > 0.0) {
            return Err(CliError::Usage("correlator bin_width_ns and half_range_ns must be > 0".into()));
        }
        let cal = &self.calibration;
        if !(cal.wavelength_nm > 0.0) || cal.spad_dark_cps < 0.0 || cal.dead_time_ns < 0.0 {
            return Err(CliError::Usage(
                "calibration wavelength_nm must be > 0; spad_dark_cps and dead_time_ns >= 0".into(),
            ));
        }
        if cal.analog_samples == 0 || cal.spad_gates == 0 {
            return Err(CliError::Usage("calibration analog_samples and spad_gates must be >= 1".into()));
        }
        Ok(())
    }

    fn preset(&self) -> CliResult<Option<&'static Preset>> {
        Ok(match &self.scenario_preset {
            Some(name) => Some(preset(name)?),
            None => None,
        })
    }

    pub fn emitter(&self) -> CliResult<EmitterParams> {
        if let Some(e) = &self.emitter {
            return Ok(e.clone());
        }
        match self.preset()? {
            Some(p) => Ok(p.emitter()),
            None => Err(CliError::Usage(
                "no emitter configured; set `emitter` or `scenario_preset` in the config, or pass --preset".into(),
            )),
        }
    }

    pub fn pump_power_uw(&self) -> CliResult<f64> {
        if let Some(p) = self.pump_power_uw {
            return Ok(p);
        }
        match self.preset()? {
            Some(p) => Ok(p.pump_power_uw),
            None => Err(CliError::Usage("saturation sweeps need `pump_power_uw` or a preset".into())),
        }
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Usage("no seed; set `seed` in the config or pass --seed".into()))
    }
}
