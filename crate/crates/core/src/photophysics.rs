//! Closed-form emitter models and radiometric conversions.
//!
//! Units follow the field names: durations in ns unless suffixed otherwise,
//! pump rates in 1/ns, count rates in 1/s, optical power in W (or µW for pump
//! powers), wavelengths in nm.

use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, check_non_negative, check_positive, Error, Result};

/// Planck constant, J·s (exact, SI 2019 / CODATA 2018).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NM: f64 = 1e-9;

/// Empirical high-power roll-off `1 / (1 + (x / p_q)^m)`.
///
/// `p_q` carries the units of whatever quantity is being attenuated: µW when
/// applied to a saturation curve, 1/ns when applied to a pump rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quench {
    pub p_q: f64,
    pub exponent: f64,
}

impl Quench {
    pub fn validate(&self) -> Result<()> {
        check_positive("quench.p_q", self.p_q)?;
        check_positive("quench.exponent", self.exponent)
    }

    #[inline]
    pub fn factor(&self, x: f64) -> f64 {
        1.0 / (1.0 + (x / self.p_q).powf(self.exponent))
    }
}

/// How the molecule is driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpMode {
    /// Continuous-wave excitation at a fixed ground→excited rate.
    Cw { pump_rate_per_ns: f64 },
    /// Instantaneous pulses at `rep_rate_mhz`, each exciting a ground-state
    /// molecule with probability `p_exc`.
    Pulsed { rep_rate_mhz: f64, p_exc: f64 },
}

impl PumpMode {
    /// CW pump from an optical power through the linear coefficient `kappa`
    /// (1/(ns·µW)).
    pub fn cw_from_power(power_uw: f64, kappa_per_ns_per_uw: f64) -> Result<Self> {
        check_non_negative("pump_power_uw", power_uw)?;
        check_non_negative("kappa_per_ns_per_uw", kappa_per_ns_per_uw)?;
        Ok(PumpMode::Cw {
            pump_rate_per_ns: power_uw * kappa_per_ns_per_uw,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PumpMode::Cw { pump_rate_per_ns } => check_non_negative("pump_rate_per_ns", pump_rate_per_ns),
            PumpMode::Pulsed { rep_rate_mhz, p_exc } => {
                check_positive("rep_rate_mhz", rep_rate_mhz)?;
                check_fraction("p_exc", p_exc)
            }
        }
    }
}

/// One knot of a piecewise-linear multiplicative pump modulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftKnot {
    pub t_s: f64,
    pub factor: f64,
}

/// Three-level (ground, excited, triplet) molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    #[serde(default = "default_tau_excited")]
    pub tau_excited_ns: f64,
    pub pump: PumpMode,
    #[serde(default = "one")]
    pub quantum_yield: f64,
    /// Excited → triplet branching probability.
    #[serde(default = "default_isc_yield")]
    pub isc_yield: f64,
    #[serde(default = "default_tau_triplet")]
    pub tau_triplet_us: f64,
    /// Attenuates the CW pump rate; `p_q` in 1/ns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quench: Option<Quench>,
    /// Optics, spectral filtering and fibre coupling, lumped.
    #[serde(default = "one")]
    pub collection_efficiency: f64,
    /// Optional pump modulation; empty means constant pump.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pump_drift: Vec<DriftKnot>,
}

fn default_tau_excited() -> f64 {
    4.0
}
fn one() -> f64 {
    1.0
}
// Assumed values: with a 10 µs triplet lifetime this branching gives ~2 %
// dark time at a pump rate of 1/τ.
fn default_isc_yield() -> f64 {
    1.6e-5
}
fn default_tau_triplet() -> f64 {
    10.0
}

impl EmitterParams {
    /// Ideal two-level emitter (no triplet, unit yields) under CW pumping.
    pub fn two_level(tau_excited_ns: f64, pump_rate_per_ns: f64) -> Self {
        EmitterParams {
            tau_excited_ns,
            pump: PumpMode::Cw { pump_rate_per_ns },
            quantum_yield: 1.0,
            isc_yield: 0.0,
            tau_triplet_us: default_tau_triplet(),
            quench: None,
            collection_efficiency: 1.0,
            pump_drift: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("tau_excited_ns", self.tau_excited_ns)?;
        self.pump.validate()?;
        check_fraction("quantum_yield", self.quantum_yield)?;
        check_fraction("isc_yield", self.isc_yield)?;
        check_fraction("collection_efficiency", self.collection_efficiency)?;
        if self.isc_yield > 0.0 {
            check_positive("tau_triplet_us", self.tau_triplet_us)?;
        }
        if let Some(q) = &self.quench {
            q.validate()?;
        }
        let mut last = f64::NEG_INFINITY;
        for knot in &self.pump_drift {
            check_non_negative("pump_drift.factor", knot.factor)?;
            if !(knot.t_s > last) {
                return Err(Error::param("pump_drift", "knot times must be strictly increasing"));
            }
            last = knot.t_s;
        }
        Ok(())
    }

    /// Probability that an excited-state decay produces a collected photon.
    pub fn photon_yield(&self) -> f64 {
        self.quantum_yield * (1.0 - self.isc_yield) * self.collection_efficiency
    }

    /// CW pump rate after the optional quench roll-off, 1/ns.
    pub fn effective_pump_rate(&self, pump_rate_per_ns: f64) -> f64 {
        match &self.quench {
            Some(q) => pump_rate_per_ns * q.factor(pump_rate_per_ns),
            None => pump_rate_per_ns,
        }
    }

    /// Multiplicative pump modulation at time `t_s`; 1 when no drift is set.
    pub fn drift_factor(&self, t_s: f64) -> f64 {
        let knots = &self.pump_drift;
        match knots.len() {
            0 => 1.0,
            1 => knots[0].factor,
            _ => {
                if t_s <= knots[0].t_s {
                    return knots[0].factor;
                }
                for w in knots.windows(2) {
                    if t_s <= w[1].t_s {
                        let f = (t_s - w[0].t_s) / (w[1].t_s - w[0].t_s);
                        return w[0].factor + f * (w[1].factor - w[0].factor);
                    }
                }
                knots[knots.len() - 1].factor
            }
        }
    }

    /// Mean collected photon rate (1/s) of the stationary emitter with
    /// constant pump.
    pub fn steady_state_rate(&self) -> f64 {
        match self.pump {
            PumpMode::Cw { pump_rate_per_ns } => {
                let p = self.effective_pump_rate(pump_rate_per_ns);
                if p <= 0.0 {
                    return 0.0;
                }
                let cycle_ns = 1.0 / p + self.tau_excited_ns + self.isc_yield * self.tau_triplet_us * 1e3;
                self.photon_yield() / cycle_ns * 1e9
            }
            PumpMode::Pulsed { rep_rate_mhz, p_exc } => {
                rep_rate_mhz * 1e6 * p_exc * self.photon_yield()
            }
        }
    }

    /// Stationary fraction of time spent in the triplet (dark) state, CW only.
    pub fn triplet_fraction(&self) -> f64 {
        match self.pump {
            PumpMode::Cw { pump_rate_per_ns } => {
                let p = self.effective_pump_rate(pump_rate_per_ns);
                if p <= 0.0 {
                    return 0.0;
                }
                let dark = self.isc_yield * self.tau_triplet_us * 1e3;
                dark / (1.0 / p + self.tau_excited_ns + dark)
            }
            PumpMode::Pulsed { .. } => 0.0,
        }
    }
}

/// Parameters of the antibunching model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Params {
    /// Dip depth.
    pub b: f64,
    /// Dip time constant, ns.
    pub t1: f64,
    /// Count-rate decay of the start–stop histogram, 1/s.
    pub rate_r: f64,
}

impl G2Params {
    pub fn validate(&self) -> Result<()> {
        check_fraction("b", self.b)?;
        check_positive("t1", self.t1)?;
        check_non_negative("rate_r", self.rate_r)
    }
}

/// `(1 − b·e^(−|t|/t1))·e^(−R·|t|)` with `t` in ns and `R` in 1/s.
#[inline]
pub fn g2_model(t_ns: f64, p: &G2Params) -> f64 {
    let at = t_ns.abs();
    (1.0 - p.b * (-at / p.t1).exp()) * (-p.rate_r * at * 1e-9).exp()
}

pub fn g2_zero(b: f64) -> Result<f64> {
    check_fraction("b", b)?;
    Ok(1.0 - b)
}

/// Antibunching time constant `1 / (1/τ + P)`, ns.
pub fn antibunch_timescale(tau_ns: f64, pump_rate_per_ns: f64) -> Result<f64> {
    check_positive("tau", tau_ns)?;
    check_non_negative("pump_rate", pump_rate_per_ns)?;
    Ok(1.0 / (1.0 / tau_ns + pump_rate_per_ns))
}

/// Two-level saturation `r_inf·P/(P + P_sat)` with optional roll-off
/// (`quench.p_q` in µW).
pub fn saturation_rate(power_uw: f64, r_inf: f64, p_sat_uw: f64, quench: Option<&Quench>) -> Result<f64> {
    check_non_negative("power", power_uw)?;
    check_positive("r_inf", r_inf)?;
    check_positive("p_sat", p_sat_uw)?;
    let base = r_inf * power_uw / (power_uw + p_sat_uw);
    Ok(match quench {
        Some(q) => base * q.factor(power_uw),
        None => base,
    })
}

/// Photon energy `hc/λ`, J.
#[inline]
pub fn photon_energy(wavelength_nm: f64) -> f64 {
    PLANCK * SPEED_OF_LIGHT / (wavelength_nm * NM)
}

/// Optical power (W) carried by a photon flux (1/s).
pub fn flux_to_power(flux: f64, wavelength_nm: f64) -> Result<f64> {
    check_non_negative("flux", flux)?;
    check_positive("wavelength", wavelength_nm)?;
    Ok(flux * photon_energy(wavelength_nm))
}

/// Photon flux (1/s) carried by an optical power (W).
pub fn power_to_flux(power_w: f64, wavelength_nm: f64) -> Result<f64> {
    check_non_negative("power", power_w)?;
    check_positive("wavelength", wavelength_nm)?;
    Ok(power_w / photon_energy(wavelength_nm))
}

/// A photon flux together with its optical power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiantSample {
    pub photon_flux: f64,
    pub wavelength_nm: f64,
    pub optical_power_w: f64,
}

impl RadiantSample {
    pub fn from_flux(photon_flux: f64, wavelength_nm: f64) -> Result<Self> {
        Ok(RadiantSample {
            photon_flux,
            wavelength_nm,
            optical_power_w: flux_to_power(photon_flux, wavelength_nm)?,
        })
    }

    pub fn from_power(optical_power_w: f64, wavelength_nm: f64) -> Result<Self> {
        Ok(RadiantSample {
            photon_flux: power_to_flux(optical_power_w, wavelength_nm)?,
            wavelength_nm,
            optical_power_w,
        })
    }

    /// Optical frequency `c/λ`, Hz.
    pub fn frequency_hz(&self) -> f64 {
        SPEED_OF_LIGHT / (self.wavelength_nm * NM)
    }
}
