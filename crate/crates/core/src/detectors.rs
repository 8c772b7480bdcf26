//! Click-level SPAD model, HBT beam splitter, analog reference detector and
//! dead-time corrections.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, check_non_negative, check_positive, Error, Result};
use crate::rng::{self, streams};
use crate::stream::{self, PhotonStream};

/// Gaussian FWHM / σ.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadTimeModel {
    /// Events arriving while dead are lost and do not extend the dead period.
    #[default]
    NonParalyzable,
    /// Every arrival restarts the dead period.
    Paralyzable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpadConfig {
    pub efficiency: f64,
    #[serde(default = "default_dead_time")]
    pub dead_time_ns: f64,
    #[serde(default)]
    pub dead_time_model: DeadTimeModel,
    #[serde(default)]
    pub dark_rate_cps: f64,
    #[serde(default = "default_jitter")]
    pub jitter_fwhm_ns: f64,
}

// Placeholder typical of thick-junction Si SPAD modules; not a measured value.
fn default_dead_time() -> f64 {
    22.0
}
fn default_jitter() -> f64 {
    0.4
}

impl Default for SpadConfig {
    fn default() -> Self {
        SpadConfig {
            efficiency: 0.6,
            dead_time_ns: default_dead_time(),
            dead_time_model: DeadTimeModel::NonParalyzable,
            dark_rate_cps: 100.0,
            jitter_fwhm_ns: default_jitter(),
        }
    }
}

impl SpadConfig {
    /// Perfect detector: every photon clicks at its true arrival time.
    pub fn ideal() -> Self {
        SpadConfig {
            efficiency: 1.0,
            dead_time_ns: 0.0,
            dead_time_model: DeadTimeModel::NonParalyzable,
            dark_rate_cps: 0.0,
            jitter_fwhm_ns: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("efficiency", self.efficiency)?;
        check_non_negative("dead_time_ns", self.dead_time_ns)?;
        check_non_negative("dark_rate_cps", self.dark_rate_cps)?;
        check_non_negative("jitter_fwhm_ns", self.jitter_fwhm_ns)
    }
}

/// Turns incident photons into registered clicks: efficiency thinning, dark
/// counts, Gaussian timing jitter on photon clicks, then dead time.
pub fn detect_spad(stream: &PhotonStream, cfg: &SpadConfig, seed: u64) -> Result<PhotonStream> {
    cfg.validate()?;
    let res = stream.resolution_ps();
    let duration = stream.duration_ticks();

    let mut clicks = stream::thin_with(stream, cfg.efficiency, &mut rng::substream(seed, streams::THIN));

    if cfg.jitter_fwhm_ns > 0.0 && !clicks.is_empty() {
        let sigma_ticks = cfg.jitter_fwhm_ns / FWHM_PER_SIGMA * 1e3 / res as f64;
        let mut rng = rng::substream(seed, streams::JITTER);
        let mut ticks: Vec<u64> = clicks
            .timestamps()
            .iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let shifted = t as f64 + (sigma_ticks * z).round();
                shifted.clamp(0.0, duration as f64) as u64
            })
            .collect();
        ticks.sort_unstable();
        clicks = PhotonStream::from_sorted_unchecked(res, duration, ticks);
    }

    if cfg.dark_rate_cps > 0.0 {
        let dark = stream::poisson_stream_with(
            cfg.dark_rate_cps,
            duration,
            res,
            &mut rng::substream(seed, streams::DARK),
        );
        clicks = stream::merge(&clicks, &dark)?;
    }

    let clicks = apply_dead_time(&clicks, cfg.dead_time_ns, cfg.dead_time_model)?;
    Ok(match stream.channel() {
        Some(c) => clicks.with_channel(c),
        None => clicks,
    })
}

/// Removes events that fall inside the detector's dead period.
pub fn apply_dead_time(stream: &PhotonStream, dead_time_ns: f64, model: DeadTimeModel) -> Result<PhotonStream> {
    check_non_negative("dead_time_ns", dead_time_ns)?;
    let dead = stream.ticks_from_ns(dead_time_ns).max(0) as u64;
    let ts = stream.timestamps();
    if dead == 0 || ts.is_empty() {
        return Ok(stream.clone());
    }
    let mut out = Vec::with_capacity(ts.len());
    out.push(ts[0]);
    let mut reference = ts[0];
    for &t in &ts[1..] {
        let live = t - reference >= dead;
        if live {
            out.push(t);
        }
        match model {
            DeadTimeModel::NonParalyzable if live => reference = t,
            DeadTimeModel::NonParalyzable => {}
            DeadTimeModel::Paralyzable => reference = t,
        }
    }
    let result = PhotonStream::from_sorted_unchecked(stream.resolution_ps(), stream.duration_ticks(), out);
    Ok(match stream.channel() {
        Some(c) => result.with_channel(c),
        None => result,
    })
}

/// True event rate from a dead-time-limited measured rate (both 1/s).
pub fn dead_time_correct(measured_rate: f64, dead_time_ns: f64, model: DeadTimeModel) -> Result<f64> {
    check_non_negative("measured_rate", measured_rate)?;
    check_non_negative("dead_time_ns", dead_time_ns)?;
    let tau = dead_time_ns * 1e-9;
    let x = measured_rate * tau;
    if tau == 0.0 || measured_rate == 0.0 {
        return Ok(measured_rate);
    }
    match model {
        DeadTimeModel::NonParalyzable => {
            if x >= 1.0 {
                return Err(Error::Unphysical(format!(
                    "measured rate × dead time = {x} >= 1 for a non-paralyzable detector"
                )));
            }
            Ok(measured_rate / (1.0 - x))
        }
        DeadTimeModel::Paralyzable => {
            let y = solve_paralyzable(x)?;
            Ok(y / tau)
        }
    }
}

/// Solves `y·e^(−y) = x` for `y ∈ [0, 1]`.
fn solve_paralyzable(x: f64) -> Result<f64> {
    let peak = (-1.0f64).exp();
    if x > peak {
        return Err(Error::Unphysical(format!(
            "measured rate × dead time = {x} exceeds the paralyzable maximum 1/e"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut y = x.min(1.0);
    for _ in 0..200 {
        let f = y * (-y).exp() - x;
        if f > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let df = (1.0 - y) * (-y).exp();
        let newton = if df > 0.0 { y - f / df } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - y).abs() <= 1e-15 * y.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        y = next;
    }
    Ok(y)
}

/// 50/50 fibre splitter: each event goes to one arm with probability ½.
pub fn hbt_split(stream: &PhotonStream, seed: u64) -> (PhotonStream, PhotonStream) {
    let mut rng = rng::substream(seed, streams::SPLIT);
    let mut a = Vec::with_capacity(stream.len() / 2 + 16);
    let mut b = Vec::with_capacity(stream.len() / 2 + 16);
    for &t in stream.timestamps() {
        if rng.random::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let res = stream.resolution_ps();
    let d = stream.duration_ticks();
    (
        PhotonStream::from_sorted_unchecked(res, d, a).with_channel(1),
        PhotonStream::from_sorted_unchecked(res, d, b).with_channel(2),
    )
}

/// Reference photodiode with trans-impedance readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalogConfig {
    #[serde(default = "default_responsivity")]
    pub responsivity_a_per_w: f64,
    #[serde(default = "default_gain")]
    pub gain_v_per_a: f64,
    #[serde(default = "default_nep")]
    pub nep_w_per_rthz: f64,
    #[serde(default = "default_integration")]
    pub integration_time_s: f64,
    /// Linearity correction `F_Lin`; the readout reports `V/(1 − F_Lin)`.
    #[serde(default)]
    pub linearity_correction: f64,
    /// Per-sample noise proportional to the signal, as a fraction of it.
    #[serde(default)]
    pub relative_noise: f64,
}

fn default_responsivity() -> f64 {
    0.5752
}
fn default_gain() -> f64 {
    1e12
}
fn default_nep() -> f64 {
    0.7e-15
}
fn default_integration() -> f64 {
    1.0
}

impl Default for AnalogConfig {
    fn default() -> Self {
        AnalogConfig {
            responsivity_a_per_w: default_responsivity(),
            gain_v_per_a: default_gain(),
            nep_w_per_rthz: default_nep(),
            integration_time_s: default_integration(),
            linearity_correction: 0.0,
            relative_noise: 0.0,
        }
    }
}

impl AnalogConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("responsivity_a_per_w", self.responsivity_a_per_w)?;
        check_positive("gain_v_per_a", self.gain_v_per_a)?;
        check_non_negative("nep_w_per_rthz", self.nep_w_per_rthz)?;
        check_positive("integration_time_s", self.integration_time_s)?;
        check_non_negative("relative_noise", self.relative_noise)?;
        if !(0.0..1.0).contains(&self.linearity_correction) {
            return Err(Error::param("linearity_correction", "must be in [0, 1)"));
        }
        Ok(())
    }

    /// Volts per watt of incident optical power.
    pub fn volts_per_watt(&self) -> f64 {
        self.responsivity_a_per_w * self.gain_v_per_a / (1.0 - self.linearity_correction)
    }

    /// Noise-equivalent optical power of one sample, with noise bandwidth
    /// `1/(2T)`.
    pub fn nep_sigma_w(&self) -> f64 {
        self.nep_w_per_rthz * (0.5 / self.integration_time_s).sqrt()
    }

    /// Per-sample voltage standard deviation at `mean_power_w`.
    pub fn voltage_sigma(&self, mean_power_w: f64) -> f64 {
        let floor = self.nep_sigma_w() * self.responsivity_a_per_w * self.gain_v_per_a;
        let prop = self.relative_noise * mean_power_w * self.volts_per_watt();
        floor.hypot(prop)
    }
}

/// Voltage samples of the reference detector illuminated by `mean_power_w`.
pub fn read_analog(mean_power_w: f64, cfg: &AnalogConfig, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_non_negative("mean_power", mean_power_w)?;
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be >= 1"));
    }
    let mean = mean_power_w * cfg.volts_per_watt();
    let sigma = cfg.voltage_sigma(mean_power_w);
    let mut rng = rng::substream(seed, streams::ANALOG);
    Ok((0..n_samples)
        .map(|_| {
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + sigma * z
            } else {
                mean
            }
        })
        .collect())
}
