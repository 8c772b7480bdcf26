//! Photon timestamp streams: Monte-Carlo emission, stream algebra and the
//! photon-number variance check.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, check_positive, Error, Result};
use crate::photophysics::{EmitterParams, PumpMode};
use crate::rng::{self, exponential, geometric, streams};

pub const DEFAULT_RESOLUTION_PS: u64 = 1;

/// Sorted event timestamps in integer ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotonStream {
    resolution_ps: u64,
    timestamps: Vec<u64>,
    duration_ticks: u64,
    channel: Option<u8>,
}

impl PhotonStream {
    pub fn new(resolution_ps: u64, duration_ticks: u64, timestamps: Vec<u64>) -> Result<Self> {
        if resolution_ps == 0 {
            return Err(Error::param("resolution_ps", "must be > 0"));
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format("timestamps are not sorted".into()));
        }
        if let Some(&last) = timestamps.last() {
            if last > duration_ticks {
                return Err(Error::Format(format!(
                    "timestamp {last} beyond duration {duration_ticks}"
                )));
            }
        }
        Ok(PhotonStream {
            resolution_ps,
            timestamps,
            duration_ticks,
            channel: None,
        })
    }

    /// Stream with no events spanning `duration_ticks`.
    pub fn empty(resolution_ps: u64, duration_ticks: u64) -> Result<Self> {
        Self::new(resolution_ps, duration_ticks, Vec::new())
    }

    /// Caller guarantees ordering and bounds.
    pub(crate) fn from_sorted_unchecked(resolution_ps: u64, duration_ticks: u64, timestamps: Vec<u64>) -> Self {
        debug_assert!(timestamps.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(timestamps.last().is_none_or(|&t| t <= duration_ticks));
        PhotonStream {
            resolution_ps,
            timestamps,
            duration_ticks,
            channel: None,
        }
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = Some(channel);
        self
    }

    pub fn resolution_ps(&self) -> u64 {
        self.resolution_ps
    }
    pub fn timestamps(&self) -> &[u64] {
        &self.timestamps
    }
    pub fn into_timestamps(self) -> Vec<u64> {
        self.timestamps
    }
    pub fn duration_ticks(&self) -> u64 {
        self.duration_ticks
    }
    pub fn channel(&self) -> Option<u8> {
        self.channel
    }
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ticks as f64 * self.resolution_ps as f64 * 1e-12
    }

    /// Mean event rate, 1/s.
    pub fn rate(&self) -> f64 {
        let d = self.duration_s();
        if d > 0.0 {
            self.len() as f64 / d
        } else {
            0.0
        }
    }

    /// Nearest whole number of ticks for a duration in ns.
    pub fn ticks_from_ns(&self, ns: f64) -> i64 {
        ns_to_ticks(ns, self.resolution_ps)
    }

    /// Shifts every event and the span by `ticks`.
    pub fn shifted(&self, ticks: u64) -> Result<Self> {
        let duration = self
            .duration_ticks
            .checked_add(ticks)
            .ok_or_else(|| Error::Overflow("shifted duration".into()))?;
        Ok(PhotonStream {
            resolution_ps: self.resolution_ps,
            timestamps: self.timestamps.iter().map(|t| t + ticks).collect(),
            duration_ticks: duration,
            channel: self.channel,
        })
    }
}

pub(crate) fn ns_to_ticks(ns: f64, resolution_ps: u64) -> i64 {
    (ns * 1e3 / resolution_ps as f64).round() as i64
}

pub(crate) fn seconds_to_ticks(seconds: f64, resolution_ps: u64) -> Result<u64> {
    if resolution_ps == 0 {
        return Err(Error::param("resolution_ps", "must be > 0"));
    }
    let ticks = (seconds * 1e12 / resolution_ps as f64).round();
    if !ticks.is_finite() || ticks < 0.0 || ticks >= u64::MAX as f64 {
        return Err(Error::Overflow(format!(
            "{seconds} s does not fit in 64-bit ticks of {resolution_ps} ps"
        )));
    }
    Ok(ticks as u64)
}

/// Knobs of the emission simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub resolution_ps: u64,
    /// Length of the independently seeded segments. Part of the seed
    /// derivation: changing it changes the realisation.
    pub segment_s: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            resolution_ps: DEFAULT_RESOLUTION_PS,
            segment_s: 1.0,
        }
    }
}

/// Simulates the collected emission of one molecule for `duration_s`.
pub fn simulate_emission(params: &EmitterParams, duration_s: f64, seed: u64) -> Result<PhotonStream> {
    simulate_emission_with(params, duration_s, seed, &SimulationOptions::default())
}

pub fn simulate_emission_with(
    params: &EmitterParams,
    duration_s: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<PhotonStream> {
    let plan = SegmentPlan::new(params, duration_s, options)?;
    let segments: Vec<Vec<u64>> = (0..plan.n_segments)
        .into_par_iter()
        .map(|k| plan.run_segment(params, seed, k))
        .collect();
    Ok(plan.assemble(segments))
}

/// Same realisation as [`simulate_emission_with`], computed on the calling
/// thread only.
pub fn simulate_emission_sequential(
    params: &EmitterParams,
    duration_s: f64,
    seed: u64,
    options: &SimulationOptions,
) -> Result<PhotonStream> {
    let plan = SegmentPlan::new(params, duration_s, options)?;
    let segments = (0..plan.n_segments)
        .map(|k| plan.run_segment(params, seed, k))
        .collect();
    Ok(plan.assemble(segments))
}

struct SegmentPlan {
    resolution_ps: u64,
    duration_ticks: u64,
    segment_ticks: u64,
    n_segments: u64,
}

impl SegmentPlan {
    fn new(params: &EmitterParams, duration_s: f64, options: &SimulationOptions) -> Result<Self> {
        params.validate()?;
        check_positive("duration_s", duration_s)?;
        check_positive("segment_s", options.segment_s)?;
        let duration_ticks = seconds_to_ticks(duration_s, options.resolution_ps)?;
        if duration_ticks == 0 {
            return Err(Error::param("duration_s", "shorter than one tick"));
        }
        let segment_ticks = seconds_to_ticks(options.segment_s, options.resolution_ps)?.max(1);
        Ok(SegmentPlan {
            resolution_ps: options.resolution_ps,
            duration_ticks,
            segment_ticks,
            n_segments: duration_ticks.div_ceil(segment_ticks),
        })
    }

    fn bounds(&self, k: u64) -> (u64, u64) {
        let start = k * self.segment_ticks;
        (start, (start + self.segment_ticks).min(self.duration_ticks))
    }

    fn run_segment(&self, params: &EmitterParams, seed: u64, k: u64) -> Vec<u64> {
        let mut rng = rng::substream(seed, streams::SEGMENT_BASE + k);
        let (start, end) = self.bounds(k);
        let tick_ns = self.resolution_ps as f64 * 1e-3;
        let seg = Segment {
            start_ns: start as f64 * tick_ns,
            len_ns: (end - start) as f64 * tick_ns,
        };
        let times_ns = match params.pump {
            PumpMode::Cw { pump_rate_per_ns } => {
                if params.pump_drift.is_empty() {
                    cw_skip_ahead(params, pump_rate_per_ns, &seg, &mut rng)
                } else {
                    cw_step_by_step(params, pump_rate_per_ns, &seg, &mut rng)
                }
            }
            PumpMode::Pulsed { rep_rate_mhz, p_exc } => pulsed(params, rep_rate_mhz, p_exc, &seg, &mut rng),
        };
        times_ns
            .into_iter()
            .map(|t| (start + (t / tick_ns) as u64).min(end.saturating_sub(1).max(start)))
            .collect()
    }

    fn assemble(&self, segments: Vec<Vec<u64>>) -> PhotonStream {
        let total = segments.iter().map(Vec::len).sum();
        let mut ticks = Vec::with_capacity(total);
        for s in segments {
            ticks.extend(s);
        }
        PhotonStream::from_sorted_unchecked(self.resolution_ps, self.duration_ticks, ticks)
    }
}

/// Segment window in ns; `start_ns` is absolute and only used for drift and
/// pulse phase.
struct Segment {
    start_ns: f64,
    len_ns: f64,
}

#[derive(Clone, Copy)]
enum Level {
    Ground,
    Excited,
    Triplet,
}

/// Sum of `n` i.i.d. exponentials of the given rate.
fn erlang(rng: &mut ChaCha8Rng, n: u64, rate: f64) -> f64 {
    if n <= 16 {
        (0..n).map(|_| exponential(rng, rate)).sum()
    } else {
        Gamma::new(n as f64, 1.0 / rate)
            .expect("positive shape and scale")
            .sample(rng)
    }
}

/// Draws the level occupied at a random instant of the stationary process.
fn stationary_level(rng: &mut ChaCha8Rng, pump: f64, tau: f64, isc: f64, tau_t: f64) -> Level {
    let wg = 1.0 / pump;
    let we = tau;
    let wt = isc * tau_t;
    let u = rng.random::<f64>() * (wg + we + wt);
    if u < wg {
        Level::Ground
    } else if u < wg + we {
        Level::Excited
    } else {
        Level::Triplet
    }
}

/// Exact CTMC sampling for a constant pump, jumping over runs of
/// excitation cycles that end without a collected photon or triplet
/// crossing. Each cycle is an independent excitation wait plus decay, so a
/// geometric number of cycles sums to two Erlang variates.
fn cw_skip_ahead(params: &EmitterParams, pump_rate: f64, seg: &Segment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pump = params.effective_pump_rate(pump_rate);
    let decay = 1.0 / params.tau_excited_ns;
    let p_photon = params.photon_yield();
    let p_triplet = params.isc_yield;
    let tau_t = params.tau_triplet_us * 1e3;
    let p_stop = p_photon + p_triplet;
    let mut out = Vec::with_capacity(expected_count(params, seg.len_ns));
    if pump <= 0.0 || p_stop <= 0.0 {
        return out;
    }
    let mut t = 0.0;
    let mut level = stationary_level(rng, pump, params.tau_excited_ns, p_triplet, tau_t);
    while t < seg.len_ns {
        match level {
            Level::Triplet => {
                t += exponential(rng, 1.0 / tau_t);
                level = Level::Ground;
            }
            Level::Excited => {
                t += exponential(rng, decay);
                if t >= seg.len_ns {
                    break;
                }
                let u = rng.random::<f64>();
                level = if u < p_photon {
                    out.push(t);
                    Level::Ground
                } else if u < p_stop {
                    Level::Triplet
                } else {
                    Level::Ground
                };
            }
            Level::Ground => {
                let n = geometric(rng, p_stop);
                t += erlang(rng, n, pump) + erlang(rng, n, decay);
                if t >= seg.len_ns {
                    break;
                }
                if rng.random::<f64>() * p_stop < p_photon {
                    out.push(t);
                } else {
                    level = Level::Triplet;
                }
            }
        }
    }
    out
}

/// Event-by-event CTMC with a time-dependent pump, sampled by thinning a
/// bounding Poisson process.
fn cw_step_by_step(params: &EmitterParams, pump_rate: f64, seg: &Segment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let max_factor = params
        .pump_drift
        .iter()
        .map(|k| k.factor)
        .fold(0.0_f64, f64::max);
    let bound = pump_rate * max_factor;
    let decay = 1.0 / params.tau_excited_ns;
    let p_rad = params.quantum_yield * (1.0 - params.isc_yield);
    let tau_t = params.tau_triplet_us * 1e3;
    let mut out = Vec::with_capacity(expected_count(params, seg.len_ns));
    if bound <= 0.0 {
        return out;
    }
    let pump_at = |t: f64| {
        let p = pump_rate * params.drift_factor((seg.start_ns + t) * 1e-9);
        params.effective_pump_rate(p)
    };
    let mut t = 0.0;
    let mut level = stationary_level(rng, pump_at(0.0).max(f64::MIN_POSITIVE), params.tau_excited_ns, params.isc_yield, tau_t);
    while t < seg.len_ns {
        match level {
            Level::Ground => {
                t += exponential(rng, bound);
                if rng.random::<f64>() * bound < pump_at(t) {
                    level = Level::Excited;
                }
            }
            Level::Excited => {
                t += exponential(rng, decay);
                if t >= seg.len_ns {
                    break;
                }
                let u = rng.random::<f64>();
                if u < p_rad {
                    if rng.random::<f64>() < params.collection_efficiency {
                        out.push(t);
                    }
                    level = Level::Ground;
                } else if u < p_rad + params.isc_yield {
                    level = Level::Triplet;
                } else {
                    level = Level::Ground;
                }
            }
            Level::Triplet => {
                t += exponential(rng, 1.0 / tau_t);
                level = Level::Ground;
            }
        }
    }
    out
}

/// Delta-pulse excitation on the absolute pulse grid `k / rep_rate`.
fn pulsed(params: &EmitterParams, rep_rate_mhz: f64, p_exc: f64, seg: &Segment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period_ns = 1e3 / rep_rate_mhz;
    let decay = 1.0 / params.tau_excited_ns;
    let p_photon = params.photon_yield();
    let p_stop = p_photon + params.isc_yield;
    let tau_t = params.tau_triplet_us * 1e3;
    let drift = !params.pump_drift.is_empty();
    let mut out = Vec::with_capacity(expected_count(params, seg.len_ns));
    let first = (seg.start_ns / period_ns).ceil() as u64;
    let mut busy_until = f64::NEG_INFINITY;
    let mut k = first;
    loop {
        let t = k as f64 * period_ns - seg.start_ns;
        if t >= seg.len_ns {
            break;
        }
        k += 1;
        if t < busy_until {
            continue;
        }
        let p = if drift {
            (p_exc * params.drift_factor((seg.start_ns + t) * 1e-9)).min(1.0)
        } else {
            p_exc
        };
        if p < 1.0 && rng.random::<f64>() >= p {
            continue;
        }
        let emit_at = t + exponential(rng, decay);
        busy_until = emit_at;
        let u = rng.random::<f64>();
        if u < p_photon {
            if emit_at < seg.len_ns {
                out.push(emit_at);
            }
        } else if u < p_stop {
            busy_until = emit_at + exponential(rng, 1.0 / tau_t);
        }
    }
    out
}

fn expected_count(params: &EmitterParams, len_ns: f64) -> usize {
    let n = params.steady_state_rate() * len_ns * 1e-9;
    (n * 1.05 + 16.0).min(1e9) as usize
}

/// Keeps each event independently with probability `eta`.
pub fn thin(stream: &PhotonStream, eta: f64, seed: u64) -> Result<PhotonStream> {
    check_fraction("eta", eta)?;
    let mut rng = rng::substream(seed, streams::THIN);
    Ok(thin_with(stream, eta, &mut rng))
}

pub(crate) fn thin_with<R: Rng>(stream: &PhotonStream, eta: f64, rng: &mut R) -> PhotonStream {
    let kept = if eta >= 1.0 {
        stream.timestamps.clone()
    } else {
        stream
            .timestamps
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < eta)
            .collect()
    };
    PhotonStream {
        timestamps: kept,
        ..stream.clone_meta()
    }
}

impl PhotonStream {
    fn clone_meta(&self) -> PhotonStream {
        PhotonStream {
            resolution_ps: self.resolution_ps,
            timestamps: Vec::new(),
            duration_ticks: self.duration_ticks,
            channel: self.channel,
        }
    }
}

/// Sorted union; on equal ticks events of `a` come first.
pub fn merge(a: &PhotonStream, b: &PhotonStream) -> Result<PhotonStream> {
    if a.resolution_ps != b.resolution_ps {
        return Err(Error::ResolutionMismatch(a.resolution_ps, b.resolution_ps));
    }
    let (x, y) = (&a.timestamps, &b.timestamps);
    let mut out = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() && j < y.len() {
        if y[j] < x[i] {
            out.push(y[j]);
            j += 1;
        } else {
            out.push(x[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&x[i..]);
    out.extend_from_slice(&y[j..]);
    Ok(PhotonStream {
        resolution_ps: a.resolution_ps,
        timestamps: out,
        duration_ticks: a.duration_ticks.max(b.duration_ticks),
        channel: if a.channel == b.channel { a.channel } else { None },
    })
}

/// Event counts in consecutive windows of `dt_s`; a trailing partial window
/// is dropped.
pub fn window_counts(stream: &PhotonStream, dt_s: f64) -> Result<Vec<u64>> {
    check_positive("dt", dt_s)?;
    let width = seconds_to_ticks(dt_s, stream.resolution_ps)?;
    if width == 0 {
        return Err(Error::param("dt", "shorter than one tick"));
    }
    let n = stream.duration_ticks / width;
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "window of {dt_s} s exceeds stream duration of {} s",
            stream.duration_s()
        )));
    }
    let mut counts = vec![0u64; n as usize];
    for &t in &stream.timestamps {
        let k = t / width;
        if k >= n {
            break;
        }
        counts[k as usize] += 1;
    }
    Ok(counts)
}

/// Outcome of comparing measured photon-number fluctuations with the
/// binomial-thinning prediction `η²(Δn)² + η(1−η)⟨n⟩/Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub window_s: f64,
    pub n_windows: usize,
    pub mean_measured_flux: f64,
    pub var_measured_flux: f64,
    pub predicted_var: f64,
    /// Standard deviation of `var_measured_flux − predicted_var` under the
    /// thinning model.
    pub predicted_var_stderr: f64,
    pub eta_used: f64,
    pub mean_emitted_flux: f64,
    pub var_emitted_flux: f64,
    pub z_score: f64,
}

pub const MIN_VARIANCE_WINDOWS: usize = 100;

pub fn variance_check(emitted: &PhotonStream, eta: f64, dt_s: f64, seed: u64) -> Result<VarianceReport> {
    check_fraction("eta", eta)?;
    let measured = thin(emitted, eta, seed)?;
    let n_counts = window_counts(emitted, dt_s)?;
    let m_counts = window_counts(&measured, dt_s)?;
    let k = n_counts.len();
    if k < MIN_VARIANCE_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "{k} windows of {dt_s} s; at least {MIN_VARIANCE_WINDOWS} required"
        )));
    }
    let (mean_n, var_n) = mean_var(&n_counts);
    let (mean_m, var_m) = mean_var(&m_counts);
    let pq = eta * (1.0 - eta);
    // all in counts per window
    let predicted = eta * eta * var_n + pq * mean_n;
    let sigma_eps2 = pq * mean_n;
    let kf = k as f64;
    let mu4 = if sigma_eps2 > 0.0 {
        sigma_eps2 * sigma_eps2 * (3.0 + (1.0 - 6.0 * pq) / sigma_eps2)
    } else {
        0.0
    };
    let var_s_eps = ((mu4 - sigma_eps2 * sigma_eps2 * (kf - 3.0) / (kf - 1.0)) / kf).max(0.0);
    let var_cross = 4.0 * eta * eta * var_n * sigma_eps2 / (kf - 1.0);
    let var_mean_term = pq * pq * var_n / kf;
    let stderr = (var_s_eps + var_cross + var_mean_term).sqrt();
    let diff = var_m - predicted;
    let z = if stderr > 0.0 {
        diff / stderr
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    let to_flux = 1.0 / dt_s;
    let to_flux2 = to_flux * to_flux;
    Ok(VarianceReport {
        window_s: dt_s,
        n_windows: k,
        mean_measured_flux: mean_m * to_flux,
        var_measured_flux: var_m * to_flux2,
        predicted_var: predicted * to_flux2,
        predicted_var_stderr: stderr * to_flux2,
        eta_used: eta,
        mean_emitted_flux: mean_n * to_flux,
        var_emitted_flux: var_n * to_flux2,
        z_score: z,
    })
}

/// Sample mean and unbiased variance.
pub(crate) fn mean_var(counts: &[u64]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    let ss = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>();
    (mean, if n > 1.0 { ss / (n - 1.0) } else { 0.0 })
}

/// Homogeneous Poisson stream of `rate` events/s (used for dark counts and as
/// a coherent-light reference).
pub fn poisson_stream(rate: f64, duration_s: f64, resolution_ps: u64, seed: u64) -> Result<PhotonStream> {
    let duration_ticks = seconds_to_ticks(duration_s, resolution_ps)?;
    let mut rng = rng::substream(seed, 0);
    Ok(poisson_stream_with(rate, duration_ticks, resolution_ps, &mut rng))
}

/// Uniform order statistics given a Poisson total.
pub(crate) fn poisson_stream_with<R: Rng>(rate: f64, duration_ticks: u64, resolution_ps: u64, rng: &mut R) -> PhotonStream {
    let duration_s = duration_ticks as f64 * resolution_ps as f64 * 1e-12;
    let mean = rate * duration_s;
    let n = if mean > 0.0 {
        rand_distr::Poisson::new(mean).expect("finite mean").sample(rng) as usize
    } else {
        0
    };
    let mut ticks: Vec<u64> = (0..n)
        .map(|_| ((rng.random::<f64>() * duration_ticks as f64) as u64).min(duration_ticks))
        .collect();
    ticks.sort_unstable();
    PhotonStream::from_sorted_unchecked(resolution_ps, duration_ticks, ticks)
}

/// Evenly spaced events at `rate`, first at tick 0.
pub fn equispaced_stream(rate: f64, duration_s: f64, resolution_ps: u64) -> Result<PhotonStream> {
    check_positive("rate", rate)?;
    let duration_ticks = seconds_to_ticks(duration_s, resolution_ps)?;
    let period = 1e12 / rate / resolution_ps as f64;
    let n = (duration_ticks as f64 / period).ceil() as u64;
    let ticks = (0..n)
        .map(|k| (k as f64 * period).round() as u64)
        .filter(|&t| t < duration_ticks)
        .collect();
    Ok(PhotonStream::from_sorted_unchecked(resolution_ps, duration_ticks, ticks))
}
