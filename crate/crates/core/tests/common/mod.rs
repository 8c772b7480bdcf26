//! Independent closed-form oracles shared by the integration tests.
#![allow(dead_code)]

use photonbench::correlate::{Histogram, HistogramMode};
use photonbench::photophysics::{EmitterParams, PumpMode};
use statrs::function::erf::erfc;

/// Stationary three-level emitter autocorrelation, `g²(t) = 1 + Σ cᵢ e^(−λᵢ|t|)`,
/// from the (excited, triplet) rate equations started in the ground state.
#[derive(Debug, Clone, Copy)]
pub struct ThreeLevelG2 {
    pub coeffs: [f64; 2],
    pub rates: [f64; 2],
}

impl ThreeLevelG2 {
    pub fn new(e: &EmitterParams) -> Self {
        let PumpMode::Cw { pump_rate_per_ns } = e.pump else {
            panic!("CW emitter required");
        };
        let p = e.effective_pump_rate(pump_rate_per_ns);
        let k = 1.0 / e.tau_excited_ns;
        let kt = if e.isc_yield > 0.0 { 1.0 / (e.tau_triplet_us * 1e3) } else { 1.0 };
        // x' = M x + f for x = (E, T)
        let m = [[-p - k, -p], [e.isc_yield * k, -kt]];
        let f = [p, 0.0];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let x_inf = [
            -(inv[0][0] * f[0] + inv[0][1] * f[1]),
            -(inv[1][0] * f[0] + inv[1][1] * f[1]),
        ];
        let tr = m[0][0] + m[1][1];
        let disc = (tr * tr - 4.0 * det).sqrt();
        let mu = [(tr + disc) / 2.0, (tr - disc) / 2.0];
        // e^(Mt) = (e^(μ1 t)(M − μ2) − e^(μ2 t)(M − μ1)) / (μ1 − μ2)
        let row_e = |shift: f64| (m[0][0] - shift) * x_inf[0] + m[0][1] * x_inf[1];
        let c1 = -row_e(mu[1]) / ((mu[0] - mu[1]) * x_inf[0]);
        let c2 = row_e(mu[0]) / ((mu[0] - mu[1]) * x_inf[0]);
        ThreeLevelG2 {
            coeffs: [c1, c2],
            rates: [-mu[0], -mu[1]],
        }
    }

    pub fn at(&self, t_ns: f64) -> f64 {
        let at = t_ns.abs();
        1.0 + self.coeffs[0] * (-self.rates[0] * at).exp() + self.coeffs[1] * (-self.rates[1] * at).exp()
    }

    /// Convolved with a zero-mean Gaussian of standard deviation `sigma_ns`.
    pub fn jittered(&self, t_ns: f64, sigma_ns: f64) -> f64 {
        if sigma_ns == 0.0 {
            return self.at(t_ns);
        }
        1.0 + self.coeffs[0] * gauss_two_sided_exp(t_ns, self.rates[0], sigma_ns)
            + self.coeffs[1] * gauss_two_sided_exp(t_ns, self.rates[1], sigma_ns)
    }
}

/// `∫ e^(−λ|t−s|) N(s; 0, σ²) ds`.
pub fn gauss_two_sided_exp(t: f64, lambda: f64, sigma: f64) -> f64 {
    let at = t.abs();
    let pre = 0.5 * (0.5 * lambda * lambda * sigma * sigma).exp();
    if at > 12.0 * sigma + 20.0 * lambda * sigma * sigma {
        return 2.0 * pre * (-lambda * at).exp();
    }
    let s2 = sigma * std::f64::consts::SQRT_2;
    let ls2 = lambda * sigma * sigma;
    pre * ((-lambda * at).exp() * erfc((ls2 - at) / s2) + (lambda * at).exp() * erfc((ls2 + at) / s2))
}

/// Noise-free expectation of a two-sided start–stop histogram for a
/// stationary emitter split onto two detectors: the jittered `g²` times the
/// stop-arm survival `e^(−R|t|)`, integrated over each bin by Simpson's rule
/// and scaled so the far tail sits near `level` counts.
pub fn expected_start_stop(
    g2: &ThreeLevelG2,
    jitter_sigma_ns: f64,
    stop_rate: f64,
    bin_ns: f64,
    half_range_ns: f64,
    level: f64,
) -> Histogram {
    let n = (2.0 * half_range_ns / bin_ns).round() as usize;
    let t_min = -half_range_ns;
    let density = |t: f64| g2.jittered(t, jitter_sigma_ns) * (-stop_rate * t.abs() * 1e-9).exp();
    const SUB: usize = 16;
    let counts = (0..n)
        .map(|k| {
            let a = t_min + k as f64 * bin_ns;
            let h = bin_ns / SUB as f64;
            let mut s = density(a) + density(a + bin_ns);
            for j in 1..SUB {
                s += if j % 2 == 1 { 4.0 } else { 2.0 } * density(a + j as f64 * h);
            }
            let mean = s * h / 3.0 / bin_ns;
            (level * mean).round() as u64
        })
        .collect();
    Histogram {
        bin_width_ns: bin_ns,
        t_min_ns: t_min,
        t_max_ns: half_range_ns,
        counts,
        n_starts: 0,
        n_stops: 0,
        acquisition_duration_s: 1.0,
        mode: HistogramMode::StartStop,
    }
}

/// Jitter standard deviation of the difference of two independent detectors.
pub fn difference_sigma(fwhm_each_ns: f64) -> f64 {
    std::f64::consts::SQRT_2 * fwhm_each_ns / photonbench::detectors::FWHM_PER_SIGMA
}
