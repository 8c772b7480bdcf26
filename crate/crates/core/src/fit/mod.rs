//! Weighted least-squares estimation of the antibunching and saturation
//! models.

mod lm;

use serde::{Deserialize, Serialize};

use crate::correlate::Histogram;
use crate::error::{Error, Result};
use crate::photophysics::{G2Params, Quench};

pub use lm::{MAX_ITERATIONS, STEP_TOLERANCE};

/// A value with its standard uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Estimate { value, sigma }
    }
}

/// `g²(0) = 1 − b`; the standard uncertainty carries over unchanged.
pub fn propagate_g2_zero(b: Estimate) -> Result<Estimate> {
    if !(b.sigma >= 0.0) {
        return Err(Error::param("sigma", "must be >= 0"));
    }
    Ok(Estimate::new(1.0 - b.value, b.sigma))
}

/// Parameter order inside the solver.
const A: usize = 0;
const B: usize = 1;
const T1: usize = 2;
const R: usize = 3;

const T1_FLOOR_NS: f64 = 1e-6;

/// `A·(1 − b·e^(−|t|/t1))·e^(−R·|t|)`; `t` in ns, `R` in 1/s.
struct G2Model;

impl lm::Model for G2Model {
    fn n_params(&self) -> usize {
        4
    }

    #[inline]
    fn value(&self, t: f64, p: &[f64]) -> f64 {
        let at = t.abs();
        p[A] * (1.0 - p[B] * (-at / p[T1]).exp()) * (-p[R] * at * 1e-9).exp()
    }

    #[inline]
    fn gradient(&self, t: f64, p: &[f64], out: &mut [f64]) {
        let at = t.abs();
        let dip = (-at / p[T1]).exp();
        let decay = (-p[R] * at * 1e-9).exp();
        let shape = 1.0 - p[B] * dip;
        out[A] = shape * decay;
        out[B] = -p[A] * dip * decay;
        out[T1] = -p[A] * p[B] * dip * (at / (p[T1] * p[T1])) * decay;
        out[R] = -p[A] * shape * decay * at * 1e-9;
    }

    fn scale_params(&self) -> &[usize] {
        &[A, T1]
    }

    fn project(&self, p: &mut [f64]) {
        p[A] = p[A].max(f64::MIN_POSITIVE);
        p[B] = p[B].clamp(0.0, 1.0);
        p[T1] = p[T1].max(T1_FLOOR_NS);
        p[R] = p[R].max(0.0);
    }
}

/// Value and analytic gradient of the g² model with amplitude, in solver
/// order `(A, b, t1, R)`. Exposed for Jacobian verification.
pub fn g2_model_with_gradient(t_ns: f64, amplitude: f64, p: &G2Params) -> (f64, [f64; 4]) {
    use lm::Model;
    let params = [amplitude, p.b, p.t1, p.rate_r];
    let mut g = [0.0; 4];
    G2Model.gradient(t_ns, &params, &mut g);
    (G2Model.value(t_ns, &params), g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2FitResult {
    pub params: G2Params,
    pub b_err: f64,
    pub t1_err: f64,
    pub rate_r_err: f64,
    pub g2_zero: Estimate,
    pub amplitude: Estimate,
    pub reduced_chi2: f64,
    /// Row-major, order `(A, b, t1, R)`.
    pub covariance: [[f64; 4]; 4],
    pub n_iterations: usize,
    pub converged: bool,
}

pub const MIN_NONEMPTY_BINS: usize = 20;

/// Fits the antibunching model to raw coincidence counts with Poisson
/// weights `1/max(counts, 1)`.
pub fn fit_g2(h: &Histogram, initial: Option<G2Params>) -> Result<G2FitResult> {
    h.validate()?;
    let ts = h.bin_centers();
    let ys: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let nonempty = h.counts.iter().filter(|&&c| c > 0).count();
    if nonempty < MIN_NONEMPTY_BINS {
        return Err(Error::InsufficientData(format!(
            "{nonempty} nonempty bins; at least {MIN_NONEMPTY_BINS} required"
        )));
    }
    if h.counts.iter().all(|&c| c == h.counts[0]) {
        return Err(Error::Degenerate("all histogram bins are equal".into()));
    }
    let ws: Vec<f64> = ys.iter().map(|&y| 1.0 / y.max(1.0)).collect();

    let start = match initial {
        Some(p) => {
            p.validate()?;
            let amp = initial_amplitude(&ts, &ys, p.rate_r);
            [amp, p.b, p.t1, p.rate_r]
        }
        None => initial_g2_guess(&ts, &ys, h.bin_width_ns),
    };
    let span = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if span < 5.0 * start[T1] {
        return Err(Error::InsufficientData(format!(
            "histogram spans {span} ns, less than 5 dip time constants ({} ns)",
            start[T1]
        )));
    }

    let out = lm::minimize(&G2Model, &ts, &ys, &ws, &start);
    let p = &out.params;
    let cov = &out.covariance;
    let mut covariance = [[0.0; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = cov[(i, j)];
        }
    }
    let err = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let dof = ys.len().saturating_sub(4).max(1) as f64;
    let params = G2Params {
        b: p[B],
        t1: p[T1],
        rate_r: p[R],
    };
    let b_err = err(B);
    let reduced_chi2 = out.chi2 / dof;
    let converged = out.converged
        && reduced_chi2.is_finite()
        && (0..4).all(|i| err(i).is_finite());
    Ok(G2FitResult {
        params,
        b_err,
        t1_err: err(T1),
        rate_r_err: err(R),
        g2_zero: propagate_g2_zero(Estimate::new(p[B], b_err))?,
        amplitude: Estimate::new(p[A], err(A)),
        reduced_chi2,
        covariance,
        n_iterations: out.iterations,
        converged,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn initial_amplitude(ts: &[f64], ys: &[f64], rate_r: f64) -> f64 {
    let span = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let tail: Vec<f64> = ts
        .iter()
        .zip(ys)
        .filter(|(t, _)| t.abs() >= 0.5 * span)
        .map(|(t, y)| y * (rate_r * t.abs() * 1e-9).exp())
        .collect();
    median(tail).max(1.0)
}

/// Tail median for the amplitude, tail log-slope for `R`, the central
/// minimum for `b` and the half-depth crossing for `t1`.
fn initial_g2_guess(ts: &[f64], ys: &[f64], bin_width: f64) -> [f64; 4] {
    let span = ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));

    // weighted regression of ln(y) on |t| over the outer half
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, &y) in ts.iter().zip(ys) {
        if t.abs() >= 0.5 * span && y > 0.0 {
            let (x, ly) = (t.abs(), y.ln());
            sw += y;
            sx += y * x;
            sy += y * ly;
            sxx += y * x * x;
            sxy += y * x * ly;
        }
    }
    let denom = sw * sxx - sx * sx;
    let slope = if denom > 0.0 { (sw * sxy - sx * sy) / denom } else { 0.0 };
    let rate_r = (-slope * 1e9).max(0.0);
    let amp = initial_amplitude(ts, ys, rate_r);

    let norm: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| (t.abs(), y / (amp * (-rate_r * t.abs() * 1e-9).exp())))
        .collect();
    let central = (0.05 * span).max(3.0 * bin_width);
    let min_norm = norm
        .iter()
        .filter(|(at, _)| *at <= central)
        .map(|&(_, v)| v)
        .fold(f64::INFINITY, f64::min);
    let min_norm = if min_norm.is_finite() { min_norm } else { 1.0 };
    let b = (1.0 - min_norm).clamp(0.05, 0.999);

    let mut by_lag = norm.clone();
    by_lag.sort_by(|x, y| x.0.total_cmp(&y.0));
    let half = 1.0 - 0.5 * b;
    let t_half = by_lag
        .iter()
        .find(|&&(_, v)| v >= half)
        .map(|&(at, _)| at)
        .unwrap_or(bin_width);
    let t1 = (t_half / std::f64::consts::LN_2).max(0.5 * bin_width).max(T1_FLOOR_NS);
    [amp, b, t1, rate_r]
}

/// One point of a saturation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub power_uw: f64,
    pub rate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchEstimate {
    pub p_q: Estimate,
    pub exponent: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFitResult {
    pub r_inf: Estimate,
    pub p_sat: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quench: Option<QuenchEstimate>,
    pub reduced_chi2: f64,
    /// Row-major, order `(r_inf, p_sat[, p_q, m])`.
    pub covariance: Vec<Vec<f64>>,
    pub n_iterations: usize,
    pub converged: bool,
}

impl SaturationFitResult {
    pub fn quench(&self) -> Option<Quench> {
        self.quench.as_ref().map(|q| Quench {
            p_q: q.p_q.value,
            exponent: q.exponent.value,
        })
    }
}

struct SaturationModel {
    quench: bool,
}

impl lm::Model for SaturationModel {
    fn n_params(&self) -> usize {
        if self.quench {
            4
        } else {
            2
        }
    }

    fn value(&self, x: f64, p: &[f64]) -> f64 {
        let base = p[0] * x / (x + p[1]);
        if self.quench {
            base / (1.0 + (x / p[2]).powf(p[3]))
        } else {
            base
        }
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let s = x / (x + p[1]);
        let ds = -x / ((x + p[1]) * (x + p[1]));
        if !self.quench {
            out[0] = s;
            out[1] = p[0] * ds;
            return;
        }
        let u = (x / p[2]).powf(p[3]);
        let q = 1.0 / (1.0 + u);
        let dq_du = -q * q;
        out[0] = s * q;
        out[1] = p[0] * ds * q;
        // du/dp_q = -m·u/p_q ; du/dm = u·ln(x/p_q)
        out[2] = p[0] * s * dq_du * (-p[3] * u / p[2]);
        out[3] = if u > 0.0 {
            p[0] * s * dq_du * u * (x / p[2]).ln()
        } else {
            0.0
        };
    }

    fn scale_params(&self) -> &[usize] {
        if self.quench {
            &[0, 1, 2]
        } else {
            &[0, 1]
        }
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].max(f64::MIN_POSITIVE);
        p[1] = p[1].max(1e-12);
        if self.quench {
            p[2] = p[2].max(1e-12);
            p[3] = p[3].clamp(0.05, 50.0);
        }
    }
}

pub const MIN_SATURATION_POINTS: usize = 4;
pub const MIN_SATURATION_POINTS_QUENCH: usize = 6;

/// Weighted fit of `r_inf·P/(P + P_sat)`, optionally with the
/// `1/(1 + (P/p_q)^m)` roll-off.
pub fn fit_saturation(points: &[SaturationPoint], with_quench: bool) -> Result<SaturationFitResult> {
    let needed = if with_quench {
        MIN_SATURATION_POINTS_QUENCH
    } else {
        MIN_SATURATION_POINTS
    };
    if points.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} saturation points; at least {needed} required",
            points.len()
        )));
    }
    for p in points {
        if !(p.power_uw > 0.0) {
            return Err(Error::param("power_uw", "saturation powers must be positive"));
        }
        if !(p.stderr > 0.0) {
            return Err(Error::param("stderr", "rate uncertainties must be positive"));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.power_uw).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.rate).collect();
    let ws: Vec<f64> = points.iter().map(|p| 1.0 / (p.stderr * p.stderr)).collect();

    let peak = points
        .iter()
        .max_by(|a, b| a.rate.total_cmp(&b.rate))
        .expect("nonempty");
    let rising: Vec<SaturationPoint> = if with_quench {
        points.iter().copied().filter(|p| p.power_uw <= peak.power_uw).collect()
    } else {
        points.to_vec()
    };
    let (r0, ps0) = lineweaver_burk(if rising.len() >= 3 { &rising } else { points })
        .unwrap_or((2.0 * peak.rate, peak.power_uw));
    let start: Vec<f64> = if with_quench {
        vec![r0, ps0, 3.0 * peak.power_uw, 2.0]
    } else {
        vec![r0, ps0]
    };

    let model = SaturationModel { quench: with_quench };
    let out = lm::minimize(&model, &xs, &ys, &ws, &start);
    let n = start.len();
    let err = |i: usize| out.covariance[(i, i)].max(0.0).sqrt();
    let dof = points.len().saturating_sub(n).max(1) as f64;
    let reduced_chi2 = out.chi2 / dof;
    let p = &out.params;
    let converged = out.converged
        && reduced_chi2.is_finite()
        && (0..n).all(|i| err(i).is_finite())
        && p[0] > 0.0
        && p[1] > 0.0;
    Ok(SaturationFitResult {
        r_inf: Estimate::new(p[0], err(0)),
        p_sat: Estimate::new(p[1], err(1)),
        quench: with_quench.then(|| QuenchEstimate {
            p_q: Estimate::new(p[2], err(2)),
            exponent: Estimate::new(p[3], err(3)),
        }),
        reduced_chi2,
        covariance: (0..n)
            .map(|i| (0..n).map(|j| out.covariance[(i, j)]).collect())
            .collect(),
        n_iterations: out.iterations,
        converged,
    })
}

/// Weighted linear fit of `1/r = 1/r_inf + (P_sat/r_inf)·(1/P)`.
fn lineweaver_burk(points: &[SaturationPoint]) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        if p.rate <= 0.0 {
            continue;
        }
        let x = 1.0 / p.power_uw;
        let y = 1.0 / p.rate;
        let w = (p.rate * p.rate / p.stderr).powi(2);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let denom = sw * sxx - sx * sx;
    if !(denom > 0.0) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / sw;
    if intercept > 0.0 && slope > 0.0 {
        Some((1.0 / intercept, slope / intercept))
    } else {
        None
    }
}
