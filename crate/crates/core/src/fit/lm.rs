//! Weighted Levenberg–Marquardt with Marquardt (diagonal) damping and
//! projection onto box bounds.

use nalgebra::{DMatrix, DVector};

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

pub(crate) trait Model {
    fn n_params(&self) -> usize;
    fn value(&self, x: f64, p: &[f64]) -> f64;
    /// Partial derivatives of `value` at `(x, p)`.
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]);
    /// Clamps `p` into the feasible box.
    fn project(&self, p: &mut [f64]);
    /// Indices of strictly positive scale parameters; a single step may
    /// shrink each of them by at most [`MAX_SHRINK`].
    fn scale_params(&self) -> &[usize] {
        &[]
    }
}

pub(crate) const MAX_SHRINK: f64 = 10.0;

/// Shortens `delta` along its direction so no scale parameter drops below
/// `1/MAX_SHRINK` of its current value.
fn limit_step<M: Model>(m: &M, p: &[f64], delta: &mut DVector<f64>) {
    let mut alpha = 1.0f64;
    for &i in m.scale_params() {
        let floor = p[i] / MAX_SHRINK;
        if p[i] + delta[i] < floor {
            alpha = alpha.min((floor - p[i]) / delta[i]);
        }
    }
    if alpha < 1.0 {
        *delta *= alpha;
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2<M: Model>(m: &M, xs: &[f64], ys: &[f64], ws: &[f64], p: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(ws)
        .map(|((&x, &y), &w)| {
            let r = y - m.value(x, p);
            w * r * r
        })
        .sum()
}

/// `JᵀWJ` and `JᵀW·r`.
fn normal_equations<M: Model>(m: &M, xs: &[f64], ys: &[f64], ws: &[f64], p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.n_params();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    let mut grad = vec![0.0; n];
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        m.gradient(x, p, &mut grad);
        let r = y - m.value(x, p);
        for i in 0..n {
            let wi = w * grad[i];
            g[i] += wi * r;
            for j in 0..=i {
                a[(i, j)] += wi * grad[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
    (a, g)
}

/// Solves `(A + λ·diag A)·δ = g` after symmetric diagonal scaling.
fn damped_step(a: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = a[(i, i)];
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)] * scale[i] * scale[j];
        }
        m[(i, i)] = m[(i, i)].max(f64::MIN_POSITIVE) * (1.0 + lambda);
        rhs[i] = g[i] * scale[i];
    }
    let y = match m.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => m.lu().solve(&rhs)?,
    };
    Some(DVector::from_iterator(n, (0..n).map(|i| y[i] * scale[i])))
}

/// Inverse of `JᵀWJ` with the same diagonal scaling used for the steps.
pub(crate) fn invert_information(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)].sqrt() } else { 1.0 })
        .collect();
    let mut m = a.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= scale[i] * scale[j];
        }
    }
    let inv = m
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| m.try_inverse())
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::INFINITY));
    let mut out = inv;
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    out
}

pub(crate) fn minimize<M: Model>(m: &M, xs: &[f64], ys: &[f64], ws: &[f64], initial: &[f64]) -> Outcome {
    let mut p = initial.to_vec();
    m.project(&mut p);
    let mut cost = chi2(m, xs, ys, ws, &p);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    let (mut a, mut g) = normal_equations(m, xs, ys, ws, &p);

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some(mut delta) = damped_step(&a, &g, lambda) else {
            break;
        };
        limit_step(m, &p, &mut delta);
        let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
        m.project(&mut trial);
        let trial_cost = chi2(m, xs, ys, ws, &trial);
        if trial_cost.is_finite() && trial_cost <= cost {
            let rel_step = p
                .iter()
                .zip(&trial)
                .map(|(&old, &new)| (new - old).abs() / old.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            p = trial;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            (a, g) = normal_equations(m, xs, ys, ws, &p);
            if rel_step < STEP_TOLERANCE || cost == 0.0 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    Outcome {
        covariance: invert_information(&a),
        params: p,
        chi2: cost,
        iterations,
        converged,
    }
}
