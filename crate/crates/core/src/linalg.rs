//! Small dense helpers shared by the conditionals and the diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(Q^{-1} b, Q^{-1})` given the precision `Q` and the linear term `b`.
///
/// Returns `None` when `Q` is not numerically positive definite.
pub(crate) fn sample_from_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Option<DVector<f64>> {
    let dim = linear.len();
    if dim == 0 {
        return Some(DVector::zeros(0));
    }
    let chol = Cholesky::new(precision)?;
    let mean = chol.solve(linear);
    let noise = standard_normal_vector(dim, rng);
    // L^T x = z gives x ~ N(0, Q^{-1})
    let shift = chol.l().transpose().solve_upper_triangular(&noise)?;
    Some(mean + shift)
}

/// Mean and covariance of the Gaussian with precision `Q` and linear term `b`.
pub(crate) fn moments_from_precision(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let dim = linear.len();
    if dim == 0 {
        return Some((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let chol: Cholesky<f64, Dyn> = Cholesky::new(precision)?;
    let mean = chol.solve(linear);
    let cov = chol.inverse();
    Some((mean, cov))
}

/// `log N(x; 0, cov)` for a dense covariance, via Cholesky.
pub(crate) fn gaussian_log_density(x: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let dim = x.len();
    if dim == 0 {
        return Some(0.0);
    }
    let chol = Cholesky::new(cov.clone())?;
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let white = l.solve_lower_triangular(x)?;
    let quad = white.norm_squared();
    Some(-0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log of a sum of exponentials.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_weights)`.
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let norm = log_sum_exp(log_weights);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, lw) in log_weights.iter().enumerate() {
        acc += (lw - norm).exp();
        if u < acc {
            return idx;
        }
    }
    // rounding: fall back to the last index with positive mass
    log_weights
        .iter()
        .rposition(|w| w.is_finite())
        .unwrap_or(log_weights.len() - 1)
}

/// Maximum absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
