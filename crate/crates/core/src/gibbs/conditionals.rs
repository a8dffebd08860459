//! Conjugate full conditionals for factors, loadings and variances.
//!
//! Every update takes the current outcome matrix as `response`: the observed
//! data with imputed cells filled in, or the probit latents for binary data.
//! The `*_conditional` functions return the exact conditional moments so they
//! can be checked against brute-force oracles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ApafaError, Result};
use crate::linalg::{logistic, moments_from_precision, sample_from_precision};
use crate::model::{Hyperparameters, ModelState};
use crate::priors::{gate_linear, sample_inverse_gamma};

fn shared_precision(state: &ModelState) -> DMatrix<f64> {
    let d = state.d();
    let mut prec = DMatrix::identity(d, d);
    for a in 0..d {
        for b in a..d {
            let v: f64 = (0..state.p())
                .map(|j| state.lambda[(j, a)] * state.lambda[(j, b)] / state.sigma_diag[j])
                .sum();
            prec[(a, b)] += v;
            if a != b {
                prec[(b, a)] += v;
            }
        }
    }
    prec
}

/// Conditional means (`n × d`) and common covariance (`d × d`) of the shared factors.
pub fn eta_conditional(state: &ModelState, response: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, d) = (state.n(), state.d());
    let resid = response - state.effective_phi() * state.gamma.transpose();
    let prec = shared_precision(state);
    let mut means = DMatrix::zeros(n, d);
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let lin = linear_term(&state.lambda, &state.sigma_diag, &resid, i);
        let (m, c) = moments_from_precision(prec.clone(), &lin)
            .ok_or_else(|| ApafaError::numeric("eta", "factor precision not positive definite"))?;
        means.set_row(i, &m.transpose());
        cov = c;
    }
    if n == 0 {
        cov = moments_from_precision(prec, &DVector::zeros(d))
            .ok_or_else(|| ApafaError::numeric("eta", "factor precision not positive definite"))?
            .1;
    }
    Ok((means, cov))
}

fn linear_term(loadings: &DMatrix<f64>, sigma: &DVector<f64>, resid: &DMatrix<f64>, i: usize) -> DVector<f64> {
    DVector::from_fn(loadings.ncols(), |h, _| {
        (0..loadings.nrows()).map(|j| loadings[(j, h)] * resid[(i, j)] / sigma[j]).sum()
    })
}

/// Draws every `η_i` from `N(V ΛᵀΣ⁻¹ r_i, V)`, `V = (I + ΛᵀΣ⁻¹Λ)⁻¹`, `r_i = y_i - Γφ_i`.
pub fn update_eta<R: Rng + ?Sized>(state: &mut ModelState, response: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let n = state.n();
    let resid = response - state.effective_phi() * state.gamma.transpose();
    let prec = shared_precision(state);
    for i in 0..n {
        let lin = linear_term(&state.lambda, &state.sigma_diag, &resid, i);
        let draw = sample_from_precision(prec.clone(), &lin, rng)
            .ok_or_else(|| ApafaError::numeric("eta", "factor precision not positive definite"))?;
        state.eta.set_row(i, &draw.transpose());
    }
    Ok(())
}

/// Collapsed conditional of the gate `ψ_ih` with `φ̃_ih` integrated out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConditional {
    /// `P(ψ_ih = 1 | rest)`.
    pub prob_on: f64,
    /// Mean and variance of `φ̃_ih` given `ψ_ih = 1`.
    pub mean_on: f64,
    pub var_on: f64,
}

/// Per-unit evidence of one specific column: precision term `a = γᵀΣ⁻¹γ`
/// and projection `b = γᵀΣ⁻¹r` of the residual `r` that excludes the column.
pub(crate) fn column_evidence(gamma: &DMatrix<f64>, sigma: &DVector<f64>, h: usize, r: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for (j, &rj) in r.iter().enumerate() {
        let g = gamma[(j, h)];
        a += g * g / sigma[j];
        b += g * rj / sigma[j];
    }
    (a, b)
}

/// `log N(r; 0, Σ + γγᵀ) - log N(r; 0, Σ)` via the rank-one identities.
pub(crate) fn slab_log_ratio(a: f64, b: f64) -> f64 {
    -0.5 * (1.0 + a).ln() + 0.5 * b * b / (1.0 + a)
}

/// The collapsed gate conditional for unit `i`, column `h` (which must be globally active).
pub fn gate_conditional(
    state: &ModelState,
    response: &DMatrix<f64>,
    design: &DMatrix<f64>,
    i: usize,
    h: usize,
) -> GateConditional {
    let r = residual_without_column(state, response, i, h);
    let (a, b) = column_evidence(&state.gamma, &state.sigma_diag, h, &r);
    let lin = gate_linear(design, &state.beta, i, h);
    GateConditional {
        prob_on: logistic(lin + slab_log_ratio(a, b)),
        mean_on: b / (1.0 + a),
        var_on: 1.0 / (1.0 + a),
    }
}

fn residual_without_column(state: &ModelState, response: &DMatrix<f64>, i: usize, h: usize) -> Vec<f64> {
    let p = state.p();
    (0..p)
        .map(|j| {
            let mut m = 0.0;
            for l in 0..state.d() {
                m += state.lambda[(j, l)] * state.eta[(i, l)];
            }
            for l in 0..state.k() {
                if l != h {
                    m += state.gamma[(j, l)] * state.effective_gate(i, l) * state.phi_tilde[(i, l)];
                }
            }
            response[(i, j)] - m
        })
        .collect()
}

/// Joint update of gates and unscaled specific factors, one `(i, h)` site at a time.
///
/// For globally active columns `ψ_ih` is drawn with `φ̃_ih` integrated out and
/// `φ̃_ih` then from its conjugate normal; inactive columns redraw both from
/// their priors.
pub fn update_phi_and_psi<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    design: &DMatrix<f64>,
    rng: &mut R,
) {
    let (n, p, k) = (state.n(), state.p(), state.k());
    let mut resid = response - state.conditional_mean();
    let precision_terms: Vec<f64> = (0..k)
        .map(|h| (0..p).map(|j| state.gamma[(j, h)].powi(2) / state.sigma_diag[j]).sum())
        .collect();
    let mut r = vec![0.0; p];
    for i in 0..n {
        for h in 0..k {
            let lin = gate_linear(design, &state.beta, i, h);
            if state.tau_phi[h] == 0 {
                state.psi[(i, h)] = u8::from(rng.random::<f64>() < logistic(lin));
                state.phi_tilde[(i, h)] = rng.sample(StandardNormal);
                continue;
            }
            let old = f64::from(state.psi[(i, h)]) * state.phi_tilde[(i, h)];
            let mut b = 0.0;
            for j in 0..p {
                r[j] = resid[(i, j)] + state.gamma[(j, h)] * old;
                b += state.gamma[(j, h)] * r[j] / state.sigma_diag[j];
            }
            let a = precision_terms[h];
            let on = rng.random::<f64>() < logistic(lin + slab_log_ratio(a, b));
            let z: f64 = rng.sample(StandardNormal);
            let value = if on { b / (1.0 + a) + z / (1.0 + a).sqrt() } else { z };
            state.psi[(i, h)] = u8::from(on);
            state.phi_tilde[(i, h)] = value;
            let new = if on { value } else { 0.0 };
            for j in 0..p {
                resid[(i, j)] = r[j] - state.gamma[(j, h)] * new;
            }
        }
    }
}

fn row_update_moments(
    design: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    prior_var: &[f64],
    target: &DMatrix<f64>,
    j: usize,
    noise: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = design.ncols();
    let mut prec = gram / noise;
    for h in 0..m {
        prec[(h, h)] += 1.0 / prior_var[h];
    }
    let lin = DVector::from_fn(m, |h, _| {
        (0..design.nrows()).map(|i| design[(i, h)] * target[(i, j)]).sum::<f64>() / noise
    });
    (prec, lin)
}

fn shared_prior_var(state: &ModelState) -> Vec<f64> {
    state.tau_eta.iter().zip(&state.zeta_lambda).map(|(t, z)| t * z).collect()
}

/// Mean and covariance of row `j` of `Λ` given everything else.
pub fn lambda_row_conditional(
    state: &ModelState,
    response: &DMatrix<f64>,
    j: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let target = response - state.effective_phi() * state.gamma.transpose();
    let gram = state.eta.transpose() * &state.eta;
    let (prec, lin) = row_update_moments(&state.eta, &gram, &shared_prior_var(state), &target, j, state.sigma_diag[j]);
    moments_from_precision(prec, &lin).ok_or_else(|| ApafaError::numeric("lambda", format!("row {j} precision")))
}

/// Draws each row `λ_j ~ N(V_j σ_j⁻² Hᵀ r_j, V_j)`, `V_j = (diag(1/(τζ)) + σ_j⁻² HᵀH)⁻¹`.
pub fn update_lambda<R: Rng + ?Sized>(state: &mut ModelState, response: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let target = response - state.effective_phi() * state.gamma.transpose();
    let gram = state.eta.transpose() * &state.eta;
    let prior = shared_prior_var(state);
    for j in 0..state.p() {
        let (prec, lin) = row_update_moments(&state.eta, &gram, &prior, &target, j, state.sigma_diag[j]);
        let draw = sample_from_precision(prec, &lin, rng)
            .ok_or_else(|| ApafaError::numeric("lambda", format!("row {j} precision not positive definite")))?;
        state.lambda.set_row(j, &draw.transpose());
    }
    Ok(())
}

/// Mean and covariance of row `j` of `Γ` given everything else.
pub fn gamma_row_conditional(
    state: &ModelState,
    response: &DMatrix<f64>,
    j: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let phi = state.effective_phi();
    let target = response - &state.eta * state.lambda.transpose();
    let gram = phi.transpose() * &phi;
    let (prec, lin) = row_update_moments(&phi, &gram, &state.zeta_gamma, &target, j, state.sigma_diag[j]);
    moments_from_precision(prec, &lin).ok_or_else(|| ApafaError::numeric("gamma", format!("row {j} precision")))
}

/// Draws each row of `Γ` from its conjugate normal with design `Ψ ⊙ Φ̃` (effective gates).
pub fn update_gamma<R: Rng + ?Sized>(state: &mut ModelState, response: &DMatrix<f64>, rng: &mut R) -> Result<()> {
    let phi = state.effective_phi();
    let target = response - &state.eta * state.lambda.transpose();
    let gram = phi.transpose() * &phi;
    for j in 0..state.p() {
        let (prec, lin) = row_update_moments(&phi, &gram, &state.zeta_gamma, &target, j, state.sigma_diag[j]);
        let draw = sample_from_precision(prec, &lin, rng)
            .ok_or_else(|| ApafaError::numeric("gamma", format!("row {j} precision not positive definite")))?;
        state.gamma.set_row(j, &draw.transpose());
    }
    Ok(())
}

/// Inverse-gamma `(shape, rate)` of `σ²_j` given everything else.
pub fn sigma_conditional(state: &ModelState, response: &DMatrix<f64>, hyper: &Hyperparameters) -> Vec<(f64, f64)> {
    let resid = response - state.conditional_mean();
    let n = state.n() as f64;
    (0..state.p())
        .map(|j| {
            let ss: f64 = resid.column(j).iter().map(|r| r * r).sum();
            (hyper.a_sigma + 0.5 * n, hyper.b_sigma + 0.5 * ss)
        })
        .collect()
}

/// `σ²_j ~ IG(a_σ + n/2, b_σ + ½ Σ_i e²_ij)`.
pub fn update_sigma<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) {
    for (j, (shape, rate)) in sigma_conditional(state, response, hyper).into_iter().enumerate() {
        state.sigma_diag[j] = sample_inverse_gamma(shape, rate, rng);
    }
}

/// Inverse-gamma parameters of the shared and specific column scales.
pub fn zeta_conditionals(state: &ModelState, hyper: &Hyperparameters) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let half_p = 0.5 * state.p() as f64;
    let shared = (0..state.d())
        .map(|h| {
            let ss: f64 = state.lambda.column(h).iter().map(|v| v * v).sum();
            (hyper.a_lambda + half_p, hyper.b_lambda + 0.5 * ss / state.tau_eta[h])
        })
        .collect();
    let specific = (0..state.k())
        .map(|h| {
            let ss: f64 = state.gamma.column(h).iter().map(|v| v * v).sum();
            (hyper.a_gamma + half_p, hyper.b_gamma + 0.5 * ss)
        })
        .collect();
    (shared, specific)
}

/// Conjugate inverse-gamma updates of `ζ^λ` (scaled by `τ_h`) and `ζ^γ`.
pub fn update_zetas<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut R) {
    let (shared, specific) = zeta_conditionals(state, hyper);
    for (h, (shape, rate)) in shared.into_iter().enumerate() {
        state.zeta_lambda[h] = sample_inverse_gamma(shape, rate, rng);
    }
    for (h, (shape, rate)) in specific.into_iter().enumerate() {
        state.zeta_gamma[h] = sample_inverse_gamma(shape, rate, rng);
    }
}
