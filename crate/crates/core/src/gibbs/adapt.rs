//! Adaptive truncation of the shared and specific column counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::logistic;
use crate::model::{Hyperparameters, ModelState, SLAB_SCALE};
use crate::priors::{gate_linear, sample_inverse_gamma, sample_stick};

/// What the truncation rule asks for, given per-column activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncationAction {
    Keep,
    Grow,
    /// Keep the first `keep` columns.
    Shrink { keep: usize },
}

/// Grow when every column is active and the cap allows it; otherwise drop
/// trailing inactive columns after the last active one, keeping one buffer.
pub fn truncation_rule(active: &[bool], cap: usize) -> TruncationAction {
    let len = active.len();
    if len > 0 && active.iter().all(|&a| a) {
        return if len < cap { TruncationAction::Grow } else { TruncationAction::Keep };
    }
    let keep = active.iter().rposition(|&a| a).map_or(1, |last| last + 2);
    if keep < len {
        TruncationAction::Shrink { keep }
    } else {
        TruncationAction::Keep
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptCounts {
    pub shared_grown: u64,
    pub shared_shrunk: u64,
    pub specific_grown: u64,
    pub specific_shrunk: u64,
}

pub fn shared_activity(state: &ModelState) -> Vec<bool> {
    (0..state.d()).map(|h| state.is_shared_active(h)).collect()
}

pub fn specific_activity(state: &ModelState) -> Vec<bool> {
    (0..state.k())
        .map(|h| state.tau_phi[h] == 1 && state.psi.column(h).iter().any(|&v| v == 1))
        .collect()
}

fn remove_trailing_columns(m: &DMatrix<f64>, keep: usize) -> DMatrix<f64> {
    m.columns(0, keep).into_owned()
}

/// Appends one shared column drawn from the slab prior.
pub fn grow_shared<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut R) {
    let (n, p, d) = (state.n(), state.p(), state.d());
    for z in state.cusp_indicator_eta.iter_mut() {
        if *z == d {
            *z = d + 1;
        }
    }
    state.stick_v_eta.push(sample_stick(1.0, hyper.alpha_eta, rng));
    state.cusp_indicator_eta.push(d + 1);
    state.tau_eta.push(SLAB_SCALE);
    let zeta = sample_inverse_gamma(hyper.a_lambda, hyper.b_lambda, rng);
    state.zeta_lambda.push(zeta);
    let col = DVector::from_fn(p, |_, _| zeta.sqrt() * rng.sample::<f64, _>(StandardNormal));
    state.lambda = state.lambda.clone().insert_column(d, 0.0);
    state.lambda.set_column(d, &col);
    let eta_col = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    state.eta = state.eta.clone().insert_column(d, 0.0);
    state.eta.set_column(d, &eta_col);
}

pub fn shrink_shared(state: &mut ModelState, keep: usize) {
    state.lambda = remove_trailing_columns(&state.lambda, keep);
    state.eta = remove_trailing_columns(&state.eta, keep);
    state.zeta_lambda.truncate(keep);
    state.tau_eta.truncate(keep);
    state.stick_v_eta.truncate(keep);
    state.cusp_indicator_eta.truncate(keep);
    for z in state.cusp_indicator_eta.iter_mut() {
        *z = (*z).min(keep);
    }
}

/// Appends one active specific column with prior loadings, gates and factors.
pub fn grow_specific<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    rng: &mut R,
) {
    let (n, p, k) = (state.n(), state.p(), state.k());
    for z in state.cusp_indicator_phi.iter_mut() {
        if *z == k {
            *z = k + 1;
        }
    }
    state.stick_v_phi.push(sample_stick(1.0, hyper.alpha_phi, rng));
    state.cusp_indicator_phi.push(k + 1);
    state.tau_phi.push(1);
    let zeta = sample_inverse_gamma(hyper.a_gamma, hyper.b_gamma, rng);
    state.zeta_gamma.push(zeta);
    let col = DVector::from_fn(p, |_, _| zeta.sqrt() * rng.sample::<f64, _>(StandardNormal));
    state.gamma = state.gamma.clone().insert_column(k, 0.0);
    state.gamma.set_column(k, &col);

    let beta_sd = hyper.beta_prior_variance(n).sqrt();
    let beta_col = DVector::from_fn(state.beta.nrows(), |_, _| beta_sd * rng.sample::<f64, _>(StandardNormal));
    state.beta = state.beta.clone().insert_column(k, 0.0);
    state.beta.set_column(k, &beta_col);
    state.psi = state.psi.clone().insert_column(k, 0);
    for i in 0..n {
        let prob = logistic(gate_linear(design, &state.beta, i, k));
        state.psi[(i, k)] = u8::from(rng.random::<f64>() < prob);
    }
    let phi_col = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    state.phi_tilde = state.phi_tilde.clone().insert_column(k, 0.0);
    state.phi_tilde.set_column(k, &phi_col);
}

pub fn shrink_specific(state: &mut ModelState, keep: usize) {
    state.gamma = remove_trailing_columns(&state.gamma, keep);
    state.phi_tilde = remove_trailing_columns(&state.phi_tilde, keep);
    state.beta = remove_trailing_columns(&state.beta, keep);
    state.psi = state.psi.columns(0, keep).into_owned();
    state.zeta_gamma.truncate(keep);
    state.tau_phi.truncate(keep);
    state.stick_v_phi.truncate(keep);
    state.cusp_indicator_phi.truncate(keep);
    for z in state.cusp_indicator_phi.iter_mut() {
        *z = (*z).min(keep);
    }
}

/// Result of one adaptation opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptOutcome {
    pub attempted: bool,
    pub shared: TruncationAction,
    pub specific: TruncationAction,
}

/// With probability `exp(-a0 - a1 t)`, applies [`truncation_rule`] to both parts.
pub fn adapt_truncation<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    iteration: usize,
    rng: &mut R,
) -> AdaptOutcome {
    let u: f64 = rng.random();
    if u >= hyper.adapt_schedule.probability(iteration) {
        return AdaptOutcome { attempted: false, shared: TruncationAction::Keep, specific: TruncationAction::Keep };
    }
    apply_truncation_rule(state, hyper, design, rng)
}

/// The deterministic part of [`adapt_truncation`]; randomness only enters
/// through freshly drawn columns.
pub fn apply_truncation_rule<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    rng: &mut R,
) -> AdaptOutcome {
    let shared = truncation_rule(&shared_activity(state), hyper.d_max);
    match shared {
        TruncationAction::Grow => grow_shared(state, hyper, rng),
        TruncationAction::Shrink { keep } => shrink_shared(state, keep),
        TruncationAction::Keep => {}
    }
    let specific = truncation_rule(&specific_activity(state), hyper.k_max);
    match specific {
        TruncationAction::Grow => grow_specific(state, hyper, design, rng),
        TruncationAction::Shrink { keep } => shrink_specific(state, keep),
        TruncationAction::Keep => {}
    }
    AdaptOutcome { attempted: true, shared, specific }
}
