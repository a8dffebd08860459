//! Probit latents for binary outcomes and posterior-predictive imputation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{Dataset, ModelState};

use super::truncnorm::sample_sign_truncated;

/// Draws every `z_ij` from `N(mean_ij, σ²_j)` truncated to the side given by
/// `y_ij`; masked cells are left untruncated. The latents are stored in
/// `state.probit_z`.
pub fn update_probit_latents<R: Rng + ?Sized>(state: &mut ModelState, dataset: &Dataset, rng: &mut R) {
    let mean = state.conditional_mean();
    let (n, p) = (state.n(), state.p());
    let mut z = state.probit_z.take().unwrap_or_else(|| DMatrix::zeros(n, p));
    for i in 0..n {
        for j in 0..p {
            let sd = state.sigma_diag[j].sqrt();
            z[(i, j)] = if dataset.is_missing(i, j) {
                mean[(i, j)] + sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                sample_sign_truncated(mean[(i, j)], sd, dataset.y()[(i, j)] > 0.5, rng)
            };
        }
    }
    state.probit_z = Some(z);
}

/// Draws each masked cell from its posterior predictive at the current state
/// and writes it into `working` (the outcome matrix the other updates see).
///
/// Continuous outcomes get `N(λ_jᵀη_i + γ_jᵀφ_i, σ²_j)`; binary outcomes get a
/// fresh latent, stored in both `working` and `state.probit_z`, and return its
/// threshold `1(z > 0)`.
pub fn impute_missing<R: Rng + ?Sized>(
    state: &mut ModelState,
    dataset: &Dataset,
    cells: &[(usize, usize)],
    working: &mut DMatrix<f64>,
    rng: &mut R,
) -> Vec<f64> {
    if cells.is_empty() {
        return Vec::new();
    }
    let mean = state.conditional_mean();
    let binary = dataset.kind() == crate::model::OutcomeKind::Binary;
    cells
        .iter()
        .map(|&(i, j)| {
            let draw = mean[(i, j)] + state.sigma_diag[j].sqrt() * rng.sample::<f64, _>(StandardNormal);
            working[(i, j)] = draw;
            if binary {
                if let Some(z) = state.probit_z.as_mut() {
                    z[(i, j)] = draw;
                }
                f64::from(u8::from(draw > 0.0))
            } else {
                draw
            }
        })
        .collect()
}
