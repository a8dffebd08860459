//! Cumulative-shrinkage updates: component labels, column scales and sticks.
//!
//! Label conditionals integrate out the quantity the scale acts on (the column
//! variance `ζ^λ_h` for the shared part, the unscaled factors `φ̃_·h` for the
//! specific part), so labels, scales and the integrated quantity move as one
//! block.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use libm::lgamma as ln_gamma;

use crate::linalg::sample_log_categorical;
use crate::model::{Hyperparameters, ModelState, SLAB_SCALE};
use crate::priors::{cusp_stick_weights, sample_inverse_gamma, sample_stick};

use super::conditionals::slab_log_ratio;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log ∫ N(λ_·h; 0, τζ I) IG(ζ; a, b) dζ` for a column with `Σ_j λ²_jh = ss`.
pub fn ln_shared_column_marginal(ss: f64, p: usize, tau: f64, a: f64, b: f64) -> f64 {
    let half_p = 0.5 * p as f64;
    a * b.ln() - ln_gamma(a) + ln_gamma(a + half_p) - half_p * (LN_2PI + tau.ln())
        - (a + half_p) * (b + 0.5 * ss / tau).ln()
}

/// Unnormalized log-probabilities of the label of shared column `h`,
/// indexed `0..=d` (the last entry is the tail).
pub fn shared_label_log_weights(state: &ModelState, hyper: &Hyperparameters, h: usize) -> Vec<f64> {
    let d = state.d();
    let weights = cusp_stick_weights(&state.stick_v_eta).expect("sticks in (0,1)");
    let ss: f64 = state.lambda.column(h).iter().map(|v| v * v).sum();
    let p = state.p();
    let spike = ln_shared_column_marginal(ss, p, hyper.spike_value, hyper.a_lambda, hyper.b_lambda);
    let slab = ln_shared_column_marginal(ss, p, SLAB_SCALE, hyper.a_lambda, hyper.b_lambda);
    (0..=d)
        .map(|l| weights.ln_label_probability(l) + if l <= h { spike } else { slab })
        .collect()
}

fn update_sticks<R: Rng + ?Sized>(labels: &[usize], alpha: f64, rng: &mut R) -> Vec<f64> {
    let h_max = labels.len();
    (0..h_max)
        .map(|l| {
            let at = labels.iter().filter(|&&z| z == l).count() as f64;
            let above = labels.iter().filter(|&&z| z > l).count() as f64;
            sample_stick(1.0 + at, alpha + above, rng)
        })
        .collect()
}

/// Labels (with `ζ^λ` integrated), then `τ`, `ζ^λ | τ`, then the sticks.
pub fn update_cusp_shared<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparameters, rng: &mut R) {
    let d = state.d();
    let half_p = 0.5 * state.p() as f64;
    for h in 0..d {
        let logw = shared_label_log_weights(state, hyper, h);
        state.cusp_indicator_eta[h] = sample_log_categorical(&logw, rng);
    }
    for h in 0..d {
        let tau = if state.cusp_indicator_eta[h] > h { SLAB_SCALE } else { hyper.spike_value };
        state.tau_eta[h] = tau;
        let ss: f64 = state.lambda.column(h).iter().map(|v| v * v).sum();
        state.zeta_lambda[h] = sample_inverse_gamma(hyper.a_lambda + half_p, hyper.b_lambda + 0.5 * ss / tau, rng);
    }
    state.stick_v_eta = update_sticks(&state.cusp_indicator_eta, hyper.alpha_eta, rng);
}

fn residual_without(state: &ModelState, response: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let mut resid = response - state.conditional_mean();
    for i in 0..state.n() {
        let f = state.effective_gate(i, h) * state.phi_tilde[(i, h)];
        if f != 0.0 {
            for j in 0..state.p() {
                resid[(i, j)] += state.gamma[(j, h)] * f;
            }
        }
    }
    resid
}

/// `Σ_{i: ψ_ih = 1} log N(r_i; 0, Σ + γ_hγ_hᵀ) - log N(r_i; 0, Σ)` for the
/// residuals `resid` that exclude column `h`.
fn column_log_evidence(state: &ModelState, resid: &DMatrix<f64>, h: usize) -> f64 {
    let p = state.p();
    let a: f64 = (0..p).map(|j| state.gamma[(j, h)].powi(2) / state.sigma_diag[j]).sum();
    (0..state.n())
        .filter(|&i| state.psi[(i, h)] == 1)
        .map(|i| {
            let b: f64 = (0..p).map(|j| state.gamma[(j, h)] * resid[(i, j)] / state.sigma_diag[j]).sum();
            slab_log_ratio(a, b)
        })
        .sum()
}

/// Unnormalized log-probabilities of the label of specific column `h`
/// (`φ̃_·h` integrated out), indexed `0..=k`.
pub fn specific_label_log_weights(state: &ModelState, response: &DMatrix<f64>, h: usize) -> Vec<f64> {
    let resid = residual_without(state, response, h);
    let delta = column_log_evidence(state, &resid, h);
    let weights = cusp_stick_weights(&state.stick_v_phi).expect("sticks in (0,1)");
    (0..=state.k())
        .map(|l| weights.ln_label_probability(l) + if l > h { delta } else { 0.0 })
        .collect()
}

/// Column by column: label with `φ̃_·h` integrated, `τ^φ_h`, then `φ̃_·h`
/// given the new activation; finally the sticks.
pub fn update_cusp_specific<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    hyper: &Hyperparameters,
    rng: &mut R,
) {
    let (n, p, k) = (state.n(), state.p(), state.k());
    for h in 0..k {
        let resid = residual_without(state, response, h);
        let delta = column_log_evidence(state, &resid, h);
        let weights = cusp_stick_weights(&state.stick_v_phi).expect("sticks in (0,1)");
        let logw: Vec<f64> = (0..=k)
            .map(|l| weights.ln_label_probability(l) + if l > h { delta } else { 0.0 })
            .collect();
        let label = sample_log_categorical(&logw, rng);
        state.cusp_indicator_phi[h] = label;
        state.tau_phi[h] = u8::from(label > h);
        let a: f64 = (0..p).map(|j| state.gamma[(j, h)].powi(2) / state.sigma_diag[j]).sum();
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            state.phi_tilde[(i, h)] = if state.tau_phi[h] == 1 && state.psi[(i, h)] == 1 {
                let b: f64 = (0..p).map(|j| state.gamma[(j, h)] * resid[(i, j)] / state.sigma_diag[j]).sum();
                b / (1.0 + a) + z / (1.0 + a).sqrt()
            } else {
                z
            };
        }
    }
    state.stick_v_phi = update_sticks(&state.cusp_indicator_phi, hyper.alpha_phi, rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::log_sum_exp;
    use crate::priors::sample_prior_state_with;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normalize(logw: &[f64]) -> Vec<f64> {
        let z = log_sum_exp(logw);
        logw.iter().map(|l| (l - z).exp()).collect()
    }

    fn toy_state(seed: u64, d: usize, k: usize) -> (ModelState, Hyperparameters, DMatrix<f64>) {
        let hyper = Hyperparameters::for_dimension(3);
        let design = DMatrix::from_fn(6, 2, |i, c| f64::from(u8::from(i % 2 == c)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = sample_prior_state_with(&hyper, &design, 3, d, k, &mut rng);
        (state, hyper, design)
    }

    /// `log ∫ N(λ; 0, τζI) IG(ζ; a, b) dζ` by trapezoid quadrature in `log ζ`.
    fn quadrature_marginal(ss: f64, p: usize, tau: f64, a: f64, b: f64) -> f64 {
        let m = 200_000;
        let (lo, hi) = (-30.0f64, 30.0f64);
        let step = (hi - lo) / m as f64;
        let logs: Vec<f64> = (0..=m)
            .map(|g| {
                let u = lo + step * g as f64;
                let zeta = u.exp();
                let var = tau * zeta;
                let ln_norm = -0.5 * p as f64 * (LN_2PI + var.ln()) - 0.5 * ss / var;
                let ln_ig = a * b.ln() - ln_gamma(a) - (a + 1.0) * zeta.ln() - b / zeta;
                let w: f64 = if g == 0 || g == m { 0.5 } else { 1.0 };
                ln_norm + ln_ig + u + w.ln()
            })
            .collect();
        log_sum_exp(&logs) + step.ln()
    }

    #[test]
    fn integrated_column_marginal_matches_quadrature() {
        for &(ss, tau) in &[(0.3, 1.0), (4.0, 1.0), (1e-3, 1e-4), (2.5, 1e-4)] {
            let closed = ln_shared_column_marginal(ss, 3, tau, 2.0, 2.0);
            let quad = quadrature_marginal(ss, 3, tau, 2.0, 2.0);
            assert!((closed - quad).abs() < 1e-6, "ss={ss} tau={tau}: {closed} vs {quad}");
        }
    }

    #[test]
    fn shared_labels_match_enumeration_over_configurations() {
        let (mut state, hyper, _) = toy_state(3, 2, 2);
        state.lambda = DMatrix::from_row_slice(3, 2, &[0.9, 0.01, -1.2, 0.02, 0.4, -0.01]);
        let weights = cusp_stick_weights(&state.stick_v_eta).unwrap();
        // joint over (z_0, z_1) ∈ {0,1,2}²; columns are independent given the sticks
        let mut joint = vec![vec![0.0; 3]; 3];
        for z0 in 0..3 {
            for z1 in 0..3 {
                let mut total = weights.ln_label_probability(z0) + weights.ln_label_probability(z1);
                for (h, z) in [(0usize, z0), (1, z1)] {
                    let tau = if z > h { 1.0 } else { hyper.spike_value };
                    let ss: f64 = state.lambda.column(h).iter().map(|v| v * v).sum();
                    total += quadrature_marginal(ss, 3, tau, hyper.a_lambda, hyper.b_lambda);
                }
                joint[z0][z1] = total;
            }
        }
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        let norm = log_sum_exp(&flat);
        for h in 0..2 {
            let ours = normalize(&shared_label_log_weights(&state, &hyper, h));
            for l in 0..3 {
                let oracle: f64 = (0..3)
                    .map(|other| if h == 0 { joint[l][other] } else { joint[other][l] })
                    .map(|v| (v - norm).exp())
                    .sum();
                assert!((ours[l] - oracle).abs() < 1e-6, "h={h} l={l}: {} vs {oracle}", ours[l]);
            }
        }
    }

    #[test]
    fn specific_labels_match_full_covariance_oracle() {
        let (mut state, _, _) = toy_state(5, 1, 2);
        state.psi = DMatrix::from_row_slice(6, 2, &[1, 0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let response = state.conditional_mean()
            + DMatrix::from_fn(6, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        for h in 0..2 {
            let ours = normalize(&specific_label_log_weights(&state, &response, h));
            let weights = cusp_stick_weights(&state.stick_v_phi).unwrap();
            let other = 1 - h;
            let logs: Vec<f64> = (0..3)
                .map(|l| {
                    let on = l > h;
                    let mut total = weights.ln_label_probability(l);
                    for i in 0..6 {
                        let mut mean = DVector::zeros(3);
                        for j in 0..3 {
                            mean[j] = state.lambda[(j, 0)] * state.eta[(i, 0)]
                                + state.gamma[(j, other)] * state.effective_gate(i, other) * state.phi_tilde[(i, other)];
                        }
                        let r = response.row(i).transpose() - mean;
                        let mut cov = DMatrix::from_diagonal(&state.sigma_diag);
                        if on && state.psi[(i, h)] == 1 {
                            let g = state.gamma.column(h);
                            cov += g * g.transpose();
                        }
                        total += crate::linalg::gaussian_log_density(&r, &cov).unwrap();
                    }
                    total
                })
                .collect();
            let oracle = normalize(&logs);
            for l in 0..3 {
                assert!((ours[l] - oracle[l]).abs() < 1e-9, "h={h} l={l}");
            }
        }
    }

    #[test]
    fn empty_columns_lose_activity_with_index() {
        let (mut state, hyper, _) = toy_state(7, 4, 4);
        state.lambda.fill(0.0);
        state.stick_v_eta = vec![0.3; 4];
        let probs: Vec<f64> = (0..4)
            .map(|h| {
                let w = normalize(&shared_label_log_weights(&state, &hyper, h));
                w[h + 1..].iter().sum::<f64>()
            })
            .collect();
        for h in 1..4 {
            assert!(probs[h] < probs[h - 1]);
        }
    }

    #[test]
    fn larger_concentration_favours_more_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels = vec![4usize, 4, 4, 4];
        let mean_slab = |alpha: f64, rng: &mut ChaCha8Rng| {
            let mut total = 0.0;
            for _ in 0..2000 {
                let v = update_sticks(&labels, alpha, rng);
                total += cusp_stick_weights(&v).unwrap().slab_probability(3);
            }
            total / 2000.0
        };
        assert!(mean_slab(8.0, &mut rng) > mean_slab(1.0, &mut rng));
    }

    #[test]
    fn specific_update_keeps_labels_and_scales_consistent() {
        let (mut state, hyper, _) = toy_state(11, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let response = state.conditional_mean();
        for _ in 0..50 {
            update_cusp_specific(&mut state, &response, &hyper, &mut rng);
            update_cusp_shared(&mut state, &hyper, &mut rng);
            for h in 0..3 {
                assert_eq!(state.tau_phi[h] == 1, state.cusp_indicator_phi[h] > h);
            }
            for h in 0..2 {
                assert_eq!(state.is_shared_active(h), state.cusp_indicator_eta[h] > h);
            }
        }
    }
}
