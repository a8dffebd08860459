//! Metropolis moves that hand a loading column between the shared and the
//! specific part.
//!
//! Single-site updates condition on the factor scores, and with the scores
//! fixed a shared column can mimic a specific one (scores near zero outside
//! the active units) and vice versa. The likelihood penalty that separates the
//! two representations only shows once the scores are integrated out, so the
//! moves below compare integrated likelihoods: the scores `η_·h`, `φ̃_·l` of
//! the two columns involved are marginalized, the column is handed over, and
//! the scores are redrawn from their joint conditional after acceptance.
//!
//! For shared column `h`:
//! * `h` in the slab: hand `λ_·h` to a spiked specific column `l`; `λ_·h` is
//!   redrawn from the spike law and `ψ_·l` from a data-informed proposal.
//! * `h` in the spike: take `γ_·l` from a slab specific column `l`; `γ_·l` and
//!   `ψ_·l` are redrawn from their spike-state conditionals (the prior).
//!
//! Each is the reverse of the other, so a scan over `h` leaves the posterior
//! invariant.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::logistic;
use crate::model::{Hyperparameters, ModelState, SLAB_SCALE};
use crate::priors::{cusp_stick_weights, gate_linear, ln_normal, CuspWeights};

use super::beta::KernelStats;
use super::conditionals::slab_log_ratio;

/// Floor on the proposal probability of each gate, so that every gate
/// pattern stays reachable in both directions.
const GATE_PROPOSAL_FLOOR: f64 = 0.05;

/// Residuals with shared column `h` and specific column `l` removed.
fn residual_without_pair(state: &ModelState, response: &DMatrix<f64>, h: usize, l: usize) -> DMatrix<f64> {
    let mut resid = response - state.conditional_mean();
    for i in 0..state.n() {
        let e = state.eta[(i, h)];
        let f = state.effective_gate(i, l) * state.phi_tilde[(i, l)];
        for j in 0..state.p() {
            resid[(i, j)] += state.lambda[(j, h)] * e + state.gamma[(j, l)] * f;
        }
    }
    resid
}

/// `Σ_i log N(r_i; 0, Σ + λλᵀ + g_i γγᵀ) - log N(r_i; 0, Σ)`.
fn pair_log_evidence(lambda: &[f64], gamma: &[f64], gates: &[bool], resid: &DMatrix<f64>, sigma: &DVector<f64>) -> f64 {
    let p = sigma.len();
    let (mut all, mut ll, mut lg, mut gg) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..p {
        ll += lambda[j] * lambda[j] / sigma[j];
        lg += lambda[j] * gamma[j] / sigma[j];
        gg += gamma[j] * gamma[j] / sigma[j];
    }
    let pair = Matrix2::new(1.0 + ll, lg, lg, 1.0 + gg);
    let pair_ln_det = pair.determinant().ln();
    let pair_inv = pair.try_inverse().expect("identity plus a Gram matrix is invertible");
    for (i, &on) in gates.iter().enumerate() {
        let (mut bl, mut bg) = (0.0, 0.0);
        for j in 0..p {
            bl += lambda[j] * resid[(i, j)] / sigma[j];
            bg += gamma[j] * resid[(i, j)] / sigma[j];
        }
        all += if on {
            let b = Vector2::new(bl, bg);
            -0.5 * pair_ln_det + 0.5 * (b.transpose() * pair_inv * b)[(0, 0)]
        } else {
            slab_log_ratio(ll, bl)
        };
    }
    all
}

/// Proposal probabilities for the gates of a specific column that receives
/// loadings `v`: the collapsed gate conditional, kept away from 0 and 1.
fn gate_proposal(
    v: &[f64],
    resid: &DMatrix<f64>,
    sigma: &DVector<f64>,
    design: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    l: usize,
) -> Vec<f64> {
    let a: f64 = v.iter().zip(sigma.iter()).map(|(x, s)| x * x / s).sum();
    (0..resid.nrows())
        .map(|i| {
            let b: f64 = (0..v.len()).map(|j| v[j] * resid[(i, j)] / sigma[j]).sum();
            let on = logistic(gate_linear(design, beta, i, l) + slab_log_ratio(a, b));
            GATE_PROPOSAL_FLOOR + (1.0 - 2.0 * GATE_PROPOSAL_FLOOR) * on
        })
        .collect()
}

fn ln_bernoulli(on: bool, prob: f64) -> f64 {
    if on {
        prob.ln()
    } else {
        (1.0 - prob).ln()
    }
}

/// `Σ_i log prior(ψ_il) - log q(ψ_il)`.
fn gate_log_ratio(gates: &[bool], design: &DMatrix<f64>, beta: &DMatrix<f64>, l: usize, proposal: &[f64]) -> f64 {
    gates
        .iter()
        .enumerate()
        .map(|(i, &on)| {
            let prior = logistic(gate_linear(design, beta, i, l));
            ln_bernoulli(on, prior) - ln_bernoulli(on, proposal[i])
        })
        .sum()
}

fn ln_isotropic_normal(v: &[f64], var: f64) -> f64 {
    v.iter().map(|&x| ln_normal(x, var)).sum()
}

fn ln_slab(weights: &CuspWeights, h: usize) -> f64 {
    weights.slab_probability(h).ln()
}

fn ln_spike(weights: &CuspWeights, h: usize) -> f64 {
    weights.rho[h].ln()
}

/// Label drawn from the stick weights restricted to the slab (`> h`) or
/// the spike (`≤ h`) labels of column `h`.
fn restricted_label<R: Rng + ?Sized>(weights: &CuspWeights, h: usize, slab: bool, rng: &mut R) -> usize {
    let last = weights.w.len();
    let mass = |label: usize| if label < last { weights.w[label] } else { weights.tail() };
    let range: Vec<usize> = if slab { (h + 1..=last).collect() } else { (0..=h).collect() };
    let total: f64 = range.iter().map(|&z| mass(z)).sum();
    let mut u: f64 = rng.random::<f64>() * total;
    for &z in &range {
        u -= mass(z);
        if u < 0.0 {
            return z;
        }
    }
    *range.last().expect("non-empty label range")
}

/// Redraws `(η_ih, φ̃_il)` for every unit from their joint conditional.
fn redraw_scores<R: Rng + ?Sized>(state: &mut ModelState, resid: &DMatrix<f64>, h: usize, l: usize, rng: &mut R) {
    let p = state.p();
    for i in 0..state.n() {
        let g = state.effective_gate(i, l);
        let (mut ll, mut lg, mut gg, mut bl, mut bg) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..p {
            let (lj, gj, s) = (state.lambda[(j, h)], g * state.gamma[(j, l)], state.sigma_diag[j]);
            ll += lj * lj / s;
            lg += lj * gj / s;
            gg += gj * gj / s;
            bl += lj * resid[(i, j)] / s;
            bg += gj * resid[(i, j)] / s;
        }
        let precision = Matrix2::new(1.0 + ll, lg, lg, 1.0 + gg);
        let chol = precision.cholesky().expect("identity plus a Gram matrix is positive definite");
        let mean = chol.solve(&Vector2::new(bl, bg));
        let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        let noise = chol.l().transpose().solve_upper_triangular(&z).expect("triangular factor is invertible");
        state.eta[(i, h)] = mean[0] + noise[0];
        state.phi_tilde[(i, l)] = mean[1] + noise[1];
    }
}

fn column(m: &DMatrix<f64>, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

/// Hands `λ_·h` to spiked specific column `l`.
fn shared_to_specific<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    h: usize,
    l: usize,
    spiked_specific: usize,
    slab_specific: usize,
    rng: &mut R,
) -> bool {
    let (n, p) = (state.n(), state.p());
    let w_eta = cusp_stick_weights(&state.stick_v_eta).expect("sticks in (0,1)");
    let w_phi = cusp_stick_weights(&state.stick_v_phi).expect("sticks in (0,1)");
    let resid = residual_without_pair(state, response, h, l);
    let v = column(&state.lambda, h);
    let spike_var = hyper.spike_value * state.zeta_lambda[h];
    let u: Vec<f64> = (0..p).map(|_| spike_var.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    let proposal = gate_proposal(&v, &resid, &state.sigma_diag, design, &state.beta, l);
    let new_gates: Vec<bool> = proposal.iter().map(|&q| rng.random::<f64>() < q).collect();

    let zeros = vec![0.0; p];
    let before = pair_log_evidence(&v, &zeros, &vec![false; n], &resid, &state.sigma_diag);
    let after = pair_log_evidence(&u, &v, &new_gates, &resid, &state.sigma_diag);
    let log_accept = ln_spike(&w_eta, h) - ln_slab(&w_eta, h) + ln_slab(&w_phi, l) - ln_spike(&w_phi, l)
        + ln_isotropic_normal(&v, state.zeta_gamma[l])
        - ln_isotropic_normal(&v, state.zeta_lambda[h])
        + gate_log_ratio(&new_gates, design, &state.beta, l, &proposal)
        + after
        - before
        + (spiked_specific as f64).ln()
        - ((slab_specific + 1) as f64).ln();
    if rng.random::<f64>().ln() >= log_accept {
        return false;
    }
    for j in 0..p {
        state.lambda[(j, h)] = u[j];
        state.gamma[(j, l)] = v[j];
    }
    for (i, &on) in new_gates.iter().enumerate() {
        state.psi[(i, l)] = u8::from(on);
    }
    state.cusp_indicator_eta[h] = restricted_label(&w_eta, h, false, rng);
    state.tau_eta[h] = hyper.spike_value;
    state.cusp_indicator_phi[l] = restricted_label(&w_phi, l, true, rng);
    state.tau_phi[l] = 1;
    redraw_scores(state, &resid, h, l, rng);
    true
}

/// Moves `γ_·l` of slab specific column `l` into spiked shared column `h`.
fn specific_to_shared<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    design: &DMatrix<f64>,
    h: usize,
    l: usize,
    spiked_specific: usize,
    slab_specific: usize,
    rng: &mut R,
) -> bool {
    let (n, p) = (state.n(), state.p());
    let w_eta = cusp_stick_weights(&state.stick_v_eta).expect("sticks in (0,1)");
    let w_phi = cusp_stick_weights(&state.stick_v_phi).expect("sticks in (0,1)");
    let resid = residual_without_pair(state, response, h, l);
    let v = column(&state.gamma, l);
    let u = column(&state.lambda, h);
    let gates: Vec<bool> = (0..n).map(|i| state.psi[(i, l)] == 1).collect();
    let proposal = gate_proposal(&v, &resid, &state.sigma_diag, design, &state.beta, l);

    let zeros = vec![0.0; p];
    let before = pair_log_evidence(&u, &v, &gates, &resid, &state.sigma_diag);
    let after = pair_log_evidence(&v, &zeros, &vec![false; n], &resid, &state.sigma_diag);
    let log_accept = ln_slab(&w_eta, h) - ln_spike(&w_eta, h) + ln_spike(&w_phi, l) - ln_slab(&w_phi, l)
        + ln_isotropic_normal(&v, state.zeta_lambda[h])
        - ln_isotropic_normal(&v, state.zeta_gamma[l])
        - gate_log_ratio(&gates, design, &state.beta, l, &proposal)
        + after
        - before
        + (slab_specific as f64).ln()
        - ((spiked_specific + 1) as f64).ln();
    if rng.random::<f64>().ln() >= log_accept {
        return false;
    }
    let gamma_sd = state.zeta_gamma[l].sqrt();
    for j in 0..p {
        state.lambda[(j, h)] = v[j];
        state.gamma[(j, l)] = gamma_sd * rng.sample::<f64, _>(StandardNormal);
    }
    for i in 0..n {
        let prior = logistic(gate_linear(design, &state.beta, i, l));
        state.psi[(i, l)] = u8::from(rng.random::<f64>() < prior);
    }
    state.cusp_indicator_eta[h] = restricted_label(&w_eta, h, true, rng);
    state.tau_eta[h] = SLAB_SCALE;
    state.cusp_indicator_phi[l] = restricted_label(&w_phi, l, false, rng);
    state.tau_phi[l] = 0;
    redraw_scores(state, &resid, h, l, rng);
    true
}

/// One scan over the shared columns, attempting one exchange per column.
pub fn exchange_columns<R: Rng + ?Sized>(
    state: &mut ModelState,
    response: &DMatrix<f64>,
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    rng: &mut R,
) -> KernelStats {
    let mut stats = KernelStats::default();
    for h in 0..state.d() {
        let slab: Vec<usize> = (0..state.k()).filter(|&l| state.tau_phi[l] == 1).collect();
        let spiked: Vec<usize> = (0..state.k()).filter(|&l| state.tau_phi[l] == 0).collect();
        let accepted = if state.is_shared_active(h) {
            if spiked.is_empty() {
                continue;
            }
            let l = spiked[rng.random_range(0..spiked.len())];
            shared_to_specific(state, response, hyper, design, h, l, spiked.len(), slab.len(), rng)
        } else {
            if slab.is_empty() {
                continue;
            }
            let l = slab[rng.random_range(0..slab.len())];
            specific_to_shared(state, response, design, h, l, spiked.len(), slab.len(), rng)
        };
        stats.proposed += 1;
        stats.accepted += u64::from(accepted);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_log_density;
    use crate::priors::sample_prior_state_with;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pair_evidence_matches_dense_densities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = 4;
        let sigma = DVector::from_fn(p, |j, _| 0.3 + 0.2 * j as f64);
        let lambda: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let gamma: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let resid = DMatrix::from_fn(3, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gates = [true, false, true];
        let ours = pair_log_evidence(&lambda, &gamma, &gates, &resid, &sigma);
        let l = DVector::from_vec(lambda.clone());
        let g = DVector::from_vec(gamma.clone());
        let base = DMatrix::from_diagonal(&sigma);
        let mut dense = 0.0;
        for (i, &on) in gates.iter().enumerate() {
            let mut cov = &base + &l * l.transpose();
            if on {
                cov += &g * g.transpose();
            }
            let r = resid.row(i).transpose();
            dense += gaussian_log_density(&r, &cov).unwrap() - gaussian_log_density(&r, &base).unwrap();
        }
        assert!((ours - dense).abs() < 1e-10, "{ours} vs {dense}");
    }

    #[test]
    fn restricted_labels_respect_their_class() {
        let weights = cusp_stick_weights(&[0.3, 0.4, 0.2, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            assert!(restricted_label(&weights, 1, true, &mut rng) > 1);
            assert!(restricted_label(&weights, 1, false, &mut rng) <= 1);
        }
    }

    #[test]
    fn exchanges_keep_state_consistent() {
        let hyper = Hyperparameters::for_dimension(4);
        let design = DMatrix::from_fn(12, 2, |i, c| f64::from(u8::from(i % 2 == c)));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut state = sample_prior_state_with(&hyper, &design, 4, 3, 3, &mut rng);
        let response = DMatrix::from_fn(12, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut accepted = 0;
        for _ in 0..200 {
            accepted += exchange_columns(&mut state, &response, &hyper, &design, &mut rng).accepted;
            for h in 0..state.d() {
                assert_eq!(state.is_shared_active(h), state.cusp_indicator_eta[h] > h);
            }
            for l in 0..state.k() {
                assert_eq!(state.tau_phi[l] == 1, state.cusp_indicator_phi[l] > l);
            }
        }
        assert!(accepted > 0);
    }
}
