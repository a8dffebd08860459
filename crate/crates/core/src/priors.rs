//! Prior laws: cumulative shrinkage sticks, gates, inverse-gamma scales and
//! the joint prior over a full [`ModelState`].
//!
//! Both cumulative shrinkage processes are represented through component
//! labels. For a truncation at `H` columns, column `h` carries a label
//! `z_h ∈ {0, …, H}` drawn with probabilities `(w_0, …, w_{H-1}, 1 - ρ_{H-1})`,
//! the last value standing for every stick beyond the truncation. Column `h` is
//! in the slab iff `z_h > h`, so marginally `P(slab) = 1 - ρ_h`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use libm::lgamma as ln_gamma;

use crate::error::{ApafaError, Result};
use crate::linalg::{log1p_exp, logistic};
use crate::model::{Hyperparameters, ModelState, SLAB_SCALE};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stick-breaking weights of a cumulative shrinkage process.
#[derive(Debug, Clone, PartialEq)]
pub struct CuspWeights {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub rho: Vec<f64>,
}

impl CuspWeights {
    /// Mass beyond the truncation, `1 - ρ_{H-1}` (1 for an empty stick).
    pub fn tail(&self) -> f64 {
        (1.0 - self.rho.last().copied().unwrap_or(0.0)).max(0.0)
    }

    /// Log-probability of component label `label` (`label == H` is the tail).
    pub fn ln_label_probability(&self, label: usize) -> f64 {
        if label < self.w.len() {
            self.w[label].ln()
        } else {
            self.tail().ln()
        }
    }

    /// `P(column h is in the slab) = 1 - ρ_h`.
    pub fn slab_probability(&self, h: usize) -> f64 {
        (1.0 - self.rho[h]).max(0.0)
    }
}

/// `w_l = v_l ∏_{m<l} (1 - v_m)`, `ρ_h = Σ_{l ≤ h} w_l`.
pub fn cusp_stick_weights(v: &[f64]) -> Result<CuspWeights> {
    let mut w = Vec::with_capacity(v.len());
    let mut rho = Vec::with_capacity(v.len());
    let mut remaining = 1.0;
    let mut cumulative = 0.0;
    for (l, &vl) in v.iter().enumerate() {
        if !(vl > 0.0 && vl < 1.0) {
            return Err(ApafaError::invalid(format!("stick {l} = {vl} is outside (0,1)")));
        }
        let wl = vl * remaining;
        remaining *= 1.0 - vl;
        cumulative = (cumulative + wl).min(1.0);
        w.push(wl);
        rho.push(cumulative);
    }
    Ok(CuspWeights { v: v.to_vec(), w, rho })
}

/// `logit⁻¹(x_iᵀβ_h + z_iᵀβ^(z)_h)`.
pub fn gate_probability(beta_h: &[f64], x_i: &[f64], beta_z: Option<&[f64]>, z_i: Option<&[f64]>) -> f64 {
    let mut eta: f64 = beta_h.iter().zip(x_i).map(|(b, x)| b * x).sum();
    if let (Some(bz), Some(z)) = (beta_z, z_i) {
        eta += bz.iter().zip(z).map(|(b, x)| b * x).sum::<f64>();
    }
    logistic(eta)
}

/// Linear predictor of the gate for unit `i`, column `h`.
pub(crate) fn gate_linear(design: &DMatrix<f64>, beta: &DMatrix<f64>, i: usize, h: usize) -> f64 {
    design.row(i).iter().zip(beta.column(h).iter()).map(|(x, b)| x * b).sum()
}

pub(crate) fn clamp_unit_open(v: f64) -> f64 {
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub(crate) fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive inverse-gamma parameters");
    let x: f64 = g.sample(rng);
    (1.0 / x).min(f64::MAX)
}

pub(crate) fn sample_stick<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let dist = Beta::new(a, b).expect("positive beta parameters");
    clamp_unit_open(dist.sample(rng))
}

/// Draws a component label from `(w_0, …, w_{H-1}, tail)`.
pub(crate) fn sample_label<R: Rng + ?Sized>(weights: &CuspWeights, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, &wl) in weights.w.iter().enumerate() {
        acc += wl;
        if u < acc {
            return l;
        }
    }
    weights.w.len()
}

pub(crate) fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + x * x / var)
}

pub(crate) fn ln_inverse_gamma(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Log density of `Beta(1, α)` at `v`.
pub(crate) fn ln_stick(v: f64, alpha: f64) -> f64 {
    alpha.ln() + (alpha - 1.0) * (1.0 - v).ln()
}

fn ln_bernoulli_logit(success: bool, linear: f64) -> f64 {
    if success {
        -log1p_exp(-linear)
    } else {
        -log1p_exp(linear)
    }
}

/// Draws a state from the joint prior with explicit truncation levels `d`, `k`.
///
/// `design` is the `n × (S + q)` gate design; its row count fixes `n` and the
/// gate-coefficient prior variance `c / n`.
pub fn sample_prior_state_with<R: Rng + ?Sized>(
    hyper: &Hyperparameters,
    design: &DMatrix<f64>,
    p: usize,
    d: usize,
    k: usize,
    rng: &mut R,
) -> ModelState {
    let n = design.nrows();
    let rows_beta = design.ncols();

    let stick_v_eta: Vec<f64> = (0..d).map(|_| sample_stick(1.0, hyper.alpha_eta, rng)).collect();
    let weights_eta = cusp_stick_weights(&stick_v_eta).expect("sticks in (0,1)");
    let cusp_indicator_eta: Vec<usize> = (0..d).map(|_| sample_label(&weights_eta, rng)).collect();
    let tau_eta: Vec<f64> = cusp_indicator_eta
        .iter()
        .enumerate()
        .map(|(h, &z)| if z > h { SLAB_SCALE } else { hyper.spike_value })
        .collect();
    let zeta_lambda: Vec<f64> = (0..d)
        .map(|_| sample_inverse_gamma(hyper.a_lambda, hyper.b_lambda, rng))
        .collect();
    let mut lambda = DMatrix::zeros(p, d);
    for h in 0..d {
        let sd = (tau_eta[h] * zeta_lambda[h]).sqrt();
        for j in 0..p {
            lambda[(j, h)] = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let stick_v_phi: Vec<f64> = (0..k).map(|_| sample_stick(1.0, hyper.alpha_phi, rng)).collect();
    let weights_phi = cusp_stick_weights(&stick_v_phi).expect("sticks in (0,1)");
    let cusp_indicator_phi: Vec<usize> = (0..k).map(|_| sample_label(&weights_phi, rng)).collect();
    let tau_phi: Vec<u8> = cusp_indicator_phi
        .iter()
        .enumerate()
        .map(|(h, &z)| u8::from(z > h))
        .collect();
    let zeta_gamma: Vec<f64> = (0..k)
        .map(|_| sample_inverse_gamma(hyper.a_gamma, hyper.b_gamma, rng))
        .collect();
    let mut gamma = DMatrix::zeros(p, k);
    for h in 0..k {
        let sd = zeta_gamma[h].sqrt();
        for j in 0..p {
            gamma[(j, h)] = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let beta_sd = hyper.beta_prior_variance(n).sqrt();
    let beta = DMatrix::from_fn(rows_beta, k, |_, _| beta_sd * rng.sample::<f64, _>(StandardNormal));
    let mut psi = DMatrix::zeros(n, k);
    for h in 0..k {
        for i in 0..n {
            let prob = logistic(gate_linear(design, &beta, i, h));
            psi[(i, h)] = u8::from(rng.random::<f64>() < prob);
        }
    }
    let eta = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let phi_tilde = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma_diag = DVector::from_fn(p, |_, _| sample_inverse_gamma(hyper.a_sigma, hyper.b_sigma, rng));

    ModelState {
        lambda,
        gamma,
        eta,
        phi_tilde,
        psi,
        beta,
        sigma_diag,
        zeta_lambda,
        zeta_gamma,
        tau_phi,
        tau_eta,
        stick_v_eta,
        stick_v_phi,
        cusp_indicator_eta,
        cusp_indicator_phi,
        probit_z: None,
    }
}

/// Draws a state from the joint prior at the maximal truncation, seeded.
pub fn sample_prior_state(hyper: &Hyperparameters, design: &DMatrix<f64>, p: usize, seed: u64) -> ModelState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prior_state_with(hyper, design, p, hyper.d_max, hyper.k_max, &mut rng)
}

/// Sum of every prior log density and log mass in `state`.
///
/// `design` supplies the gate inputs. Component labels and scales must agree
/// (`τ` is a deterministic function of the labels); disagreement is an error.
pub fn log_prior_density(state: &ModelState, hyper: &Hyperparameters, design: &DMatrix<f64>) -> Result<f64> {
    let (n, p, d, k) = (state.n(), state.p(), state.d(), state.k());
    if design.nrows() != n || design.ncols() != state.beta.nrows() {
        return Err(ApafaError::invalid("gate design does not match the state"));
    }
    if state.psi.iter().any(|&v| v > 1) || state.tau_phi.iter().any(|&v| v > 1) {
        return Err(ApafaError::invalid("binary indicators out of range"));
    }
    let mut total = 0.0;

    let weights_eta = cusp_stick_weights(&state.stick_v_eta)?;
    for &v in &state.stick_v_eta {
        total += ln_stick(v, hyper.alpha_eta);
    }
    for h in 0..d {
        let z = state.cusp_indicator_eta[h];
        if z > d {
            return Err(ApafaError::invalid("shared label out of range"));
        }
        let expected = if z > h { SLAB_SCALE } else { hyper.spike_value };
        if state.tau_eta[h] != expected {
            return Err(ApafaError::invalid(format!("shared scale {h} disagrees with its label")));
        }
        total += weights_eta.ln_label_probability(z);
        let zeta = state.zeta_lambda[h];
        if !(zeta > 0.0) {
            return Err(ApafaError::invalid("zeta_lambda must be positive"));
        }
        total += ln_inverse_gamma(zeta, hyper.a_lambda, hyper.b_lambda);
        let var = state.tau_eta[h] * zeta;
        for j in 0..p {
            total += ln_normal(state.lambda[(j, h)], var);
        }
    }

    let weights_phi = cusp_stick_weights(&state.stick_v_phi)?;
    for &v in &state.stick_v_phi {
        total += ln_stick(v, hyper.alpha_phi);
    }
    for h in 0..k {
        let z = state.cusp_indicator_phi[h];
        if z > k {
            return Err(ApafaError::invalid("specific label out of range"));
        }
        if (z > h) != (state.tau_phi[h] == 1) {
            return Err(ApafaError::invalid(format!("specific activation {h} disagrees with its label")));
        }
        total += weights_phi.ln_label_probability(z);
        let zeta = state.zeta_gamma[h];
        if !(zeta > 0.0) {
            return Err(ApafaError::invalid("zeta_gamma must be positive"));
        }
        total += ln_inverse_gamma(zeta, hyper.a_gamma, hyper.b_gamma);
        for j in 0..p {
            total += ln_normal(state.gamma[(j, h)], zeta);
        }
    }

    let beta_var = hyper.beta_prior_variance(n);
    total += state.beta.iter().map(|&b| ln_normal(b, beta_var)).sum::<f64>();
    for h in 0..k {
        for i in 0..n {
            total += ln_bernoulli_logit(state.psi[(i, h)] == 1, gate_linear(design, &state.beta, i, h));
        }
    }
    total += state.eta.iter().map(|&e| ln_normal(e, 1.0)).sum::<f64>();
    total += state.phi_tilde.iter().map(|&f| ln_normal(f, 1.0)).sum::<f64>();
    for &s in state.sigma_diag.iter() {
        if !(s > 0.0) {
            return Err(ApafaError::invalid("noise variances must be positive"));
        }
        total += ln_inverse_gamma(s, hyper.a_sigma, hyper.b_sigma);
    }
    Ok(total)
}
