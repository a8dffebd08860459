//! Gate-coefficient updates.
//!
//! Each column `β_h` is the coefficient vector of a Bayesian logistic
//! regression of `ψ_·h` on the gate design with an isotropic `N(0, c/n)` prior.
//! Kernels that leave this conditional invariant implement [`BetaKernel`] and
//! are looked up by name in a [`BetaKernelRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::linalg::{log1p_exp, sample_from_precision};
use crate::model::{Hyperparameters, ModelState};

use super::polya_gamma::sample_pg1;

/// The logistic-regression conditional of one gate column.
#[derive(Debug, Clone, Copy)]
pub struct LogisticProblem<'a> {
    pub design: &'a DMatrix<f64>,
    pub outcomes: &'a [u8],
    pub prior_variance: f64,
}

impl LogisticProblem<'_> {
    /// Unnormalized log density of `β` under this conditional.
    pub fn log_density(&self, beta: &DVector<f64>) -> f64 {
        let mut total = -0.5 * beta.norm_squared() / self.prior_variance;
        for (i, &y) in self.outcomes.iter().enumerate() {
            let lin: f64 = self.design.row(i).iter().zip(beta.iter()).map(|(x, b)| x * b).sum();
            total += if y == 1 { -log1p_exp(-lin) } else { -log1p_exp(lin) };
        }
        total
    }
}

/// Proposal bookkeeping of one kernel application.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl KernelStats {
    pub fn absorb(&mut self, other: KernelStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// A Markov kernel targeting [`LogisticProblem`].
pub trait BetaKernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn update(&self, beta: &mut DVector<f64>, problem: &LogisticProblem<'_>, rng: &mut dyn RngCore) -> KernelStats;
}

/// Exact Gibbs draw through Pólya-Gamma augmentation: `ω_i ~ PG(1, x_iᵀβ)`,
/// then `β ~ N(V Xᵀ(ψ - ½), V)` with `V = (XᵀΩX + I/v)⁻¹`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolyaGammaKernel;

impl BetaKernel for PolyaGammaKernel {
    fn name(&self) -> &'static str {
        "augmentation"
    }

    fn update(&self, beta: &mut DVector<f64>, problem: &LogisticProblem<'_>, rng: &mut dyn RngCore) -> KernelStats {
        let x = problem.design;
        let r = x.ncols();
        let mut prec = DMatrix::identity(r, r) / problem.prior_variance;
        let mut lin = DVector::zeros(r);
        for i in 0..x.nrows() {
            let row = x.row(i);
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let omega = sample_pg1(eta, rng);
            let kappa = f64::from(problem.outcomes[i]) - 0.5;
            for a in 0..r {
                if row[a] == 0.0 {
                    continue;
                }
                lin[a] += row[a] * kappa;
                for b in 0..r {
                    prec[(a, b)] += omega * row[a] * row[b];
                }
            }
        }
        if let Some(draw) = sample_from_precision(prec, &lin, rng) {
            *beta = draw;
        }
        KernelStats { proposed: 1, accepted: 1 }
    }
}

/// Componentwise random-walk Metropolis with Gaussian steps of size `step`.
#[derive(Debug, Clone, Copy)]
pub struct RandomWalkKernel {
    pub step: f64,
}

impl BetaKernel for RandomWalkKernel {
    fn name(&self) -> &'static str {
        "random_walk"
    }

    fn update(&self, beta: &mut DVector<f64>, problem: &LogisticProblem<'_>, rng: &mut dyn RngCore) -> KernelStats {
        let mut stats = KernelStats::default();
        let mut current = problem.log_density(beta);
        for c in 0..beta.len() {
            let old = beta[c];
            beta[c] = old + self.step * rng.sample::<f64, _>(StandardNormal);
            let proposed = problem.log_density(beta);
            stats.proposed += 1;
            if rng.random::<f64>().ln() < proposed - current {
                current = proposed;
                stats.accepted += 1;
            } else {
                beta[c] = old;
            }
        }
        stats
    }
}

/// Named collection of β kernels.
#[derive(Clone, Default)]
pub struct BetaKernelRegistry {
    kernels: BTreeMap<String, Arc<dyn BetaKernel>>,
}

impl BetaKernelRegistry {
    /// The two built-in kernels, `augmentation` and `random_walk`.
    pub fn standard(rw_step: f64) -> Self {
        let mut reg = Self::default();
        reg.register(Arc::new(PolyaGammaKernel));
        reg.register(Arc::new(RandomWalkKernel { step: rw_step }));
        reg
    }

    pub fn register(&mut self, kernel: Arc<dyn BetaKernel>) {
        self.kernels.insert(kernel.name().to_string(), kernel);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn BetaKernel>> {
        self.kernels.get(name).cloned().ok_or_else(|| {
            ApafaError::invalid(format!(
                "unknown beta kernel '{name}' (available: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.kernels.keys().cloned().collect()
    }
}

/// Updates every column of `state.beta` with `kernel`.
pub fn update_beta<R: Rng>(
    state: &mut ModelState,
    design: &DMatrix<f64>,
    hyper: &Hyperparameters,
    kernel: &dyn BetaKernel,
    rng: &mut R,
) -> KernelStats {
    let prior_variance = hyper.beta_prior_variance(state.n());
    let mut stats = KernelStats::default();
    for h in 0..state.k() {
        let outcomes: Vec<u8> = state.psi.column(h).iter().copied().collect();
        let problem = LogisticProblem { design, outcomes: &outcomes, prior_variance };
        let mut column: DVector<f64> = state.beta.column(h).into_owned();
        stats.absorb(kernel.update(&mut column, &problem, rng));
        state.beta.set_column(h, &column);
    }
    stats
}
