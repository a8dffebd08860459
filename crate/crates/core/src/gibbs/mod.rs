//! The Gibbs sampler: conditional updates, truncation adaptation and chain
//! orchestration.

pub mod adapt;
pub mod beta;
pub mod conditionals;
pub mod cusp;
pub mod exchange;
mod diagnostics;
pub mod polya_gamma;
pub mod probit;
pub mod sweep;
pub mod truncnorm;

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::model::{
    active_factor_counts, validate_state, Dataset, DrawMeta, Hyperparameters, ModelState, OutcomeKind, PosteriorDraws,
    SLAB_SCALE,
};
use crate::priors::{sample_inverse_gamma, sample_stick};

pub use beta::{BetaKernel, BetaKernelRegistry, KernelStats, LogisticProblem};
pub use diagnostics::ChainDiagnostics;
pub use sweep::{StepRegistry, SweepContext, SweepStep, STANDARD_ORDER};

pub type SamplerRng = ChaCha8Rng;

/// Length, recording and adaptation settings of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub adapt_start: usize,
    /// Last iteration at which the truncation may change; `None` means the end of burn-in.
    pub adapt_end: Option<usize>,
    /// Name of the β kernel in [`BetaKernelRegistry`].
    pub beta_update: String,
    pub rw_step: f64,
    /// Active columns of each kind at initialization (capped by the truncation limits).
    pub initial_columns: usize,
    /// Step names run in every sweep, in order (see [`StepRegistry`]).
    pub sweep: Vec<String>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 8_000,
            thinning: 1,
            seed: 0,
            adapt_start: 200,
            adapt_end: None,
            beta_update: "augmentation".into(),
            rw_step: 0.2,
            initial_columns: 12,
            sweep: STANDARD_ORDER.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(ApafaError::invalid("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(ApafaError::invalid(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(ApafaError::invalid("thinning must be at least 1"));
        }
        if !(self.rw_step > 0.0 && self.rw_step.is_finite()) {
            return Err(ApafaError::invalid("rw_step must be positive"));
        }
        if self.initial_columns == 0 {
            return Err(ApafaError::invalid("initial_columns must be at least 1"));
        }
        Ok(())
    }

    /// Fixed truncation for the whole chain.
    pub fn without_adaptation(mut self) -> Self {
        self.adapt_start = usize::MAX;
        self.adapt_end = Some(0);
        self
    }

    pub fn adapts_at(&self, iteration: usize) -> bool {
        let end = self.adapt_end.unwrap_or(self.burn_in);
        iteration >= self.adapt_start && iteration <= end
    }

    pub fn records(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thinning == 0
    }

    pub fn n_recorded(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Starting state: `initial_columns` active columns of each kind, loadings
/// and scales from their priors, `β = 0`, gates from the resulting
/// `Ber(1/2)`, noise variances at half the observed column variance.
pub fn initial_state<R: Rng + ?Sized>(
    dataset: &Dataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    rng: &mut R,
) -> ModelState {
    let (n, p) = (dataset.n(), dataset.p());
    let d = config.initial_columns.min(hyper.d_max).max(1);
    let k = config.initial_columns.min(hyper.k_max).max(1);
    let normal = |rng: &mut R| rng.sample::<f64, _>(StandardNormal);

    let stick_v_eta: Vec<f64> = (0..d).map(|_| sample_stick(1.0, hyper.alpha_eta, rng)).collect();
    let zeta_lambda: Vec<f64> = (0..d).map(|_| sample_inverse_gamma(hyper.a_lambda, hyper.b_lambda, rng)).collect();
    let mut lambda = DMatrix::zeros(p, d);
    for h in 0..d {
        for j in 0..p {
            lambda[(j, h)] = zeta_lambda[h].sqrt() * normal(rng);
        }
    }
    let stick_v_phi: Vec<f64> = (0..k).map(|_| sample_stick(1.0, hyper.alpha_phi, rng)).collect();
    let zeta_gamma: Vec<f64> = (0..k).map(|_| sample_inverse_gamma(hyper.a_gamma, hyper.b_gamma, rng)).collect();
    let mut gamma = DMatrix::zeros(p, k);
    for h in 0..k {
        for j in 0..p {
            gamma[(j, h)] = zeta_gamma[h].sqrt() * normal(rng);
        }
    }
    let psi = DMatrix::from_fn(n, k, |_, _| u8::from(rng.random::<bool>()));
    let eta = DMatrix::from_fn(n, d, |_, _| normal(rng));
    let phi_tilde = DMatrix::from_fn(n, k, |_, _| normal(rng));

    let binary = dataset.kind() == OutcomeKind::Binary;
    let sigma_diag = DVector::from_fn(p, |j, _| {
        if binary {
            return 1.0;
        }
        let obs: Vec<f64> = (0..n).filter(|&i| !dataset.is_missing(i, j)).map(|i| dataset.y()[(i, j)]).collect();
        if obs.len() < 2 {
            return 1.0;
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
        (0.5 * var).max(1e-3)
    });
    let probit_z = binary.then(|| {
        DMatrix::from_fn(n, p, |i, j| {
            if dataset.is_missing(i, j) {
                0.0
            } else if dataset.y()[(i, j)] > 0.5 {
                0.5
            } else {
                -0.5
            }
        })
    });

    ModelState {
        lambda,
        gamma,
        eta,
        phi_tilde,
        psi,
        beta: DMatrix::zeros(dataset.gate_design().ncols(), k),
        sigma_diag,
        zeta_lambda,
        zeta_gamma,
        tau_phi: vec![1; k],
        tau_eta: vec![SLAB_SCALE; d],
        stick_v_eta,
        stick_v_phi,
        cusp_indicator_eta: vec![d; d],
        cusp_indicator_phi: vec![k; k],
        probit_z,
    }
}

/// Observed outcomes with missing cells replaced by their column means
/// (or the probit latents for binary data).
fn working_response(dataset: &Dataset, state: &ModelState) -> DMatrix<f64> {
    if let Some(z) = &state.probit_z {
        return z.clone();
    }
    let (n, p) = (dataset.n(), dataset.p());
    let mut out = dataset.y().clone();
    for j in 0..p {
        let obs: Vec<f64> = (0..n).filter(|&i| !dataset.is_missing(i, j)).map(|i| dataset.y()[(i, j)]).collect();
        let fill = if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 };
        for i in 0..n {
            if dataset.is_missing(i, j) {
                out[(i, j)] = fill;
            }
        }
    }
    out
}

/// A running chain.
pub struct Sampler {
    dataset: Dataset,
    design: DMatrix<f64>,
    hyper: Hyperparameters,
    config: ChainConfig,
    kernel: Arc<dyn BetaKernel>,
    plan: Vec<Arc<dyn SweepStep>>,
    state: ModelState,
    response: DMatrix<f64>,
    missing_cells: Vec<(usize, usize)>,
    imputed: Vec<f64>,
    rng: SamplerRng,
    iteration: usize,
    diagnostics: ChainDiagnostics,
}

impl Sampler {
    /// Chain seeded by `config.seed`, started from [`initial_state`].
    pub fn new(dataset: Dataset, hyper: Hyperparameters, config: ChainConfig) -> Result<Self> {
        let mut rng = SamplerRng::seed_from_u64(config.seed);
        hyper.validate(dataset.p())?;
        let state = initial_state(&dataset, &hyper, &config, &mut rng);
        Self::assemble(dataset, hyper, config, state, rng)
    }

    /// Chain started from a given state.
    pub fn from_state(dataset: Dataset, hyper: Hyperparameters, config: ChainConfig, state: ModelState) -> Result<Self> {
        let rng = SamplerRng::seed_from_u64(config.seed);
        Self::assemble(dataset, hyper, config, state, rng)
    }

    fn assemble(
        dataset: Dataset,
        hyper: Hyperparameters,
        config: ChainConfig,
        mut state: ModelState,
        rng: SamplerRng,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate(dataset.p())?;
        if dataset.n() == 0 || dataset.p() == 0 {
            return Err(ApafaError::invalid("dataset has no units or no variables"));
        }
        if dataset.kind() == OutcomeKind::Binary {
            state.sigma_diag.fill(1.0);
            if state.probit_z.is_none() {
                state.probit_z = Some(DMatrix::zeros(dataset.n(), dataset.p()));
            }
        }
        let violations = validate_state(&state, &dataset);
        if let Some(v) = violations.first() {
            return Err(ApafaError::invalid(format!("starting state is invalid: {v}")));
        }
        let kernel = BetaKernelRegistry::standard(config.rw_step).get(&config.beta_update)?;
        let plan = StepRegistry::standard().plan(&config.sweep, &dataset)?;
        let response = working_response(&dataset, &state);
        let missing_cells = dataset.missing_cells();
        Ok(Self {
            design: dataset.gate_design(),
            dataset,
            hyper,
            config,
            kernel,
            plan,
            state,
            response,
            imputed: vec![f64::NAN; missing_cells.len()],
            missing_cells,
            rng,
            iteration: 0,
            diagnostics: ChainDiagnostics::default(),
        })
    }

    /// Replaces the sweep plan by the named steps from `registry`, in order.
    pub fn with_steps<S: AsRef<str>>(mut self, registry: &StepRegistry, names: &[S]) -> Result<Self> {
        self.plan = registry.plan(names, &self.dataset)?;
        Ok(self)
    }

    pub fn with_beta_kernel(mut self, kernel: Arc<dyn BetaKernel>) -> Self {
        self.kernel = kernel;
        self
    }

    /// One full sweep; failures carry the iteration and step name.
    pub fn sweep(&mut self) -> Result<()> {
        self.iteration += 1;
        let mut ctx = SweepContext {
            dataset: &self.dataset,
            design: &self.design,
            hyper: &self.hyper,
            config: &self.config,
            beta_kernel: self.kernel.as_ref(),
            iteration: self.iteration,
            response: &mut self.response,
            missing_cells: &self.missing_cells,
            imputed: &mut self.imputed,
            diagnostics: &mut self.diagnostics,
        };
        for step in &self.plan {
            let start = Instant::now();
            step.run(&mut self.state, &mut ctx, &mut self.rng).map_err(|e| ApafaError::ChainFailure {
                iteration: self.iteration,
                component: step.name().to_string(),
                detail: e.to_string(),
            })?;
            *ctx.diagnostics.step_nanos.entry(step.name().to_string()).or_default() += start.elapsed().as_nanos() as u64;
        }
        self.diagnostics.sweeps += 1;
        self.diagnostics.truncation_trace.push((self.state.d(), self.state.k()));
        Ok(())
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// Mutable access for callers that resample part of the state themselves
    /// (the probit Geweke check redraws the latents together with the data).
    pub fn state_mut(&mut self) -> &mut ModelState {
        &mut self.state
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    /// Imputed values of the masked cells from the latest sweep.
    pub fn imputed(&self) -> &[f64] {
        &self.imputed
    }

    pub fn rng_mut(&mut self) -> &mut SamplerRng {
        &mut self.rng
    }

    /// Swaps in new fully observed continuous outcomes (for successive-conditional simulation).
    pub fn set_response(&mut self, y: DMatrix<f64>) -> Result<()> {
        self.dataset = self.dataset.with_outcomes(y)?;
        self.response = working_response(&self.dataset, &self.state);
        Ok(())
    }
}

/// Runs a chain and returns the retained draws.
pub fn run_chain(dataset: &Dataset, hyper: &Hyperparameters, config: &ChainConfig) -> Result<PosteriorDraws> {
    run_chain_with_diagnostics(dataset, hyper, config).map(|(draws, _)| draws)
}

pub fn run_chain_with_diagnostics(
    dataset: &Dataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
) -> Result<(PosteriorDraws, ChainDiagnostics)> {
    let start = Instant::now();
    let mut sampler = Sampler::new(dataset.clone(), hyper.clone(), config.clone())?;
    let mut states = Vec::with_capacity(config.n_recorded());
    let mut derived = Vec::with_capacity(config.n_recorded());
    let mut imputed = Vec::with_capacity(config.n_recorded());
    for t in 1..=config.iterations {
        sampler.sweep()?;
        if config.records(t) {
            derived.push(active_factor_counts(sampler.state()));
            states.push(sampler.state().clone());
            imputed.push(sampler.imputed().to_vec());
        }
    }
    let draws = PosteriorDraws {
        states,
        derived,
        missing_cells: dataset.missing_cells(),
        imputed,
        meta: DrawMeta {
            seed: config.seed,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thinning: config.thinning,
            runtime_micros: start.elapsed().as_micros() as u64,
        },
    };
    Ok((draws, sampler.diagnostics))
}
