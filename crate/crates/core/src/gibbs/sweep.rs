//! Named sweep steps and the registry that turns a list of names into a plan.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{ApafaError, Result};
use crate::model::{Dataset, Hyperparameters, ModelState, OutcomeKind};

use super::adapt::{adapt_truncation, TruncationAction};
use super::beta::{update_beta, BetaKernel};
use super::diagnostics::ChainDiagnostics;
use super::{conditionals, cusp, exchange, probit, ChainConfig};

/// Default update order of one sweep.
pub const STANDARD_ORDER: [&str; 12] = [
    "probit_latents",
    "eta",
    "phi_psi",
    "lambda",
    "gamma",
    "zetas",
    "sigma",
    "beta",
    "cusp_shared",
    "cusp_specific",
    "adapt_truncation",
    "impute_missing",
];

/// Everything a step may read or write besides the state.
pub struct SweepContext<'a> {
    pub dataset: &'a Dataset,
    pub design: &'a DMatrix<f64>,
    pub hyper: &'a Hyperparameters,
    pub config: &'a ChainConfig,
    pub beta_kernel: &'a dyn BetaKernel,
    pub iteration: usize,
    /// Outcomes as seen by the conjugate updates: observed values with
    /// imputed cells, or probit latents.
    pub response: &'a mut DMatrix<f64>,
    pub missing_cells: &'a [(usize, usize)],
    pub imputed: &'a mut Vec<f64>,
    pub diagnostics: &'a mut ChainDiagnostics,
}

pub trait SweepStep: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the step runs at all for this dataset.
    fn applies(&self, _dataset: &Dataset) -> bool {
        true
    }

    fn run(&self, state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()>;
}

type StepFn = fn(&mut ModelState, &mut SweepContext<'_>, &mut dyn RngCore) -> Result<()>;

/// A step defined by a plain function.
pub struct FnStep {
    name: &'static str,
    applies: fn(&Dataset) -> bool,
    run: StepFn,
}

impl FnStep {
    pub const fn new(name: &'static str, applies: fn(&Dataset) -> bool, run: StepFn) -> Self {
        Self { name, applies, run }
    }
}

impl SweepStep for FnStep {
    fn name(&self) -> &'static str {
        self.name
    }

    fn applies(&self, dataset: &Dataset) -> bool {
        (self.applies)(dataset)
    }

    fn run(&self, state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
        (self.run)(state, ctx, rng)
    }
}

fn always(_: &Dataset) -> bool {
    true
}

fn binary(d: &Dataset) -> bool {
    d.kind() == OutcomeKind::Binary
}

fn continuous(d: &Dataset) -> bool {
    d.kind() == OutcomeKind::Continuous
}

fn has_missing(d: &Dataset) -> bool {
    d.missing().iter().any(|&m| m)
}

fn step_probit(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    probit::update_probit_latents(state, ctx.dataset, rng);
    if let Some(z) = &state.probit_z {
        ctx.response.copy_from(z);
    }
    Ok(())
}

fn step_eta(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_eta(state, ctx.response, rng)
}

fn step_phi_psi(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_phi_and_psi(state, ctx.response, ctx.design, rng);
    Ok(())
}

fn step_lambda(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_lambda(state, ctx.response, rng)
}

fn step_gamma(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_gamma(state, ctx.response, rng)
}

fn step_zetas(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_zetas(state, ctx.hyper, rng);
    Ok(())
}

fn step_sigma(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    conditionals::update_sigma(state, ctx.response, ctx.hyper, rng);
    if state.sigma_diag.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(ApafaError::numeric("sigma", "noise variance left (0, ∞)"));
    }
    Ok(())
}

fn step_beta(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    let stats = update_beta(state, ctx.design, ctx.hyper, ctx.beta_kernel, &mut RngRef(rng));
    ctx.diagnostics.beta.absorb(stats);
    if state.beta.iter().any(|b| !b.is_finite()) {
        return Err(ApafaError::numeric("beta", "non-finite gate coefficient"));
    }
    Ok(())
}

fn step_cusp_shared(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    cusp::update_cusp_shared(state, ctx.hyper, rng);
    Ok(())
}

fn step_cusp_specific(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    cusp::update_cusp_specific(state, ctx.response, ctx.hyper, rng);
    Ok(())
}

fn step_exchange(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    let stats = exchange::exchange_columns(state, ctx.response, ctx.hyper, ctx.design, &mut RngRef(rng));
    ctx.diagnostics.exchange.absorb(stats);
    Ok(())
}

fn step_adapt(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    if !ctx.config.adapts_at(ctx.iteration) {
        return Ok(());
    }
    let out = adapt_truncation(state, ctx.hyper, ctx.design, ctx.iteration, rng);
    let counts = &mut ctx.diagnostics.adaptation;
    if out.attempted {
        ctx.diagnostics.adaptation_attempts += 1;
    }
    match out.shared {
        TruncationAction::Grow => counts.shared_grown += 1,
        TruncationAction::Shrink { .. } => counts.shared_shrunk += 1,
        TruncationAction::Keep => {}
    }
    match out.specific {
        TruncationAction::Grow => counts.specific_grown += 1,
        TruncationAction::Shrink { .. } => counts.specific_shrunk += 1,
        TruncationAction::Keep => {}
    }
    Ok(())
}

fn step_impute(state: &mut ModelState, ctx: &mut SweepContext<'_>, rng: &mut dyn RngCore) -> Result<()> {
    *ctx.imputed = probit::impute_missing(state, ctx.dataset, ctx.missing_cells, ctx.response, rng);
    Ok(())
}

/// Sized wrapper so generic `R: Rng` functions accept a `dyn RngCore`.
struct RngRef<'a>(&'a mut dyn RngCore);

impl RngCore for RngRef<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Name → step lookup.
#[derive(Clone, Default)]
pub struct StepRegistry {
    steps: BTreeMap<String, Arc<dyn SweepStep>>,
}

impl StepRegistry {
    /// Every built-in step: those of [`STANDARD_ORDER`] plus `exchange`,
    /// which is off by default.
    pub fn standard() -> Self {
        let mut reg = Self::default();
        let builtins: [FnStep; 13] = [
            FnStep::new("probit_latents", binary, step_probit),
            FnStep::new("eta", always, step_eta),
            FnStep::new("phi_psi", always, step_phi_psi),
            FnStep::new("lambda", always, step_lambda),
            FnStep::new("gamma", always, step_gamma),
            FnStep::new("zetas", always, step_zetas),
            FnStep::new("sigma", continuous, step_sigma),
            FnStep::new("beta", always, step_beta),
            FnStep::new("cusp_shared", always, step_cusp_shared),
            FnStep::new("cusp_specific", always, step_cusp_specific),
            FnStep::new("exchange", always, step_exchange),
            FnStep::new("adapt_truncation", always, step_adapt),
            FnStep::new("impute_missing", has_missing, step_impute),
        ];
        for step in builtins {
            reg.register(Arc::new(step));
        }
        reg
    }

    pub fn register(&mut self, step: Arc<dyn SweepStep>) {
        self.steps.insert(step.name().to_string(), step);
    }

    pub fn names(&self) -> Vec<String> {
        self.steps.keys().cloned().collect()
    }

    /// Resolves `names` in order, dropping steps that do not apply to `dataset`.
    pub fn plan<S: AsRef<str>>(&self, names: &[S], dataset: &Dataset) -> Result<Vec<Arc<dyn SweepStep>>> {
        let mut plan = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let step = self
                .steps
                .get(name)
                .ok_or_else(|| ApafaError::invalid(format!("unknown sweep step '{name}'")))?;
            if step.applies(dataset) {
                plan.push(Arc::clone(step));
            }
        }
        Ok(plan)
    }
}
