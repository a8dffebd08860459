//! Bayesian multi-study factor analysis with covariate-gated specific factors.
//!
//! Units from several studies share a set of common factors; each specific
//! factor is switched on unit by unit through a logistic gate on the study
//! label (and optional covariates). Posterior inference runs a Gibbs sampler
//! with cumulative-shrinkage priors that learn the number of factors of each
//! kind.

pub mod error;
pub mod gibbs;
pub mod identifiability;
pub mod io;
mod linalg;
pub mod model;
pub mod priors;
pub mod simulation;
pub mod evaluation;

pub use error::{ApafaError, Result};
pub use gibbs::{run_chain, run_chain_with_diagnostics, ChainConfig, ChainDiagnostics, Sampler};
pub use linalg::{logistic, max_abs_diff};
pub use model::{
    active_factor_counts, assemble_marginal_covariance, conditional_log_likelihood, marginal_log_likelihood,
    unit_covariance, validate_state, ActiveCounts, Dataset, DrawMeta, Hyperparameters, ModelState, OutcomeKind,
    PosteriorDraws, SyntheticTruth,
};
