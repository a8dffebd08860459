//! Synthetic multi-study datasets with known generating values.
//!
//! Every scenario has three equally sized studies and `d0` shared factors;
//! they differ in how specific factors are switched on:
//!
//! * `A`: one exclusive specific factor per study.
//! * `Astar`: the data of `A` with the study labels withheld (one group).
//! * `B`: no specific factors.
//! * `C`: factors active in study 1, study 2, and studies 2 and 3 jointly.
//! * `D`: factor `s` active on the first half of study `s` only.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::evaluation::{self, RocOutcome};
use crate::gibbs::{run_chain, ChainConfig};
use crate::identifiability::numerical_rank;
use crate::model::{Dataset, Hyperparameters, OutcomeKind, SyntheticTruth};
use crate::priors::sample_inverse_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    Astar,
    B,
    C,
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [Scenario::A, Scenario::Astar, Scenario::B, Scenario::C, Scenario::D];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::Astar => "Astar",
            Scenario::B => "B",
            Scenario::C => "C",
            Scenario::D => "D",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ApafaError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s) || (s == "A*" && *sc == Scenario::Astar))
            .ok_or_else(|| ApafaError::invalid(format!("unknown scenario '{s}' (expected A, Astar, B, C or D)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `n = 60`, `p = 10`.
    Tall,
    /// `n = 45`, `p = 60`.
    Large,
    Custom { n: usize, p: usize },
}

impl Shape {
    pub fn dims(self) -> (usize, usize) {
        match self {
            Shape::Tall => (60, 10),
            Shape::Large => (45, 60),
            Shape::Custom { n, p } => (n, p),
        }
    }

    pub fn name(self) -> String {
        match self {
            Shape::Tall => "tall".into(),
            Shape::Large => "large".into(),
            Shape::Custom { n, p } => format!("{n}x{p}"),
        }
    }
}

impl FromStr for Shape {
    type Err = ApafaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tall" => Ok(Shape::Tall),
            "large" => Ok(Shape::Large),
            other => {
                let parsed = other
                    .split_once('x')
                    .and_then(|(n, p)| Some((n.parse().ok()?, p.parse().ok()?)));
                match parsed {
                    Some((n, p)) => Ok(Shape::Custom { n, p }),
                    None => Err(ApafaError::invalid(format!("unknown shape '{s}' (expected tall, large or NxP)"))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub shape: Shape,
    pub seed: u64,
    /// Standard deviation of every true loading.
    pub loading_scale: f64,
    /// Inverse-gamma `(shape, rate)` of the true noise variances.
    pub noise_shape_rate: (f64, f64),
    pub d0: usize,
    pub n_groups: usize,
    /// Emit `1(y > 0)` with unit noise variances (probit data).
    pub binary: bool,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, shape: Shape, seed: u64) -> Self {
        Self {
            scenario,
            shape,
            seed,
            loading_scale: 1.0,
            noise_shape_rate: (3.0, 1.0),
            d0: 3,
            n_groups: 3,
            binary: false,
        }
    }

    /// Study index of every unit: contiguous blocks of equal size (the first
    /// `n mod S` studies get one extra unit).
    pub fn group_index(&self) -> Vec<usize> {
        let (n, _) = self.shape.dims();
        let s = self.n_groups;
        let base = n / s;
        let extra = n % s;
        (0..s).flat_map(|g| std::iter::repeat_n(g, base + usize::from(g < extra))).collect()
    }
}

/// How specific factors are switched on, given the study of every unit.
pub trait ScenarioGenerator: Send + Sync {
    fn name(&self) -> &'static str;
    /// True activation matrix (`n × k`).
    fn activation(&self, groups: &[usize], n_groups: usize) -> DMatrix<u8>;
    /// Whether the emitted dataset hides the study labels.
    fn withholds_labels(&self) -> bool {
        false
    }
}

struct ExclusivePerStudy;
struct WithheldLabels;
struct NoSpecific;
struct PartiallyShared;
struct HalfStudy;

impl ScenarioGenerator for ExclusivePerStudy {
    fn name(&self) -> &'static str {
        "A"
    }

    fn activation(&self, groups: &[usize], n_groups: usize) -> DMatrix<u8> {
        DMatrix::from_fn(groups.len(), n_groups, |i, h| u8::from(groups[i] == h))
    }
}

impl ScenarioGenerator for WithheldLabels {
    fn name(&self) -> &'static str {
        "Astar"
    }

    fn activation(&self, groups: &[usize], n_groups: usize) -> DMatrix<u8> {
        ExclusivePerStudy.activation(groups, n_groups)
    }

    fn withholds_labels(&self) -> bool {
        true
    }
}

impl ScenarioGenerator for NoSpecific {
    fn name(&self) -> &'static str {
        "B"
    }

    fn activation(&self, groups: &[usize], _: usize) -> DMatrix<u8> {
        DMatrix::zeros(groups.len(), 0)
    }
}

impl ScenarioGenerator for PartiallyShared {
    fn name(&self) -> &'static str {
        "C"
    }

    fn activation(&self, groups: &[usize], _: usize) -> DMatrix<u8> {
        let supports: [&[usize]; 3] = [&[0], &[1], &[1, 2]];
        DMatrix::from_fn(groups.len(), 3, |i, h| u8::from(supports[h].contains(&groups[i])))
    }
}

impl ScenarioGenerator for HalfStudy {
    fn name(&self) -> &'static str {
        "D"
    }

    fn activation(&self, groups: &[usize], n_groups: usize) -> DMatrix<u8> {
        let mut seen = vec![0usize; n_groups];
        let sizes: Vec<usize> = (0..n_groups).map(|s| groups.iter().filter(|&&g| g == s).count()).collect();
        let mut psi = DMatrix::zeros(groups.len(), n_groups);
        for (i, &g) in groups.iter().enumerate() {
            if seen[g] < sizes[g] / 2 {
                psi[(i, g)] = 1;
            }
            seen[g] += 1;
        }
        psi
    }
}

/// Name → generator lookup.
#[derive(Clone, Default)]
pub struct ScenarioRegistry {
    generators: BTreeMap<String, Arc<dyn ScenarioGenerator>>,
}

impl ScenarioRegistry {
    pub fn standard() -> Self {
        let mut reg = Self::default();
        reg.register(Arc::new(ExclusivePerStudy));
        reg.register(Arc::new(WithheldLabels));
        reg.register(Arc::new(NoSpecific));
        reg.register(Arc::new(PartiallyShared));
        reg.register(Arc::new(HalfStudy));
        reg
    }

    pub fn register(&mut self, generator: Arc<dyn ScenarioGenerator>) {
        self.generators.insert(generator.name().to_string(), generator);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ScenarioGenerator>> {
        self.generators
            .get(name)
            .cloned()
            .ok_or_else(|| ApafaError::invalid(format!("unknown scenario '{name}'")))
    }

    pub fn names(&self) -> Vec<String> {
        self.generators.keys().cloned().collect()
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// `Y = H Λᵀ + (Ψ ⊙ Φ̃) Γᵀ + E` with standard-normal factors.
pub fn simulate_outcomes<R: Rng + ?Sized>(
    lambda: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    psi: &DMatrix<u8>,
    sigma_diag: &DVector<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let n = psi.nrows();
    let p = lambda.nrows();
    let eta = gaussian_matrix(n, lambda.ncols(), 1.0, rng);
    let phi = DMatrix::from_fn(n, gamma.ncols(), |i, h| f64::from(psi[(i, h)]) * rng.sample::<f64, _>(StandardNormal));
    let noise = DMatrix::from_fn(n, p, |_, j| sigma_diag[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
    eta * lambda.transpose() + phi * gamma.transpose() + noise
}

/// Per-study covariance `ΛΛᵀ + Γ diag(ψ̄_s) Γᵀ + Σ`, with `ψ̄_s` the share of
/// study-`s` units on which each specific factor is active.
pub fn group_covariances(
    lambda: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    psi: &DMatrix<u8>,
    sigma_diag: &DVector<f64>,
    groups: &[usize],
    n_groups: usize,
) -> Result<Vec<DMatrix<f64>>> {
    (0..n_groups)
        .map(|s| {
            let members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == s).collect();
            let rates: Vec<f64> = (0..gamma.ncols())
                .map(|h| members.iter().map(|&i| f64::from(psi[(i, h)])).sum::<f64>() / members.len().max(1) as f64)
                .collect();
            crate::model::assemble_marginal_covariance(lambda, gamma, &rates, sigma_diag)
        })
        .collect()
}

/// Draws a dataset and its generating values.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(Dataset, SyntheticTruth)> {
    let generator = ScenarioRegistry::standard().get(cfg.scenario.name())?;
    generate_with(generator.as_ref(), cfg)
}

pub fn generate_with(generator: &dyn ScenarioGenerator, cfg: &ScenarioConfig) -> Result<(Dataset, SyntheticTruth)> {
    let (n, p) = cfg.shape.dims();
    if n < cfg.n_groups || p == 0 || cfg.n_groups == 0 {
        return Err(ApafaError::invalid(format!("shape {n}x{p} cannot hold {} studies", cfg.n_groups)));
    }
    if !(cfg.loading_scale > 0.0) {
        return Err(ApafaError::invalid("loading_scale must be positive"));
    }
    let groups = cfg.group_index();
    let psi = generator.activation(&groups, cfg.n_groups);
    let k = psi.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let lambda = gaussian_matrix(p, cfg.d0, cfg.loading_scale, &mut rng);
    let gamma = loop {
        let g = gaussian_matrix(p, k, cfg.loading_scale, &mut rng);
        if numerical_rank(&g) == k.min(p) {
            break g;
        }
    };
    let sigma_diag = if cfg.binary {
        DVector::from_element(p, 1.0)
    } else {
        let (a, b) = cfg.noise_shape_rate;
        DVector::from_fn(p, |_, _| sample_inverse_gamma(a, b, &mut rng))
    };
    let mut y = simulate_outcomes(&lambda, &gamma, &psi, &sigma_diag, &mut rng);
    if cfg.binary {
        y.apply(|v| *v = f64::from(u8::from(*v > 0.0)));
    }
    let omega_by_group = group_covariances(&lambda, &gamma, &psi, &sigma_diag, &groups, cfg.n_groups)?;

    let kind = if cfg.binary { OutcomeKind::Binary } else { OutcomeKind::Continuous };
    let dataset = if generator.withholds_labels() {
        Dataset::from_groups(y, &vec![0; n], 1, kind)?
    } else {
        Dataset::from_groups(y, &groups, cfg.n_groups, kind)?
    };
    let truth = SyntheticTruth { lambda, gamma, psi, sigma_diag, omega_by_group, group_labels: groups };
    Ok((dataset, truth))
}

/// Which replicates to run and how to fit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub scenarios: Vec<Scenario>,
    pub shapes: Vec<Shape>,
    /// One data seed per replicate.
    pub seeds: Vec<u64>,
    pub chain: ChainConfig,
}

/// Metrics of one fitted replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub scenario: Scenario,
    pub shape: String,
    pub replicate: usize,
    pub seed: u64,
    pub d_mean: f64,
    pub k_mean: f64,
    pub rv_omega: Vec<f64>,
    pub rv_shared: f64,
    pub auc: Option<f64>,
    pub wall_seconds: f64,
}

/// Monte Carlo mean and interquartile range of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanIqr {
    pub mean: f64,
    pub iqr: f64,
    pub median: f64,
}

impl MeanIqr {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            iqr: evaluation::quantile(values, 0.75) - evaluation::quantile(values, 0.25),
            median: evaluation::quantile(values, 0.5),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: Scenario,
    pub shape: String,
    pub replicates: usize,
    pub d: MeanIqr,
    pub k: MeanIqr,
    pub rv_omega: Vec<MeanIqr>,
    pub rv_shared: MeanIqr,
    pub auc: Option<MeanIqr>,
    pub wall_seconds: MeanIqr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<AggregateRow>,
    pub wall_seconds: f64,
}

/// Chain seed of a replicate, decorrelated from its data seed.
pub fn chain_seed(data_seed: u64) -> u64 {
    data_seed.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407)
}

/// Generates, fits and scores one replicate.
pub fn run_replicate(scenario: Scenario, shape: Shape, replicate: usize, seed: u64, chain: &ChainConfig) -> Result<ReplicateRow> {
    let start = Instant::now();
    let (dataset, truth) = generate_scenario(&ScenarioConfig::new(scenario, shape, seed))?;
    let hyper = Hyperparameters::for_dimension(dataset.p());
    let mut cfg = chain.clone();
    cfg.seed = chain_seed(seed);
    let draws = run_chain(&dataset, &hyper, &cfg)?;
    let cov = evaluation::evaluate_covariance_recovery(&draws, &truth)?;
    let summary = evaluation::posterior_summary(&draws);
    let auc = match evaluation::psi_recovery_roc(&draws, &truth, true)? {
        RocOutcome::Curve { auc, .. } => Some(auc),
        _ => None,
    };
    Ok(ReplicateRow {
        scenario,
        shape: shape.name(),
        replicate,
        seed,
        d_mean: summary.d_mean,
        k_mean: summary.k_mean,
        rv_omega: cov.rv_omega,
        rv_shared: cov.rv_shared,
        auc,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn aggregate(rows: &[&ReplicateRow]) -> Option<AggregateRow> {
    let first = rows.first()?;
    let pick = |f: &dyn Fn(&ReplicateRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let groups = first.rv_omega.len();
    let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
    Some(AggregateRow {
        scenario: first.scenario,
        shape: first.shape.clone(),
        replicates: rows.len(),
        d: MeanIqr::of(&pick(&|r| r.d_mean))?,
        k: MeanIqr::of(&pick(&|r| r.k_mean))?,
        rv_omega: (0..groups).filter_map(|s| MeanIqr::of(&pick(&|r| r.rv_omega[s]))).collect(),
        rv_shared: MeanIqr::of(&pick(&|r| r.rv_shared))?,
        auc: MeanIqr::of(&aucs),
        wall_seconds: MeanIqr::of(&pick(&|r| r.wall_seconds))?,
    })
}

/// Runs every scenario × shape × seed in parallel and aggregates per cell.
pub fn replicate_study(plan: &StudyPlan) -> Result<StudyReport> {
    plan.chain.validate()?;
    let start = Instant::now();
    let jobs: Vec<(Scenario, Shape, usize, u64)> = plan
        .scenarios
        .iter()
        .flat_map(|&sc| {
            plan.shapes
                .iter()
                .flat_map(move |&sh| plan.seeds.iter().enumerate().map(move |(r, &seed)| (sc, sh, r, seed)))
        })
        .collect();
    let rows: Vec<ReplicateRow> = jobs
        .par_iter()
        .map(|&(sc, sh, r, seed)| run_replicate(sc, sh, r, seed, &plan.chain))
        .collect::<Result<_>>()?;
    let mut aggregates = Vec::new();
    for &sc in &plan.scenarios {
        for sh in &plan.shapes {
            let cell: Vec<&ReplicateRow> = rows.iter().filter(|r| r.scenario == sc && r.shape == sh.name()).collect();
            aggregates.extend(aggregate(&cell));
        }
    }
    Ok(StudyReport { rows, aggregates, wall_seconds: start.elapsed().as_secs_f64() })
}
