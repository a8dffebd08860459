//! Joint-distribution check of the sampler: statistics of states drawn from
//! the prior must match those of a successive-conditional chain that
//! alternates one sweep with a fresh draw of the data given the state.

use apafa::gibbs::{Sampler, StepRegistry, STANDARD_ORDER};
use apafa::priors::sample_prior_state_with;
use apafa::{active_factor_counts, ChainConfig, Dataset, Hyperparameters, ModelState, OutcomeKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const N: usize = 8;
const P: usize = 3;
const GROUPS: usize = 2;
const D: usize = 3;
const K: usize = 3;

fn hyper() -> Hyperparameters {
    let mut h = Hyperparameters::for_dimension(P);
    h.a_lambda = 6.0;
    h.b_lambda = 5.0;
    h.a_gamma = 6.0;
    h.b_gamma = 5.0;
    h.a_sigma = 6.0;
    h.b_sigma = 5.0;
    h.beta_prior_scale_numerator = 8.0;
    h.alpha_eta = 2.0;
    h.alpha_phi = 2.0;
    h
}

fn groups() -> Vec<usize> {
    (0..N).map(|i| i % GROUPS).collect()
}

fn simulate_data<R: Rng>(state: &ModelState, rng: &mut R) -> DMatrix<f64> {
    let mean = state.conditional_mean();
    DMatrix::from_fn(N, P, |i, j| mean[(i, j)] + state.sigma_diag[j].sqrt() * rng.sample::<f64, _>(StandardNormal))
}

pub const NAMES: [&str; 11] = [
    "lambda_00",
    "lambda_00_sq",
    "gamma_00_sq",
    "gamma_11",
    "sigma_0",
    "beta_00",
    "psi_rate",
    "active_shared",
    "active_specific",
    "eta_00_sq",
    "zeta_gamma_0",
];

fn statistics(s: &ModelState) -> [f64; 11] {
    let counts = active_factor_counts(s);
    let psi_rate = s.psi.iter().map(|&v| f64::from(v)).sum::<f64>() / s.psi.len() as f64;
    [
        s.lambda[(0, 0)],
        s.lambda[(0, 0)].powi(2),
        s.gamma[(0, 0)].powi(2),
        s.gamma[(1, 1)],
        s.sigma_diag[0],
        s.beta[(0, 0)],
        psi_rate,
        counts.d_active as f64,
        counts.k_active as f64,
        s.eta[(0, 0)].powi(2),
        s.zeta_gamma[0],
    ]
}

fn mean_and_se_iid(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn mean_and_se_batched(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let (m, se) = mean_and_se_iid(&means);
    (m, se)
}

/// z-scores of every statistic, prior sample versus successive-conditional chain.
pub fn geweke_z_scores(steps: &[&str], sweeps: usize, prior_draws: usize, seed: u64) -> Vec<(String, f64)> {
    geweke_z_scores_with(steps, sweeps, prior_draws, seed, "augmentation", OutcomeKind::Continuous)
}

fn draw_prior<R: Rng>(hyper: &Hyperparameters, design: &DMatrix<f64>, kind: OutcomeKind, rng: &mut R) -> ModelState {
    let mut state = sample_prior_state_with(hyper, design, P, D, K, rng);
    if kind == OutcomeKind::Binary {
        state.sigma_diag.fill(1.0);
    }
    state
}

/// Outcomes given the state; binary outcomes come with the latents they threshold.
fn draw_data<R: Rng>(state: &ModelState, kind: OutcomeKind, rng: &mut R) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let latent = simulate_data(state, rng);
    match kind {
        OutcomeKind::Binary => (latent.map(|v| f64::from(u8::from(v > 0.0))), Some(latent)),
        OutcomeKind::Continuous => (latent, None),
    }
}

pub fn geweke_z_scores_with(
    steps: &[&str],
    sweeps: usize,
    prior_draws: usize,
    seed: u64,
    kernel: &str,
    kind: OutcomeKind,
) -> Vec<(String, f64)> {
    let hyper = hyper();
    let y0 = DMatrix::zeros(N, P);
    let dataset = Dataset::from_groups(y0, &groups(), GROUPS, kind).unwrap();
    let design = dataset.gate_design();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let prior: Vec<[f64; 11]> = (0..prior_draws)
        .map(|_| statistics(&draw_prior(&hyper, &design, kind, &mut rng)))
        .collect();

    let mut start = draw_prior(&hyper, &design, kind, &mut rng);
    let (y, latent) = draw_data(&start, kind, &mut rng);
    start.probit_z = latent;
    let config = ChainConfig { seed: seed + 1, beta_update: kernel.to_string(), ..ChainConfig::default() }.without_adaptation();
    let mut sampler = Sampler::from_state(dataset.with_outcomes(y).unwrap(), hyper, config, start)
        .unwrap()
        .with_steps(&StepRegistry::standard(), steps)
        .unwrap();
    let mut chain = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        sampler.sweep().unwrap();
        chain.push(statistics(sampler.state()));
        let (y, latent) = draw_data(sampler.state(), kind, &mut rng);
        sampler.state_mut().probit_z = latent;
        sampler.set_response(y).unwrap();
    }
    if steps.contains(&"exchange") {
        let rate = sampler.diagnostics().exchange.acceptance_rate().unwrap_or(0.0);
        assert!(rate > 0.01, "exchange moves almost never accepted ({rate})");
    }

    (0..NAMES.len())
        .map(|s| {
            let a: Vec<f64> = prior.iter().map(|r| r[s]).collect();
            let b: Vec<f64> = chain.iter().map(|r| r[s]).collect();
            let (ma, sa) = mean_and_se_iid(&a);
            let (mb, sb) = mean_and_se_batched(&b, 30);
            let se = (sa * sa + sb * sb).sqrt();
            // fixed statistics (the probit noise variance) carry no information
            let z = if se == 0.0 && ma == mb { 0.0 } else { (mb - ma) / se };
            (NAMES[s].to_string(), z)
        })
        .collect()
}

pub fn standard_steps() -> Vec<&'static str> {
    STANDARD_ORDER.iter().copied().filter(|s| *s != "adapt_truncation").collect()
}

pub fn seed(default: u64) -> u64 {
    std::env::var("GEWEKE_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

pub fn sweeps() -> usize {
    std::env::var("GEWEKE_SWEEPS").ok().and_then(|v| v.parse().ok()).unwrap_or(60_000)
}

pub fn assert_within_four_se(z: &[(String, f64)]) {
    for (name, score) in z {
        println!("{name:>16}: z = {score:+.2}");
    }
    for (name, score) in z {
        assert!(score.abs() < 4.0, "{name} deviates by {score:.2} standard errors");
    }
}

