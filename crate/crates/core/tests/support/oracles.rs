//! Brute-force moments of single-site conditionals.
//!
//! The unnormalized conditional of any one coordinate is the joint density
//! `log prior + log likelihood` with everything else held fixed. Integrating
//! it numerically on a fine grid gives moments that never touch the
//! closed-form update code.

use apafa::gibbs::conditionals::{
    eta_conditional, gamma_row_conditional, gate_conditional, lambda_row_conditional, sigma_conditional,
    zeta_conditionals,
};
use apafa::priors::{log_prior_density, sample_prior_state_with};
use apafa::{conditional_log_likelihood, Dataset, Hyperparameters, ModelState, OutcomeKind};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Closed-form and brute-force `(mean, variance)` of one site.
#[derive(Debug, Clone)]
pub struct SiteCheck {
    pub name: String,
    pub closed: (f64, f64),
    pub oracle: (f64, f64),
}

impl SiteCheck {
    /// Agreement to three decimals in both moments.
    pub fn agrees(&self) -> bool {
        (self.closed.0 - self.oracle.0).abs() < 5e-4 && (self.closed.1 - self.oracle.1).abs() < 5e-4
    }
}

pub struct Fixture {
    pub dataset: Dataset,
    pub hyper: Hyperparameters,
    pub design: DMatrix<f64>,
    pub state: ModelState,
}

impl Fixture {
    /// `n = 8`, `p = 3`, two studies, two columns of each kind, all active.
    pub fn new(seed: u64) -> Self {
        let (n, p) = (8, 3);
        let groups: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyper = Hyperparameters::for_dimension(p);
        let placeholder = Dataset::from_groups(DMatrix::zeros(n, p), &groups, 2, OutcomeKind::Continuous).unwrap();
        let design = placeholder.gate_design();
        let mut state = sample_prior_state_with(&hyper, &design, p, 2, 2, &mut rng);
        state.cusp_indicator_eta = vec![2, 2];
        state.tau_eta = vec![1.0, 1.0];
        state.cusp_indicator_phi = vec![2, 2];
        state.tau_phi = vec![1, 1];
        state.psi[(0, 0)] = 1;
        state.psi[(1, 1)] = 1;
        let mean = state.conditional_mean();
        let y = DMatrix::from_fn(n, p, |i, j| mean[(i, j)] + state.sigma_diag[j].sqrt() * rng.sample::<f64, _>(StandardNormal));
        let dataset = placeholder.with_outcomes(y).unwrap();
        Self { dataset, hyper, design, state }
    }

    pub fn log_joint(&self, state: &ModelState) -> f64 {
        log_prior_density(state, &self.hyper, &self.design).unwrap() + conditional_log_likelihood(&self.dataset, state).unwrap()
    }

    fn y(&self) -> &DMatrix<f64> {
        self.dataset.y()
    }
}

/// Moments of `exp(log_density)` by the trapezoid rule on `points` nodes of `[lo, hi]`.
pub fn grid_moments(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let step = (hi - lo) / (points - 1) as f64;
    let peak = (0..points).map(|g| log_density(lo + step * g as f64)).fold(f64::NEG_INFINITY, f64::max);
    let (xs, ws) = grid_weights(&log_density, lo, hi, points, peak);
    let z: f64 = ws.iter().sum();
    let mean = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / z;
    let var = xs.iter().zip(&ws).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z;
    (mean, var)
}

/// Nodes and unnormalized trapezoid weights `exp(log f - offset)`.
fn grid_weights(log_density: &impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize, offset: f64) -> (Vec<f64>, Vec<f64>) {
    let step = (hi - lo) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|g| lo + step * g as f64).collect();
    let ws = xs
        .iter()
        .enumerate()
        .map(|(g, &x)| {
            let edge = if g == 0 || g == points - 1 { 0.5 } else { 1.0 };
            edge * step * (log_density(x) - offset).exp()
        })
        .collect();
    (xs, ws)
}

/// Moments of a positive variable, integrating over `u = ln x` so that heavy
/// right tails are covered.
pub fn log_grid_moments(log_density: impl Fn(f64) -> f64) -> (f64, f64) {
    let on_log = |u: f64| log_density(u.exp()) + u;
    let peak = (0..4001).map(|g| on_log(-20.0 + 0.01 * g as f64)).fold(f64::NEG_INFINITY, f64::max);
    let (us, ws) = grid_weights(&on_log, -20.0, 20.0, 100_001, peak);
    let z: f64 = ws.iter().sum();
    let mean = us.iter().zip(&ws).map(|(u, w)| u.exp() * w).sum::<f64>() / z;
    let var = us.iter().zip(&ws).map(|(u, w)| (u.exp() - mean).powi(2) * w).sum::<f64>() / z;
    (mean, var)
}

/// Conditional of coordinate `h` of a Gaussian vector with mean `m` and
/// covariance `c`, the other coordinates fixed at `x`.
pub fn gaussian_coordinate(m: &[f64], c: &DMatrix<f64>, x: &[f64], h: usize) -> (f64, f64) {
    let q = c.clone().try_inverse().expect("covariance invertible");
    let shift: f64 = (0..m.len()).filter(|&l| l != h).map(|l| q[(h, l)] * (x[l] - m[l])).sum();
    (m[h] - shift / q[(h, h)], 1.0 / q[(h, h)])
}

fn inverse_gamma_moments((shape, rate): (f64, f64)) -> (f64, f64) {
    (rate / (shape - 1.0), rate * rate / ((shape - 1.0).powi(2) * (shape - 2.0)))
}

const LO: f64 = -10.0;
const HI: f64 = 10.0;
const POINTS: usize = 20_001;

/// Every continuous single-site conditional of the fixture, plus the
/// collapsed gate/specific-factor pair.
pub fn all_site_checks(seed: u64) -> Vec<SiteCheck> {
    let fx = Fixture::new(seed);
    let s = &fx.state;
    let mut out = Vec::new();

    let (means, cov) = eta_conditional(s, fx.y()).unwrap();
    for (i, h) in [(3, 1), (0, 0)] {
        let m: Vec<f64> = means.row(i).iter().copied().collect();
        let x: Vec<f64> = s.eta.row(i).iter().copied().collect();
        let closed = gaussian_coordinate(&m, &cov, &x, h);
        let oracle = grid_moments(
            |v| {
                let mut t = s.clone();
                t.eta[(i, h)] = v;
                fx.log_joint(&t)
            },
            LO,
            HI,
            POINTS,
        );
        out.push(SiteCheck { name: format!("eta[{i},{h}]"), closed, oracle });
    }

    for (j, h) in [(2, 0), (1, 1)] {
        let (m, c) = lambda_row_conditional(s, fx.y(), j).unwrap();
        let x: Vec<f64> = s.lambda.row(j).iter().copied().collect();
        let closed = gaussian_coordinate(m.as_slice(), &c, &x, h);
        let oracle = grid_moments(
            |v| {
                let mut t = s.clone();
                t.lambda[(j, h)] = v;
                fx.log_joint(&t)
            },
            LO,
            HI,
            POINTS,
        );
        out.push(SiteCheck { name: format!("lambda[{j},{h}]"), closed, oracle });
    }

    for (j, h) in [(1, 1), (0, 0)] {
        let (m, c) = gamma_row_conditional(s, fx.y(), j).unwrap();
        let x: Vec<f64> = s.gamma.row(j).iter().copied().collect();
        let closed = gaussian_coordinate(m.as_slice(), &c, &x, h);
        let oracle = grid_moments(
            |v| {
                let mut t = s.clone();
                t.gamma[(j, h)] = v;
                fx.log_joint(&t)
            },
            LO,
            HI,
            POINTS,
        );
        out.push(SiteCheck { name: format!("gamma[{j},{h}]"), closed, oracle });
    }

    let sig = sigma_conditional(s, fx.y(), &fx.hyper);
    for j in [0, 2] {
        let oracle = log_grid_moments(|v| {
            let mut t = s.clone();
            t.sigma_diag[j] = v;
            fx.log_joint(&t)
        });
        out.push(SiteCheck { name: format!("sigma2[{j}]"), closed: inverse_gamma_moments(sig[j]), oracle });
    }

    let (zl, zg) = zeta_conditionals(s, &fx.hyper);
    for h in 0..2 {
        let oracle = log_grid_moments(|v| {
            let mut t = s.clone();
            t.zeta_lambda[h] = v;
            fx.log_joint(&t)
        });
        out.push(SiteCheck { name: format!("zeta_lambda[{h}]"), closed: inverse_gamma_moments(zl[h]), oracle });
        let oracle = log_grid_moments(|v| {
            let mut t = s.clone();
            t.zeta_gamma[h] = v;
            fx.log_joint(&t)
        });
        out.push(SiteCheck { name: format!("zeta_gamma[{h}]"), closed: inverse_gamma_moments(zg[h]), oracle });
    }

    for (i, h) in [(0, 0), (5, 1)] {
        out.extend(gate_checks(&fx, i, h));
    }
    out
}

/// `P(ψ_ih = 1)` and the moments of `φ̃_ih` given `ψ_ih = 1`, with the
/// brute-force side integrating `φ̃_ih` out of both branches numerically.
fn gate_checks(fx: &Fixture, i: usize, h: usize) -> Vec<SiteCheck> {
    let s = &fx.state;
    let branch = |on: u8| {
        move |v: f64| {
            let mut t = s.clone();
            t.psi[(i, h)] = on;
            t.phi_tilde[(i, h)] = v;
            fx.log_joint(&t)
        }
    };
    let offset = fx.log_joint(s);
    let (xs, w_on) = grid_weights(&branch(1), LO, HI, POINTS, offset);
    let (_, w_off) = grid_weights(&branch(0), LO, HI, POINTS, offset);
    let z_on: f64 = w_on.iter().sum();
    let z_off: f64 = w_off.iter().sum();
    let mean = xs.iter().zip(&w_on).map(|(x, w)| x * w).sum::<f64>() / z_on;
    let var = xs.iter().zip(&w_on).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z_on;

    let g = gate_conditional(s, fx.y(), &fx.design, i, h);
    vec![
        SiteCheck { name: format!("psi[{i},{h}] on-probability"), closed: (g.prob_on, 0.0), oracle: (z_on / (z_on + z_off), 0.0) },
        SiteCheck { name: format!("phi_tilde[{i},{h}] | on"), closed: (g.mean_on, g.var_on), oracle: (mean, var) },
    ]
}
