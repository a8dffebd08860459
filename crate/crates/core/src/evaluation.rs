//! Accuracy metrics for fitted chains: covariance recovery, activation
//! recovery, posterior summaries and imputation error.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::identifiability::{align_factor_columns, apply_alignment, posterior_mean_activation, Similarity};
use crate::model::{assemble_marginal_covariance, Dataset, ModelState, PosteriorDraws, SyntheticTruth};

/// `tr(EᵀT) / sqrt(tr(EᵀE) tr(TᵀT))`.
pub fn rv_coefficient(e: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<f64> {
    if e.shape() != t.shape() {
        return Err(ApafaError::invalid("RV coefficient needs matrices of the same size"));
    }
    let et = e.dot(t);
    let ee = e.dot(e);
    let tt = t.dot(t);
    if ee == 0.0 || tt == 0.0 {
        return Err(ApafaError::invalid("RV coefficient is undefined for a zero matrix"));
    }
    Ok((et / (ee.sqrt() * tt.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation matrix of a covariance matrix.
pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd: Vec<f64> = (0..cov.nrows()).map(|j| cov[(j, j)].sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |a, b| cov[(a, b)] / (sd[a] * sd[b]))
}

/// RV coefficient between the off-diagonal parts of two matrices.
pub fn offdiagonal_rv(e: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<f64> {
    let strip = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| if a == b { 0.0 } else { m[(a, b)] });
    rv_coefficient(&strip(e), &strip(t))
}

/// Posterior mean of `ΛΛᵀ + Γ diag(ψ̄_s) Γᵀ + Σ` for every group `s`, where
/// `ψ̄_s` averages the effective gates of the group's units within a draw.
pub fn posterior_group_covariances(draws: &PosteriorDraws, groups: &[usize], n_groups: usize) -> Result<Vec<DMatrix<f64>>> {
    let first = draws.states.first().ok_or_else(|| ApafaError::invalid("no posterior draws"))?;
    if groups.len() != first.n() {
        return Err(ApafaError::invalid("one group label per unit is required"));
    }
    let p = first.p();
    let mut acc = vec![DMatrix::zeros(p, p); n_groups];
    let members: Vec<Vec<usize>> = (0..n_groups).map(|s| (0..groups.len()).filter(|&i| groups[i] == s).collect()).collect();
    for state in &draws.states {
        for (s, units) in members.iter().enumerate() {
            let rates: Vec<f64> = (0..state.k())
                .map(|h| units.iter().map(|&i| state.effective_gate(i, h)).sum::<f64>() / units.len().max(1) as f64)
                .collect();
            acc[s] += assemble_marginal_covariance(&state.lambda, &state.gamma, &rates, &state.sigma_diag)?;
        }
    }
    let count = draws.len() as f64;
    Ok(acc.into_iter().map(|m| m / count).collect())
}

/// Posterior mean of `ΛΛᵀ`.
pub fn posterior_shared_covariance(draws: &PosteriorDraws) -> Result<DMatrix<f64>> {
    let first = draws.states.first().ok_or_else(|| ApafaError::invalid("no posterior draws"))?;
    let p = first.p();
    let mut acc = DMatrix::zeros(p, p);
    for state in &draws.states {
        acc += &state.lambda * state.lambda.transpose();
    }
    Ok(acc / draws.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRecovery {
    /// RV(Ω̂_s, Ω_s) per study.
    pub rv_omega: Vec<f64>,
    /// RV(Λ̂Λ̂ᵀ, ΛΛᵀ).
    pub rv_shared: f64,
}

pub fn evaluate_covariance_recovery(draws: &PosteriorDraws, truth: &SyntheticTruth) -> Result<CovarianceRecovery> {
    let estimates = posterior_group_covariances(draws, &truth.group_labels, truth.n_groups())?;
    let rv_omega = estimates
        .iter()
        .zip(&truth.omega_by_group)
        .map(|(e, t)| rv_coefficient(e, t))
        .collect::<Result<Vec<f64>>>()?;
    let rv_shared = rv_coefficient(&posterior_shared_covariance(draws)?, &truth.shared_covariance())?;
    Ok(CovarianceRecovery { rv_omega, rv_shared })
}

/// ROC analysis of activation recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RocOutcome {
    Curve {
        /// `(false positive rate, true positive rate)`, from `(0, 0)` to `(1, 1)`.
        points: Vec<(f64, f64)>,
        auc: f64,
    },
    /// The truth has no active cell.
    NoPositiveClass,
    /// The truth has no inactive cell.
    NoNegativeClass,
}

/// ROC curve of `scores` against binary `labels`; thresholds are every
/// distinct score together with 0 and 1, a cell being called active when its
/// score reaches the threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> RocOutcome {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return RocOutcome::NoPositiveClass;
    }
    if negatives == 0 {
        return RocOutcome::NoNegativeClass;
    }
    let mut thresholds: Vec<f64> = scores.iter().copied().chain([0.0, 1.0]).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    if points.last() != Some(&(1.0, 1.0)) {
        points.push((1.0, 1.0));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1)).sum();
    RocOutcome::Curve { points, auc }
}

/// Posterior activation probabilities, column-aligned to the true pattern
/// when `aligned` (extra columns on either side are compared against empty
/// columns), pooled over cells into one ROC curve.
pub fn psi_recovery_roc(draws: &PosteriorDraws, truth: &SyntheticTruth, aligned: bool) -> Result<RocOutcome> {
    if draws.is_empty() {
        return Err(ApafaError::invalid("no posterior draws"));
    }
    let estimate = posterior_mean_activation(draws);
    let reference = truth.psi.map(f64::from);
    if estimate.nrows() != reference.nrows() {
        return Err(ApafaError::invalid("draws and truth disagree on the number of units"));
    }
    let m = estimate.ncols().max(reference.ncols());
    let estimate = if aligned {
        // Cosine similarity of non-negative columns is non-negative, so the
        // assignment never flips a column.
        let alignment = align_factor_columns(&estimate, &reference, Similarity::Cosine)?;
        apply_alignment(&estimate, &alignment)
    } else {
        pad_columns(&estimate, m)
    };
    let reference = pad_columns(&reference, m);
    let scores: Vec<f64> = estimate.iter().copied().collect();
    let labels: Vec<bool> = reference.iter().map(|&v| v > 0.5).collect();
    Ok(roc_curve(&scores, &labels))
}

fn pad_columns(m: &DMatrix<f64>, width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), width, |i, h| if h < m.ncols() { m[(i, h)] } else { 0.0 })
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Posterior summary of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub d_mean: f64,
    pub d_iqr: f64,
    pub k_mean: f64,
    pub k_iqr: f64,
    /// Posterior mean of the effective gates (`n × max k`), stored row-major.
    pub psi_mean: Vec<Vec<f64>>,
    /// Posterior mean of `Γ` after aligning every draw to the first one.
    pub gamma_mean: Vec<Vec<f64>>,
    /// Posterior mean of `Λ` after aligning every draw to the first one.
    pub lambda_mean: Vec<Vec<f64>>,
}

/// Streaming accumulator behind [`posterior_summary`].
#[derive(Debug, Clone, Default)]
pub struct SummaryAccumulator {
    d_values: Vec<f64>,
    k_values: Vec<f64>,
    psi_sum: Option<DMatrix<f64>>,
    gamma_ref: Option<DMatrix<f64>>,
    lambda_ref: Option<DMatrix<f64>>,
    gamma_sum: Option<DMatrix<f64>>,
    lambda_sum: Option<DMatrix<f64>>,
}

fn add_padded(acc: &mut Option<DMatrix<f64>>, m: &DMatrix<f64>) {
    match acc {
        None => *acc = Some(m.clone()),
        Some(a) => {
            if m.ncols() > a.ncols() {
                *a = pad_columns(a, m.ncols());
            }
            for h in 0..m.ncols() {
                for i in 0..m.nrows() {
                    a[(i, h)] += m[(i, h)];
                }
            }
        }
    }
}

fn aligned_to(reference: &mut Option<DMatrix<f64>>, m: &DMatrix<f64>) -> DMatrix<f64> {
    match reference {
        None => {
            *reference = Some(m.clone());
            m.clone()
        }
        Some(r) => match align_factor_columns(m, r, Similarity::Cosine) {
            Ok(a) => apply_alignment(m, &a),
            Err(_) => m.clone(),
        },
    }
}

impl SummaryAccumulator {
    pub fn push(&mut self, state: &ModelState) {
        let counts = crate::model::active_factor_counts(state);
        self.d_values.push(counts.d_active as f64);
        self.k_values.push(counts.k_active as f64);
        let gates = DMatrix::from_fn(state.n(), state.k(), |i, h| state.effective_gate(i, h));
        add_padded(&mut self.psi_sum, &gates);
        let g = aligned_to(&mut self.gamma_ref, &state.gamma);
        add_padded(&mut self.gamma_sum, &g);
        let l = aligned_to(&mut self.lambda_ref, &state.lambda);
        add_padded(&mut self.lambda_sum, &l);
    }

    pub fn finish(&self) -> PosteriorSummary {
        let n = self.d_values.len();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let rows = |m: &Option<DMatrix<f64>>| -> Vec<Vec<f64>> {
            m.as_ref()
                .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v / n as f64).collect()).collect())
                .unwrap_or_default()
        };
        PosteriorSummary {
            n_draws: n,
            d_mean: mean(&self.d_values),
            d_iqr: quantile(&self.d_values, 0.75) - quantile(&self.d_values, 0.25),
            k_mean: mean(&self.k_values),
            k_iqr: quantile(&self.k_values, 0.75) - quantile(&self.k_values, 0.25),
            psi_mean: rows(&self.psi_sum),
            gamma_mean: rows(&self.gamma_sum),
            lambda_mean: rows(&self.lambda_sum),
        }
    }
}

pub fn posterior_summary(draws: &PosteriorDraws) -> PosteriorSummary {
    let mut acc = SummaryAccumulator::default();
    for state in &draws.states {
        acc.push(state);
    }
    acc.finish()
}

/// Mean squared error of the posterior-predictive means against held-out values.
pub fn imputation_mse(imputed_draws: &[Vec<f64>], heldout: &[f64]) -> Result<f64> {
    if imputed_draws.is_empty() || heldout.is_empty() {
        return Err(ApafaError::invalid("imputation error needs draws and held-out values"));
    }
    let m = heldout.len();
    if imputed_draws.iter().any(|d| d.len() != m) {
        return Err(ApafaError::invalid("every draw must impute every held-out cell"));
    }
    let count = imputed_draws.len() as f64;
    let total: f64 = (0..m)
        .map(|c| {
            let mean = imputed_draws.iter().map(|d| d[c]).sum::<f64>() / count;
            (mean - heldout[c]).powi(2)
        })
        .sum();
    Ok(total / m as f64)
}

/// [`imputation_mse`] for held-out `cells` with true values `heldout`, in any
/// order; each cell is looked up among the chain's imputed cells.
pub fn heldout_imputation_mse(draws: &PosteriorDraws, cells: &[(usize, usize)], heldout: &[f64]) -> Result<f64> {
    if cells.len() != heldout.len() {
        return Err(ApafaError::invalid("one held-out value per cell is required"));
    }
    let index: Vec<usize> = cells
        .iter()
        .map(|c| {
            draws
                .missing_cells
                .iter()
                .position(|m| m == c)
                .ok_or_else(|| ApafaError::invalid(format!("cell {c:?} was not imputed by the chain")))
        })
        .collect::<Result<_>>()?;
    let picked: Vec<Vec<f64>> = draws.imputed.iter().map(|d| index.iter().map(|&k| d[k]).collect()).collect();
    imputation_mse(&picked, heldout)
}

/// `count` observed cells drawn uniformly without replacement, row-major order.
pub fn choose_heldout_cells(dataset: &Dataset, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let observed: Vec<(usize, usize)> = (0..dataset.n())
        .flat_map(|i| (0..dataset.p()).map(move |j| (i, j)))
        .filter(|&(i, j)| !dataset.is_missing(i, j))
        .collect();
    if count > observed.len() {
        return Err(ApafaError::invalid(format!("cannot hold out {count} of {} observed cells", observed.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, observed.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|k| observed[k]).collect())
}

/// Average, over held-out cells, of the sample variance of the observed
/// entries in the cell's column: the error level of a column-mean predictor.
pub fn column_variance_baseline(dataset: &Dataset, cells: &[(usize, usize)]) -> Result<f64> {
    if cells.is_empty() {
        return Err(ApafaError::invalid("no held-out cells"));
    }
    let mut total = 0.0;
    for &(_, j) in cells {
        let obs: Vec<f64> = (0..dataset.n()).filter(|&i| !dataset.is_missing(i, j)).map(|i| dataset.y()[(i, j)]).collect();
        if obs.len() < 2 {
            return Err(ApafaError::invalid(format!("column {j} has fewer than two observed values")));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        total += obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (obs.len() - 1) as f64;
    }
    Ok(total / cells.len() as f64)
}

/// Mean effective activation of each column within each group (`S × k`).
pub fn group_activation_rates(psi_mean: &DMatrix<f64>, groups: &[usize], n_groups: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_groups, psi_mean.ncols(), |s, h| {
        let units: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == s).collect();
        units.iter().map(|&i| psi_mean[(i, h)]).sum::<f64>() / units.len().max(1) as f64
    })
}

/// Columns whose group activation rate reaches `threshold` in exactly two groups.
pub fn jointly_active_columns(psi_mean: &DMatrix<f64>, groups: &[usize], n_groups: usize, threshold: f64) -> Vec<usize> {
    let rates = group_activation_rates(psi_mean, groups, n_groups);
    (0..rates.ncols())
        .filter(|&h| rates.column(h).iter().filter(|&&r| r >= threshold).count() == 2)
        .collect()
}

/// For every true specific column active in exactly two studies: does the
/// estimated column aligned to it switch on more often in both of those
/// studies than in any other study?
pub fn partial_sharing_recovered(draws: &PosteriorDraws, truth: &SyntheticTruth) -> Result<Vec<bool>> {
    if draws.is_empty() {
        return Err(ApafaError::invalid("no posterior draws"));
    }
    let estimate = posterior_mean_activation(draws);
    let reference = truth.psi.map(f64::from);
    if estimate.nrows() != reference.nrows() {
        return Err(ApafaError::invalid("draws and truth disagree on the number of units"));
    }
    let alignment = align_factor_columns(&estimate, &reference, Similarity::Cosine)?;
    let aligned = apply_alignment(&estimate, &alignment);
    let n_groups = truth.n_groups();
    let true_rates = group_activation_rates(&reference, &truth.group_labels, n_groups);
    let rates = group_activation_rates(&aligned, &truth.group_labels, n_groups);
    Ok((0..reference.ncols())
        .filter_map(|h| {
            let support: Vec<bool> = (0..n_groups).map(|s| true_rates[(s, h)] > 0.5).collect();
            if support.iter().filter(|&&b| b).count() != 2 {
                return None;
            }
            let inside = (0..n_groups).filter(|&s| support[s]).map(|s| rates[(s, h)]).fold(f64::INFINITY, f64::min);
            let outside = (0..n_groups).filter(|&s| !support[s]).map(|s| rates[(s, h)]).fold(0.0, f64::max);
            Some(inside > outside)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DrawMeta, Hyperparameters};
    use crate::priors::sample_prior_state_with;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn draws_of(states: Vec<ModelState>) -> PosteriorDraws {
        let derived = states.iter().map(crate::model::active_factor_counts).collect();
        PosteriorDraws {
            states,
            derived,
            missing_cells: vec![],
            imputed: vec![],
            meta: DrawMeta { seed: 0, iterations: 0, burn_in: 0, thinning: 1, runtime_micros: 0 },
        }
    }

    #[test]
    fn rv_hand_values() {
        let e = DMatrix::identity(2, 2);
        let t = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert!((rv_coefficient(&e, &t).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rv_coefficient(&t, &t).unwrap(), 1.0);
        assert!((rv_coefficient(&(3.5 * &e), &t).unwrap() - rv_coefficient(&e, &t).unwrap()).abs() < 1e-15);
        assert!(rv_coefficient(&DMatrix::zeros(2, 2), &t).is_err());
        assert!(rv_coefficient(&DMatrix::identity(3, 3), &t).is_err());
    }

    #[test]
    fn rv_is_symmetric_and_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (e, t) = (&a * a.transpose(), &b * b.transpose());
            let q = DMatrix::from_fn(5, 5, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
            let base = rv_coefficient(&e, &t).unwrap();
            assert!((base - rv_coefficient(&t, &e).unwrap()).abs() < 1e-15);
            let rot = rv_coefficient(&(&q * &e * q.transpose()), &(&q * &t * q.transpose())).unwrap();
            assert!((base - rot).abs() < 1e-10);
        }
    }

    #[test]
    fn roc_perfect_and_random() {
        let labels = vec![true, false, true, false, false];
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
        match roc_curve(&scores, &labels) {
            RocOutcome::Curve { auc, .. } => assert_eq!(auc, 1.0),
            other => panic!("{other:?}"),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut aucs = Vec::new();
        for _ in 0..20 {
            let labels: Vec<bool> = (0..300).map(|_| rng.random()).collect();
            let scores: Vec<f64> = (0..300).map(|_| rng.random()).collect();
            if let RocOutcome::Curve { auc, .. } = roc_curve(&scores, &labels) {
                aucs.push(auc);
            }
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!((mean - 0.5).abs() < 0.1);
        assert_eq!(roc_curve(&[0.2, 0.4], &[false, false]), RocOutcome::NoPositiveClass);
    }

    #[test]
    fn roc_auc_equals_pairwise_ranking_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels: Vec<bool> = (0..80).map(|_| rng.random()).collect();
        let scores: Vec<f64> = (0..80).map(|_| (rng.random::<f64>() * 5.0).floor() / 4.0).collect();
        let RocOutcome::Curve { auc, .. } = roc_curve(&scores, &labels) else { panic!() };
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, &la) in labels.iter().enumerate() {
            for (b, &lb) in labels.iter().enumerate() {
                if la && !lb {
                    pairs += 1.0;
                    wins += if scores[a] > scores[b] { 1.0 } else if scores[a] == scores[b] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn quantiles_by_hand() {
        let v = [1.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.0);
        assert_eq!(quantile(&v, 0.75), 2.5);
        assert_eq!(median(&v), 1.5);
        assert_eq!(quantile(&[3.0; 5], 0.75) - quantile(&[3.0; 5], 0.25), 0.0);
    }

    fn prior_states(count: usize, seed: u64) -> Vec<ModelState> {
        let hyper = Hyperparameters::for_dimension(4);
        let design = DMatrix::from_fn(9, 3, |i, c| f64::from(u8::from(i % 3 == c)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| sample_prior_state_with(&hyper, &design, 4, 3, 3, &mut rng)).collect()
    }

    #[test]
    fn streaming_and_batch_summaries_agree() {
        let states = prior_states(6, 4);
        let batch = posterior_summary(&draws_of(states.clone()));
        let mut acc = SummaryAccumulator::default();
        for s in &states {
            acc.push(s);
        }
        assert_eq!(acc.finish(), batch);
    }

    #[test]
    fn constant_chain_has_no_spread() {
        let state = prior_states(1, 5).remove(0);
        let summary = posterior_summary(&draws_of(vec![state.clone(); 4]));
        assert_eq!(summary.d_iqr, 0.0);
        assert_eq!(summary.k_iqr, 0.0);
        assert_eq!(summary.gamma_mean[0][0], state.gamma[(0, 0)]);
    }

    #[test]
    fn replicated_truth_scores_one() {
        let mut state = prior_states(1, 6).remove(0);
        state.tau_phi = vec![1; 3];
        state.cusp_indicator_phi = vec![3; 3];
        let groups: Vec<usize> = (0..9).map(|i| i % 3).collect();
        state.psi = DMatrix::from_fn(9, 3, |i, h| u8::from(groups[i] == h));
        let rates: Vec<Vec<f64>> = (0..3).map(|s| (0..3).map(|h| f64::from(u8::from(s == h))).collect()).collect();
        let truth = SyntheticTruth {
            lambda: state.lambda.clone(),
            gamma: state.gamma.clone(),
            psi: state.psi.clone(),
            sigma_diag: state.sigma_diag.clone(),
            omega_by_group: rates
                .iter()
                .map(|r| assemble_marginal_covariance(&state.lambda, &state.gamma, r, &state.sigma_diag).unwrap())
                .collect(),
            group_labels: groups,
        };
        let draws = draws_of(vec![state; 3]);
        let rec = evaluate_covariance_recovery(&draws, &truth).unwrap();
        assert!(rec.rv_omega.iter().all(|&r| (r - 1.0).abs() < 1e-12));
        assert!((rec.rv_shared - 1.0).abs() < 1e-12);
        let RocOutcome::Curve { auc, .. } = psi_recovery_roc(&draws, &truth, true).unwrap() else { panic!() };
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn imputation_error_cases() {
        let held = vec![1.0, -2.0, 0.5];
        assert_eq!(imputation_mse(&[held.clone(), held.clone()], &held).unwrap(), 0.0);
        let zeros = vec![vec![0.0; 3]];
        let expected = held.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((imputation_mse(&zeros, &held).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn joint_columns_detected() {
        let groups = vec![0, 0, 1, 1, 2, 2];
        let psi = DMatrix::from_row_slice(6, 2, &[1.0, 0.0, 0.9, 0.1, 0.0, 0.8, 0.1, 0.9, 0.0, 0.7, 0.0, 0.6]);
        assert_eq!(jointly_active_columns(&psi, &groups, 3, 0.5), vec![1]);
    }

    #[test]
    fn partial_sharing_found_in_a_permuted_exact_fit() {
        let mut state = prior_states(1, 7).remove(0);
        state.tau_phi = vec![1; 3];
        state.cusp_indicator_phi = vec![3; 3];
        let groups: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let supports: [&[usize]; 3] = [&[0], &[1], &[1, 2]];
        let truth_psi = DMatrix::from_fn(9, 3, |i, h| u8::from(supports[h].contains(&groups[i])));
        // estimate stores the columns in reverse order
        state.psi = DMatrix::from_fn(9, 3, |i, h| truth_psi[(i, 2 - h)]);
        let truth = SyntheticTruth {
            lambda: state.lambda.clone(),
            gamma: state.gamma.clone(),
            psi: truth_psi,
            sigma_diag: state.sigma_diag.clone(),
            omega_by_group: vec![DMatrix::identity(state.p(), state.p()); 3],
            group_labels: groups,
        };
        assert_eq!(partial_sharing_recovered(&draws_of(vec![state.clone()]), &truth).unwrap(), vec![true]);
        // switch the joint column on in the excluded study as well
        for i in (0..9).step_by(3) {
            state.psi[(i, 0)] = 1;
        }
        assert_eq!(partial_sharing_recovered(&draws_of(vec![state]), &truth).unwrap(), vec![false]);
    }

    #[test]
    fn heldout_cells_are_distinct_observed_and_reproducible() {
        let mut y = DMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64);
        y[(2, 1)] = f64::NAN;
        let data = Dataset::from_groups(y, &[0, 0, 0, 1, 1, 1], 2, crate::model::OutcomeKind::Continuous).unwrap();
        let cells = choose_heldout_cells(&data, 17, 5).unwrap();
        assert_eq!(cells.len(), 17);
        assert!(!cells.contains(&(2, 1)));
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(choose_heldout_cells(&data, 4, 5).unwrap(), choose_heldout_cells(&data, 4, 5).unwrap());
        assert!(choose_heldout_cells(&data, 18, 5).is_err());
    }
}
