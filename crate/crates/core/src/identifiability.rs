//! Identifiability checks for the specific part and column alignment of
//! factor estimates.
//!
//! A specific factor that is switched on for every unit is indistinguishable
//! from a shared one ("information switching"). The loadings `Γ` and the
//! distinct gate patterns `Ψ*` are recoverable from the per-pattern matrices
//! `W*_s = Γ diag(ψ*_s) Γᵀ` when `Γ` has full column rank and `k < p(p+1)/2`;
//! when in addition all columns of `Ψ*` differ, `Γ` is pinned down up to a
//! signed permutation of its columns.

use nalgebra::{DMatrix, DVector};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::model::PosteriorDraws;

/// Largest admissible number of specific columns, `p(p+1)/2 - 1`.
pub fn truncation_bound(p: usize) -> usize {
    (p * (p + 1) / 2).saturating_sub(1)
}

/// Upper bound `α / (p(p+1)/2)` on the prior probability that the number of
/// active specific columns exceeds `p(p+1)/2`, clamped to `[0, 1]`.
pub fn switching_prior_bound(alpha_phi: f64, p: usize) -> f64 {
    let half = (p * (p + 1) / 2) as f64;
    if half == 0.0 {
        return 1.0;
    }
    (alpha_phi / half).clamp(0.0, 1.0)
}

/// Rank from singular values with tolerance `max(rows, cols) · ε · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    pub holds: bool,
    pub rank: usize,
    /// `p(p+1)/2`; the column count must stay strictly below it.
    pub bound: usize,
}

/// Full column rank of `Γ` and `k < p(p+1)/2`.
pub fn check_rank_condition(gamma: &DMatrix<f64>) -> RankCheck {
    let (p, k) = gamma.shape();
    let rank = numerical_rank(gamma);
    let bound = p * (p + 1) / 2;
    RankCheck { holds: rank == k && k < bound, rank, bound }
}

/// Distinct rows of `Ψ` in order of first appearance.
pub fn distinct_patterns(psi: &DMatrix<u8>) -> DMatrix<u8> {
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for i in 0..psi.nrows() {
        let row: Vec<u8> = psi.row(i).iter().copied().collect();
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    DMatrix::from_fn(rows.len(), psi.ncols(), |s, h| rows[s][h])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NrspcCheck {
    pub holds: bool,
    pub duplicate_pairs: Vec<(usize, usize)>,
}

/// All columns of `Ψ*` pairwise distinct.
pub fn check_nrspc(psi_star: &DMatrix<u8>) -> NrspcCheck {
    let k = psi_star.ncols();
    let mut duplicate_pairs = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if psi_star.column(a) == psi_star.column(b) {
                duplicate_pairs.push((a, b));
            }
        }
    }
    NrspcCheck { holds: duplicate_pairs.is_empty(), duplicate_pairs }
}

/// `Γ diag(ψ) Γᵀ`.
pub fn gated_covariance(gamma: &DMatrix<f64>, psi_row: &[f64]) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |j, h| gamma[(j, h)] * psi_row[h]);
    scaled * gamma.transpose()
}

fn half_vectorize(m: &DMatrix<f64>) -> DVector<f64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for l in j..p {
            out.push(m[(j, l)]);
        }
    }
    DVector::from_vec(out)
}

/// Design of the linear system `G x = vech(W*_s)`: one row per pair `j ≤ l`,
/// entries `γ_jh γ_lh`.
pub fn pattern_system(gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, k) = gamma.shape();
    let mut g = DMatrix::zeros(p * (p + 1) / 2, k);
    let mut r = 0;
    for j in 0..p {
        for l in j..p {
            for h in 0..k {
                g[(r, h)] = gamma[(j, h)] * gamma[(l, h)];
            }
            r += 1;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchResistance {
    pub unique: bool,
    pub rank: usize,
    /// Largest least-squares residual norm over patterns.
    pub residual: f64,
    /// Recovered patterns, one row per row of `Ψ*`.
    pub recovered: Vec<Vec<f64>>,
}

/// Rebuilds every row of `Ψ*` from `W*_s` alone and certifies uniqueness:
/// `rank(G) = k`, residual below `1e-8` and recovered values equal to `Ψ*`.
pub fn verify_switch_resistance(gamma: &DMatrix<f64>, psi_star: &DMatrix<u8>) -> Result<SwitchResistance> {
    let k = gamma.ncols();
    if psi_star.ncols() != k {
        return Err(ApafaError::invalid("pattern matrix and loadings disagree on k"));
    }
    let g = pattern_system(gamma);
    let rank = numerical_rank(&g);
    let svd = g.clone().svd(true, true);
    let mut residual: f64 = 0.0;
    let mut max_err: f64 = 0.0;
    let mut recovered = Vec::with_capacity(psi_star.nrows());
    for s in 0..psi_star.nrows() {
        let target: Vec<f64> = psi_star.row(s).iter().map(|&v| f64::from(v)).collect();
        let w = half_vectorize(&gated_covariance(gamma, &target));
        let x = svd
            .solve(&w, 1e-12)
            .map_err(|e| ApafaError::numeric("switch_resistance", e.to_string()))?;
        residual = residual.max((&g * &x - &w).norm());
        for h in 0..k {
            max_err = max_err.max((x[h] - target[h]).abs());
        }
        recovered.push(x.iter().copied().collect());
    }
    Ok(SwitchResistance { unique: rank == k && residual < 1e-8 && max_err < 1e-8, rank, residual, recovered })
}

/// Largest Frobenius distance between `Γ_a diag(ψ*_a,s) Γ_aᵀ` and
/// `Γ_b diag(ψ*_b,s) Γ_bᵀ` over pattern rows `s`.
pub fn specific_structure_shift(
    gamma_a: &DMatrix<f64>,
    psi_a: &DMatrix<u8>,
    gamma_b: &DMatrix<f64>,
    psi_b: &DMatrix<u8>,
) -> f64 {
    let rows = psi_a.nrows().min(psi_b.nrows());
    (0..rows)
        .map(|s| {
            let ra: Vec<f64> = psi_a.row(s).iter().map(|&v| f64::from(v)).collect();
            let rb: Vec<f64> = psi_b.row(s).iter().map(|&v| f64::from(v)).collect();
            (gated_covariance(gamma_a, &ra) - gated_covariance(gamma_b, &rb)).norm()
        })
        .fold(0.0, f64::max)
}

/// Specific columns whose posterior-mean effective gate exceeds `threshold`
/// for every unit, i.e. columns behaving like shared factors.
pub fn detect_information_switching(draws: &PosteriorDraws, threshold: f64) -> Vec<usize> {
    let means = posterior_mean_activation(draws);
    (0..means.ncols())
        .filter(|&h| means.nrows() > 0 && means.column(h).iter().all(|&m| m > threshold))
        .collect()
}

/// `n × max k` matrix of posterior-mean effective gates; columns a draw does
/// not have count as switched off.
pub fn posterior_mean_activation(draws: &PosteriorDraws) -> DMatrix<f64> {
    let Some(first) = draws.states.first() else {
        return DMatrix::zeros(0, 0);
    };
    let n = first.n();
    let k = draws.states.iter().map(|s| s.k()).max().unwrap_or(0);
    let mut acc = DMatrix::zeros(n, k);
    for state in &draws.states {
        for h in 0..state.k() {
            for i in 0..n {
                acc[(i, h)] += state.effective_gate(i, h);
            }
        }
    }
    acc / draws.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Similarity {
    /// Absolute Pearson correlation (factor scores, activation matrices).
    Correlation,
    /// Absolute cosine similarity (loading matrices).
    Cosine,
}

/// Column matching of an estimate to a reference.
///
/// Aligned column `r` is `signs[r] · estimate[:, permutation[r]]`. Both sides
/// are padded to `m = max(k_est, k_ref)` columns, so `permutation` is a
/// bijection on `0..m`; indices at or beyond the estimate width stand for
/// empty columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// Sum of matched absolute similarities.
    pub score: f64,
}

fn signed_similarity(a: &[f64], b: &[f64], kind: Similarity) -> f64 {
    let (ma, mb) = match kind {
        Similarity::Correlation => (
            a.iter().sum::<f64>() / a.len() as f64,
            b.iter().sum::<f64>() / b.len() as f64,
        ),
        Similarity::Cosine => (0.0, 0.0),
    };
    let mut num = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        num += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
        return 0.0;
    }
    num / (na.sqrt() * nb.sqrt())
}

const WEIGHT_SCALE: f64 = 1e9;

/// Maximum-weight assignment of estimate columns to reference columns.
pub fn align_factor_columns(
    estimate: &DMatrix<f64>,
    reference: &DMatrix<f64>,
    kind: Similarity,
) -> Result<AlignmentResult> {
    if estimate.nrows() != reference.nrows() {
        return Err(ApafaError::invalid("estimate and reference must have the same number of rows"));
    }
    let (ke, kr) = (estimate.ncols(), reference.ncols());
    let m = ke.max(kr);
    if m == 0 {
        return Ok(AlignmentResult { permutation: vec![], signs: vec![], score: 0.0 });
    }
    let cols_e: Vec<Vec<f64>> = (0..ke).map(|c| estimate.column(c).iter().copied().collect()).collect();
    let cols_r: Vec<Vec<f64>> = (0..kr).map(|c| reference.column(c).iter().copied().collect()).collect();
    let mut sim = vec![vec![0.0; m]; m];
    let mut weights = Matrix::new(m, m, 0i64);
    for r in 0..kr {
        for e in 0..ke {
            let s = signed_similarity(&cols_e[e], &cols_r[r], kind);
            sim[r][e] = s;
            weights[(r, e)] = (s.abs() * WEIGHT_SCALE).round() as i64;
        }
    }
    let (_, assignment) = kuhn_munkres(&weights);
    let mut score = 0.0;
    let signs: Vec<f64> = (0..m)
        .map(|r| {
            let s = sim[r][assignment[r]];
            score += s.abs();
            if s < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    Ok(AlignmentResult { permutation: assignment, signs, score })
}

/// The estimate with its columns reordered and re-signed; `m` columns,
/// empty slots filled with zeros.
pub fn apply_alignment(estimate: &DMatrix<f64>, alignment: &AlignmentResult) -> DMatrix<f64> {
    let m = alignment.permutation.len();
    DMatrix::from_fn(estimate.nrows(), m, |i, r| {
        let e = alignment.permutation[r];
        if e < estimate.ncols() {
            alignment.signs[r] * estimate[(i, e)]
        } else {
            0.0
        }
    })
}

/// `k × k` signed permutation matrix with `P[perm[h], h] = signs[h]`.
pub fn signed_permutation_matrix(perm: &[usize], signs: &[f64]) -> DMatrix<f64> {
    let k = perm.len();
    let mut p = DMatrix::zeros(k, k);
    for h in 0..k {
        p[(perm[h], h)] = signs[h];
    }
    p
}

/// Rotation by `angle` in the plane of columns `a` and `b`.
pub fn givens_rotation(k: usize, a: usize, b: usize, angle: f64) -> DMatrix<f64> {
    let mut g = DMatrix::identity(k, k);
    let (s, c) = angle.sin_cos();
    g[(a, a)] = c;
    g[(b, b)] = c;
    g[(a, b)] = -s;
    g[(b, a)] = s;
    g
}
