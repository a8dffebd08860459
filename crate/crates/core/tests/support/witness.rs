//! Random instances for the identifiability checks, and an independent way of
//! reading the gate pattern back from a gated covariance.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gaussian `p × k` loadings; full column rank with probability one.
pub fn random_loadings(p: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, k, |_, _| rng.sample(StandardNormal))
}

/// `rows × k` binary patterns with pairwise distinct columns.
pub fn random_distinct_patterns(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<u8> {
    assert!(k <= 1usize << rows, "not enough distinct columns");
    let mut codes: Vec<u32> = (0..1u32 << rows).collect();
    codes.shuffle(rng);
    DMatrix::from_fn(rows, k, |s, h| ((codes[h] >> s) & 1) as u8)
}

/// Any binary pattern matrix.
pub fn random_patterns(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<u8> {
    DMatrix::from_fn(rows, k, |_, _| u8::from(rng.random_bool(0.5)))
}

/// Reads `diag(ψ)` back as `A W Aᵀ` with `A = (ΓᵀΓ)⁻¹Γᵀ`, the left inverse
/// of a full-rank `Γ`.
pub fn pattern_by_left_inverse(gamma: &DMatrix<f64>, w: &DMatrix<f64>) -> Vec<f64> {
    let gram = gamma.transpose() * gamma;
    let left = gram.try_inverse().expect("full column rank") * gamma.transpose();
    let d = &left * w * left.transpose();
    (0..gamma.ncols()).map(|h| d[(h, h)]).collect()
}

/// `Γ diag(ψ) Γᵀ` written out as a sum of rank-one terms.
pub fn gated_covariance_by_sum(gamma: &DMatrix<f64>, psi_row: &[u8]) -> DMatrix<f64> {
    let p = gamma.nrows();
    let mut w = DMatrix::zeros(p, p);
    for (h, &on) in psi_row.iter().enumerate() {
        if on == 1 {
            let c = gamma.column(h);
            w += &c * c.transpose();
        }
    }
    w
}

/// Random permutation of `0..k` and random signs.
pub fn random_signed_permutation(k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    let signs = (0..k).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    (perm, signs)
}

/// Columns of `psi` reordered so that new column `h` is old column `perm[h]`.
pub fn permute_columns(psi: &DMatrix<u8>, perm: &[usize]) -> DMatrix<u8> {
    DMatrix::from_fn(psi.nrows(), perm.len(), |s, h| psi[(s, perm[h])])
}

/// A pair of columns whose patterns differ in some row.
pub fn differing_pair(psi: &DMatrix<u8>) -> Option<(usize, usize)> {
    let k = psi.ncols();
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).find(|&(a, b)| psi.column(a) != psi.column(b))
}
