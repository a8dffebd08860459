//! Domain types of the model and the deterministic quantities derived from them.
//!
//! A unit `i` with outcome `y_i` follows
//! `y_i = Λ η_i + Γ φ_i + ε_i`, `ε_i ~ N(0, diag(σ²))`, where the specific
//! factors are gated: `φ_ih = τ^φ_h ψ_ih φ̃_ih`. Integrating out `η_i` and `φ̃_i`
//! gives the per-unit covariance `Ω_i = ΛΛᵀ + Γ diag(ψ_i) Γᵀ + diag(σ²)`.
//!
//! The gate `ψ_ih` only takes effect for globally active specific columns
//! (`τ^φ_h = 1`); every function here works with the *effective* gate
//! `τ^φ_h ψ_ih`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ApafaError, Result};
use crate::linalg::gaussian_log_density;

/// Scale of a shared column in the slab regime.
pub const SLAB_SCALE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// Observed outcomes together with the group design and missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    z: Option<DMatrix<f64>>,
    missing: DMatrix<bool>,
    kind: OutcomeKind,
    group_index: Vec<usize>,
    group_labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from its raw parts, checking every invariant.
    ///
    /// `x` must hold one-hot rows; masked cells of `y` may hold any value.
    pub fn new(
        y: DMatrix<f64>,
        x: DMatrix<f64>,
        z: Option<DMatrix<f64>>,
        missing: DMatrix<bool>,
        kind: OutcomeKind,
    ) -> Result<Self> {
        let (n, p) = y.shape();
        if x.nrows() != n {
            return Err(ApafaError::invalid(format!(
                "group design has {} rows, outcomes have {n}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(ApafaError::invalid("group design needs at least one group"));
        }
        if missing.shape() != (n, p) {
            return Err(ApafaError::invalid("missing mask shape differs from outcomes"));
        }
        if let Some(z) = &z {
            if z.nrows() != n {
                return Err(ApafaError::invalid("covariate rows differ from outcome rows"));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(ApafaError::invalid("covariates must be finite"));
            }
        }
        let mut group_index = Vec::with_capacity(n);
        for i in 0..n {
            let row = x.row(i);
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(ApafaError::invalid(format!("group design row {i} is not binary")));
            }
            let ones: Vec<usize> = (0..x.ncols()).filter(|&s| row[s] == 1.0).collect();
            if ones.len() != 1 {
                return Err(ApafaError::invalid(format!(
                    "group design row {i} sums to {}, expected 1",
                    ones.len()
                )));
            }
            group_index.push(ones[0]);
        }
        for i in 0..n {
            for j in 0..p {
                if missing[(i, j)] {
                    continue;
                }
                let v = y[(i, j)];
                if !v.is_finite() {
                    return Err(ApafaError::invalid(format!(
                        "observed cell ({i}, {j}) is not finite"
                    )));
                }
                if kind == OutcomeKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(ApafaError::invalid(format!(
                        "binary outcome cell ({i}, {j}) equals {v}"
                    )));
                }
            }
        }
        let group_labels = (0..x.ncols()).map(|s| (s + 1).to_string()).collect();
        Ok(Self {
            y,
            x,
            z,
            missing,
            kind,
            group_index,
            group_labels,
        })
    }

    /// Convenience constructor from integer group memberships `0..n_groups`.
    pub fn from_groups(
        y: DMatrix<f64>,
        groups: &[usize],
        n_groups: usize,
        kind: OutcomeKind,
    ) -> Result<Self> {
        let n = y.nrows();
        if groups.len() != n {
            return Err(ApafaError::invalid("one group label per row is required"));
        }
        let mut x = DMatrix::zeros(n, n_groups);
        for (i, &g) in groups.iter().enumerate() {
            if g >= n_groups {
                return Err(ApafaError::invalid(format!("group {g} out of range")));
            }
            x[(i, g)] = 1.0;
        }
        let missing = DMatrix::from_fn(n, y.ncols(), |i, j| y[(i, j)].is_nan());
        Self::new(y, x, None, missing, kind)
    }

    pub fn with_covariates(mut self, z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() != self.n() {
            return Err(ApafaError::invalid("covariate rows differ from outcome rows"));
        }
        self.z = Some(z);
        Ok(self)
    }

    pub fn with_group_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_groups() {
            return Err(ApafaError::invalid("one label per group is required"));
        }
        self.group_labels = labels;
        Ok(self)
    }

    pub fn with_missing(mut self, missing: DMatrix<bool>) -> Result<Self> {
        if missing.shape() != self.y.shape() {
            return Err(ApafaError::invalid("missing mask shape differs from outcomes"));
        }
        self.missing = missing;
        Ok(self)
    }

    /// Same design and missingness with a new outcome matrix.
    pub fn with_outcomes(&self, y: DMatrix<f64>) -> Result<Self> {
        if y.shape() != self.y.shape() {
            return Err(ApafaError::invalid("new outcomes must keep the same shape"));
        }
        let mut out = Self::new(y, self.x.clone(), self.z.clone(), self.missing.clone(), self.kind)?;
        out.group_labels = self.group_labels.clone();
        Ok(out)
    }

    /// Masks the given observed cells, returning the new dataset and the values removed.
    pub fn mask_cells(&self, cells: &[(usize, usize)]) -> Result<(Dataset, Vec<f64>)> {
        let mut out = self.clone();
        let mut held = Vec::with_capacity(cells.len());
        for &(i, j) in cells {
            if i >= self.n() || j >= self.p() {
                return Err(ApafaError::invalid(format!("cell ({i}, {j}) out of range")));
            }
            if out.missing[(i, j)] {
                return Err(ApafaError::invalid(format!("cell ({i}, {j}) already missing")));
            }
            held.push(out.y[(i, j)]);
            out.missing[(i, j)] = true;
            out.y[(i, j)] = f64::NAN;
        }
        Ok((out, held))
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> Option<&DMatrix<f64>> {
        self.z.as_ref()
    }

    pub fn missing(&self) -> &DMatrix<bool> {
        &self.missing
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_groups(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn groups(&self) -> &[usize] {
        &self.group_index
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &g in &self.group_index {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[(i, j)]
    }

    /// Row-major list of masked cells.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for i in 0..self.n() {
            for j in 0..self.p() {
                if self.missing[(i, j)] {
                    cells.push((i, j));
                }
            }
        }
        cells
    }

    /// Gate design `[X | Z]`, one row per unit.
    pub fn gate_design(&self) -> DMatrix<f64> {
        match &self.z {
            None => self.x.clone(),
            Some(z) => {
                let (n, s, q) = (self.n(), self.n_groups(), z.ncols());
                DMatrix::from_fn(n, s + q, |i, c| if c < s { self.x[(i, c)] } else { z[(i, c - s)] })
            }
        }
    }
}

/// Adaptation probability `exp(-a0 - a1 t)` of the truncation update at iteration `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptSchedule {
    pub a0: f64,
    pub a1: f64,
}

impl Default for AdaptSchedule {
    fn default() -> Self {
        Self { a0: 1.0, a1: 5e-4 }
    }
}

impl AdaptSchedule {
    pub fn probability(&self, iteration: usize) -> f64 {
        (-self.a0 - self.a1 * iteration as f64).exp()
    }
}

/// Prior constants and truncation levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub alpha_eta: f64,
    pub alpha_phi: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// `c` in the gate-coefficient prior variance `c / n`.
    pub beta_prior_scale_numerator: f64,
    pub d_max: usize,
    pub k_max: usize,
    pub spike_value: f64,
    pub adapt_schedule: AdaptSchedule,
}

impl Hyperparameters {
    /// Defaults for `p` outcome variables: truncation at `min(p, 20)`, capped
    /// for the specific part at `p(p+1)/2 - 1`.
    pub fn for_dimension(p: usize) -> Self {
        let cap = crate::identifiability::truncation_bound(p);
        Self {
            alpha_eta: 1.0,
            alpha_phi: 4.0,
            a_lambda: 2.0,
            b_lambda: 2.0,
            a_gamma: 2.0,
            b_gamma: 2.0,
            a_sigma: 2.0,
            b_sigma: 2.0,
            beta_prior_scale_numerator: 1.0,
            d_max: p.clamp(1, 20),
            k_max: p.min(20).min(cap),
            spike_value: 1e-4,
            adapt_schedule: AdaptSchedule::default(),
        }
    }

    /// Prior variance of every gate coefficient for `n` units.
    pub fn beta_prior_variance(&self, n: usize) -> f64 {
        self.beta_prior_scale_numerator / n.max(1) as f64
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let positives = [
            ("alpha_eta", self.alpha_eta),
            ("alpha_phi", self.alpha_phi),
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("beta_prior_scale_numerator", self.beta_prior_scale_numerator),
            ("spike_value", self.spike_value),
        ];
        for (name, v) in positives {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ApafaError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.spike_value >= SLAB_SCALE {
            return Err(ApafaError::invalid("spike_value must be below the slab scale 1"));
        }
        if self.d_max < 1 {
            return Err(ApafaError::invalid("d_max must be at least 1"));
        }
        let cap = crate::identifiability::truncation_bound(p);
        if self.k_max > cap {
            return Err(ApafaError::invalid(format!(
                "k_max = {} exceeds p(p+1)/2 - 1 = {cap}",
                self.k_max
            )));
        }
        if self.adapt_schedule.a0 < 0.0 || self.adapt_schedule.a1 < 0.0 {
            return Err(ApafaError::invalid("adaptation parameters must be nonnegative"));
        }
        Ok(())
    }
}

/// One full set of latent quantities.
///
/// `psi` stores raw gate indicators; column `h` only reaches the likelihood
/// when `tau_phi[h] == 1`. The factor values actually entering the mean are
/// always derived (`effective_phi`), never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub lambda: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub phi_tilde: DMatrix<f64>,
    pub psi: DMatrix<u8>,
    /// `(S + q) × k` gate coefficients: group rows first, covariate rows after.
    pub beta: DMatrix<f64>,
    pub sigma_diag: DVector<f64>,
    pub zeta_lambda: Vec<f64>,
    pub zeta_gamma: Vec<f64>,
    pub tau_phi: Vec<u8>,
    pub tau_eta: Vec<f64>,
    pub stick_v_eta: Vec<f64>,
    pub stick_v_phi: Vec<f64>,
    /// Stick component per shared column; the value `d` stands for "beyond the truncation".
    pub cusp_indicator_eta: Vec<usize>,
    /// Stick component per specific column; the value `k` stands for "beyond the truncation".
    pub cusp_indicator_phi: Vec<usize>,
    pub probit_z: Option<DMatrix<f64>>,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.eta.nrows()
    }

    pub fn p(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn d(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn k(&self) -> usize {
        self.gamma.ncols()
    }

    /// `τ^φ_h ψ_ih` as a float.
    pub fn effective_gate(&self, i: usize, h: usize) -> f64 {
        if self.tau_phi[h] == 1 && self.psi[(i, h)] == 1 {
            1.0
        } else {
            0.0
        }
    }

    /// Row of effective gates for unit `i`.
    pub fn effective_gates(&self, i: usize) -> Vec<f64> {
        (0..self.k()).map(|h| self.effective_gate(i, h)).collect()
    }

    /// `n × k` matrix of `τ^φ_h ψ_ih φ̃_ih`.
    pub fn effective_phi(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |i, h| {
            self.effective_gate(i, h) * self.phi_tilde[(i, h)]
        })
    }

    /// Conditional mean `H Λᵀ + Φ Γᵀ` of the outcomes, `n × p`.
    pub fn conditional_mean(&self) -> DMatrix<f64> {
        &self.eta * self.lambda.transpose() + self.effective_phi() * self.gamma.transpose()
    }

    pub fn is_shared_active(&self, h: usize) -> bool {
        self.tau_eta[h] >= SLAB_SCALE
    }
}

/// Counts of active factor columns in one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveCounts {
    pub d_active: usize,
    pub k_active: usize,
}

/// Generating values behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub lambda: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub psi: DMatrix<u8>,
    pub sigma_diag: DVector<f64>,
    /// Per study: `ΛΛᵀ + Γ diag(ψ̄_s) Γᵀ + Σ`, with `ψ̄_s` the study's mean activation.
    pub omega_by_group: Vec<DMatrix<f64>>,
    /// True study of each unit, `0..S`.
    pub group_labels: Vec<usize>,
}

impl SyntheticTruth {
    pub fn n_groups(&self) -> usize {
        self.omega_by_group.len()
    }

    pub fn shared_covariance(&self) -> DMatrix<f64> {
        &self.lambda * self.lambda.transpose()
    }

    /// `W*_s = Ω*_s - ΛΛᵀ - Σ`, the specific contribution per study.
    pub fn specific_by_group(&self) -> Vec<DMatrix<f64>> {
        let base = self.shared_covariance() + DMatrix::from_diagonal(&self.sigma_diag);
        self.omega_by_group.iter().map(|o| o - &base).collect()
    }
}

/// Bookkeeping attached to a set of posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawMeta {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub runtime_micros: u64,
}

/// Retained states of a chain plus per-draw derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub states: Vec<ModelState>,
    pub derived: Vec<ActiveCounts>,
    /// Cells imputed during sampling (row-major order of the mask).
    pub missing_cells: Vec<(usize, usize)>,
    /// One vector of imputed values per retained draw, aligned with `missing_cells`.
    pub imputed: Vec<Vec<f64>>,
    pub meta: DrawMeta,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Posterior-predictive mean of every imputed cell.
    pub fn imputed_mean(&self) -> Vec<f64> {
        let m = self.missing_cells.len();
        let mut mean = vec![0.0; m];
        if self.imputed.is_empty() {
            return mean;
        }
        for draw in &self.imputed {
            for (acc, v) in mean.iter_mut().zip(draw) {
                *acc += v;
            }
        }
        let count = self.imputed.len() as f64;
        mean.iter_mut().for_each(|v| *v /= count);
        mean
    }
}

/// `Ω_i = ΛΛᵀ + Γ diag(ψ_i) Γᵀ + diag(σ²)`.
///
/// `psi_i` usually holds 0/1 gates; fractional values give the matching mixture average.
pub fn assemble_marginal_covariance(
    lambda: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    psi_i: &[f64],
    sigma_diag: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let p = lambda.nrows();
    if gamma.nrows() != p || sigma_diag.len() != p {
        return Err(ApafaError::invalid(format!(
            "row counts differ: Λ {}, Γ {}, Σ {}",
            p,
            gamma.nrows(),
            sigma_diag.len()
        )));
    }
    if psi_i.len() != gamma.ncols() {
        return Err(ApafaError::invalid(format!(
            "gate vector has {} entries, Γ has {} columns",
            psi_i.len(),
            gamma.ncols()
        )));
    }
    let mut omega = lambda * lambda.transpose();
    for (h, &g) in psi_i.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let col = gamma.column(h);
        omega.ger(g, &col, &col, 1.0);
    }
    for j in 0..p {
        omega[(j, j)] += sigma_diag[j];
    }
    // exact symmetry
    for a in 0..p {
        for b in (a + 1)..p {
            let v = 0.5 * (omega[(a, b)] + omega[(b, a)]);
            omega[(a, b)] = v;
            omega[(b, a)] = v;
        }
    }
    Ok(omega)
}

/// `Ω_i` for unit `i` of a state, using its effective gates.
pub fn unit_covariance(state: &ModelState, i: usize) -> Result<DMatrix<f64>> {
    assemble_marginal_covariance(&state.lambda, &state.gamma, &state.effective_gates(i), &state.sigma_diag)
}

fn check_state_dims(dataset: &Dataset, state: &ModelState) -> Result<()> {
    if state.n() != dataset.n() || state.p() != dataset.p() {
        return Err(ApafaError::invalid(format!(
            "state is {}×{}, dataset is {}×{}",
            state.n(),
            state.p(),
            dataset.n(),
            dataset.p()
        )));
    }
    Ok(())
}

/// `Σ_i log N(y_i; 0, Ω_i)` with the shared and specific factors integrated out.
///
/// Masked coordinates are marginalized by dropping them from `y_i` and `Ω_i`.
pub fn marginal_log_likelihood(dataset: &Dataset, state: &ModelState) -> Result<f64> {
    if dataset.kind() != OutcomeKind::Continuous {
        return Err(ApafaError::invalid("marginal likelihood needs continuous outcomes"));
    }
    check_state_dims(dataset, state)?;
    let p = dataset.p();
    let mut total = 0.0;
    let mut cache: Vec<(Vec<f64>, DMatrix<f64>)> = Vec::new();
    for i in 0..dataset.n() {
        let gates = state.effective_gates(i);
        let omega = match cache.iter().find(|(g, _)| *g == gates) {
            Some((_, o)) => o.clone(),
            None => {
                let o = assemble_marginal_covariance(&state.lambda, &state.gamma, &gates, &state.sigma_diag)?;
                cache.push((gates, o.clone()));
                o
            }
        };
        let observed: Vec<usize> = (0..p).filter(|&j| !dataset.is_missing(i, j)).collect();
        let (x, cov) = if observed.len() == p {
            (dataset.y().row(i).transpose(), omega)
        } else {
            let x = DVector::from_iterator(observed.len(), observed.iter().map(|&j| dataset.y()[(i, j)]));
            let cov = DMatrix::from_fn(observed.len(), observed.len(), |a, b| omega[(observed[a], observed[b])]);
            (x, cov)
        };
        total += gaussian_log_density(&x, &cov).ok_or(ApafaError::NotPositiveDefinite { unit: i })?;
    }
    Ok(total)
}

/// `Σ_i log N(y_i; Λη_i + Γφ_i, diag(σ²))` over observed cells.
///
/// Binary datasets are evaluated on the stored probit latents.
pub fn conditional_log_likelihood(dataset: &Dataset, state: &ModelState) -> Result<f64> {
    check_state_dims(dataset, state)?;
    let response = match dataset.kind() {
        OutcomeKind::Continuous => dataset.y(),
        OutcomeKind::Binary => state
            .probit_z
            .as_ref()
            .ok_or_else(|| ApafaError::invalid("binary dataset needs probit latents in the state"))?,
    };
    if state.sigma_diag.iter().any(|&s| !(s > 0.0)) {
        return Err(ApafaError::invalid("noise variances must be positive"));
    }
    let mean = state.conditional_mean();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for i in 0..dataset.n() {
        for j in 0..dataset.p() {
            if dataset.is_missing(i, j) && dataset.kind() == OutcomeKind::Continuous {
                continue;
            }
            let s2 = state.sigma_diag[j];
            let r = response[(i, j)] - mean[(i, j)];
            total += -0.5 * (ln2pi + s2.ln() + r * r / s2);
        }
    }
    Ok(total)
}

/// Active shared columns (slab regime) and active specific columns
/// (`τ^φ_h = 1` with at least one unit gated on).
pub fn active_factor_counts(state: &ModelState) -> ActiveCounts {
    let d_active = (0..state.d()).filter(|&h| state.is_shared_active(h)).count();
    let k_active = (0..state.k())
        .filter(|&h| state.tau_phi[h] == 1 && state.psi.column(h).iter().any(|&v| v == 1))
        .count();
    ActiveCounts { d_active, k_active }
}

/// One broken invariant of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub index: Option<(usize, usize)>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.index {
            Some((a, b)) => write!(f, "{}[{a},{b}]: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Lists every invariant of `state` (and its consistency with `dataset`) that fails.
pub fn validate_state(state: &ModelState, dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, index: Option<(usize, usize)>, message: String| {
        out.push(Violation { field, index, message });
    };
    let (n, p, d, k) = (state.n(), state.p(), state.d(), state.k());
    let rows_beta = dataset.n_groups() + dataset.n_covariates();

    if n != dataset.n() {
        push("Eta", None, format!("{n} rows, dataset has {}", dataset.n()));
    }
    if p != dataset.p() {
        push("Lambda", None, format!("{p} rows, dataset has {}", dataset.p()));
    }
    if state.gamma.nrows() != p {
        push("Gamma", None, format!("{} rows, expected {p}", state.gamma.nrows()));
    }
    if state.eta.ncols() != d {
        push("Eta", None, format!("{} columns, expected {d}", state.eta.ncols()));
    }
    if state.phi_tilde.shape() != (n, k) {
        push("PhiTilde", None, format!("shape {:?}, expected ({n}, {k})", state.phi_tilde.shape()));
    }
    if state.psi.shape() != (n, k) {
        push("Psi", None, format!("shape {:?}, expected ({n}, {k})", state.psi.shape()));
    }
    if state.beta.shape() != (rows_beta, k) {
        push("Beta", None, format!("shape {:?}, expected ({rows_beta}, {k})", state.beta.shape()));
    }
    if state.sigma_diag.len() != p {
        push("Sigma_diag", None, format!("length {}, expected {p}", state.sigma_diag.len()));
    }
    let lens: [(&'static str, usize, usize); 8] = [
        ("zeta_lambda", state.zeta_lambda.len(), d),
        ("zeta_gamma", state.zeta_gamma.len(), k),
        ("tau_phi", state.tau_phi.len(), k),
        ("tau_eta", state.tau_eta.len(), d),
        ("stick_v_eta", state.stick_v_eta.len(), d),
        ("stick_v_phi", state.stick_v_phi.len(), k),
        ("cusp_indicator_eta", state.cusp_indicator_eta.len(), d),
        ("cusp_indicator_phi", state.cusp_indicator_phi.len(), k),
    ];
    let mut lengths_ok = true;
    for (field, got, want) in lens {
        if got != want {
            lengths_ok = false;
            push(field, None, format!("length {got}, expected {want}"));
        }
    }

    for ((i, h), &v) in iter_indexed(&state.psi) {
        if v > 1 {
            push("Psi", Some((i, h)), format!("entry {v} not in {{0,1}}"));
        }
    }
    for (h, &v) in state.tau_phi.iter().enumerate() {
        if v > 1 {
            push("tau_phi", Some((h, 0)), format!("entry {v} not in {{0,1}}"));
        }
    }
    for (j, &s) in state.sigma_diag.iter().enumerate() {
        if !(s > 0.0 && s.is_finite()) {
            push("Sigma_diag", Some((j, 0)), format!("entry {s} not strictly positive"));
        }
    }
    for (field, values) in [
        ("zeta_lambda", &state.zeta_lambda),
        ("zeta_gamma", &state.zeta_gamma),
        ("tau_eta", &state.tau_eta),
    ] {
        for (h, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                push(field, Some((h, 0)), format!("entry {v} not strictly positive"));
            }
        }
    }
    for (field, values) in [("stick_v_eta", &state.stick_v_eta), ("stick_v_phi", &state.stick_v_phi)] {
        for (h, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v < 1.0) {
                push(field, Some((h, 0)), format!("entry {v} not in (0,1)"));
            }
        }
    }
    if lengths_ok {
        for (h, &z) in state.cusp_indicator_eta.iter().enumerate() {
            if z > d {
                push("cusp_indicator_eta", Some((h, 0)), format!("label {z} exceeds {d}"));
            }
            let slab = z > h;
            let tau = state.tau_eta[h];
            if slab && tau != SLAB_SCALE || !slab && tau >= SLAB_SCALE {
                push("tau_eta", Some((h, 0)), format!("scale {tau} disagrees with label {z}"));
            }
        }
        for (h, &z) in state.cusp_indicator_phi.iter().enumerate() {
            if z > k {
                push("cusp_indicator_phi", Some((h, 0)), format!("label {z} exceeds {k}"));
            }
            if (z > h) != (state.tau_phi[h] == 1) {
                push("tau_phi", Some((h, 0)), format!("activation disagrees with label {z}"));
            }
        }
    }
    for (field, m) in [
        ("Lambda", &state.lambda),
        ("Gamma", &state.gamma),
        ("Eta", &state.eta),
        ("PhiTilde", &state.phi_tilde),
        ("Beta", &state.beta),
    ] {
        if let Some(((a, b), _)) = iter_indexed(m).find(|(_, v)| !v.is_finite()) {
            push(field, Some((a, b)), "non-finite entry".to_string());
        }
    }
    match (&state.probit_z, dataset.kind()) {
        (Some(z), OutcomeKind::Binary) => {
            if z.shape() != (dataset.n(), dataset.p()) {
                push("ProbitZ", None, "shape differs from outcomes".to_string());
            } else {
                for i in 0..dataset.n() {
                    for j in 0..dataset.p() {
                        if dataset.is_missing(i, j) {
                            continue;
                        }
                        let positive = z[(i, j)] > 0.0;
                        if positive != (dataset.y()[(i, j)] == 1.0) {
                            push("ProbitZ", Some((i, j)), "sign disagrees with outcome".to_string());
                        }
                    }
                }
            }
        }
        (Some(_), OutcomeKind::Continuous) => {
            push("ProbitZ", None, "latents present for a continuous outcome".to_string());
        }
        _ => {}
    }
    out
}

fn iter_indexed<T: nalgebra::Scalar>(m: &DMatrix<T>) -> impl Iterator<Item = ((usize, usize), &T)> {
    let nrows = m.nrows();
    m.iter().enumerate().map(move |(idx, v)| ((idx % nrows, idx / nrows), v))
}
