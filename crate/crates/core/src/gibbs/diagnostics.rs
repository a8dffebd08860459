use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adapt::AdaptCounts;
use super::beta::KernelStats;

/// Run-time bookkeeping of one chain. Not part of the posterior draws.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub sweeps: usize,
    /// Cumulative wall time per sweep step, in nanoseconds.
    pub step_nanos: BTreeMap<String, u64>,
    pub beta: KernelStats,
    /// Shared/specific column exchanges.
    pub exchange: KernelStats,
    pub adaptation_attempts: u64,
    pub adaptation: AdaptCounts,
    /// Current truncation `(d, k)` after every sweep.
    pub truncation_trace: Vec<(usize, usize)>,
}

impl ChainDiagnostics {
    pub fn step_seconds(&self) -> BTreeMap<String, f64> {
        self.step_nanos.iter().map(|(k, v)| (k.clone(), *v as f64 * 1e-9)).collect()
    }
}
