//! CSV renderings of metrics and study reports, plus the factor-count table.

use std::path::Path;

use apafa::evaluation::RocOutcome;
use apafa::io::write_atomic;
use apafa::simulation::StudyReport;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn finish(wtr: csv::Writer<Vec<u8>>, path: &Path) -> Result<(), CliError> {
    let bytes = wtr.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(write_atomic(path, &bytes)?)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::usage(e.to_string())
}

/// `f64` text that parses back to the same value (`Display` is shortest round-trip).
fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, metrics: &[(String, f64)]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["metric", "value"]).map_err(csv_err)?;
    for (name, value) in metrics {
        wtr.write_record([name.clone(), num(*value)]).map_err(csv_err)?;
    }
    finish(wtr, path)
}

pub fn write_roc_csv(path: &Path, points: &[(f64, f64)]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["fpr", "tpr"]).map_err(csv_err)?;
    for &(x, y) in points {
        wtr.write_record([num(x), num(y)]).map_err(csv_err)?;
    }
    finish(wtr, path)
}

pub fn roc_status(roc: &RocOutcome) -> &'static str {
    match roc {
        RocOutcome::Curve { .. } => "curve",
        RocOutcome::NoPositiveClass => "no_positive_class",
        RocOutcome::NoNegativeClass => "no_negative_class",
    }
}

/// One scenario × shape cell of the factor-count table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub scenario: String,
    pub shape: String,
    pub replicates: usize,
    pub d_mean: f64,
    pub d_iqr: f64,
    pub k_mean: f64,
    pub k_iqr: f64,
    /// Median RV per study.
    pub rv_median: Vec<f64>,
    pub auc_median: Option<f64>,
    pub wall_seconds_mean: f64,
}

pub fn table1_rows(report: &StudyReport) -> Vec<Table1Row> {
    report
        .aggregates
        .iter()
        .map(|a| Table1Row {
            scenario: a.scenario.name().to_string(),
            shape: a.shape.clone(),
            replicates: a.replicates,
            d_mean: a.d.mean,
            d_iqr: a.d.iqr,
            k_mean: a.k.mean,
            k_iqr: a.k.iqr,
            rv_median: a.rv_omega.iter().map(|m| m.median).collect(),
            auc_median: a.auc.map(|m| m.median),
            wall_seconds_mean: a.wall_seconds.mean,
        })
        .collect()
}

pub fn write_table1_csv(path: &Path, rows: &[Table1Row]) -> Result<(), CliError> {
    let groups = rows.iter().map(|r| r.rv_median.len()).max().unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["scenario", "shape", "replicates", "d_mean", "d_iqr", "k_mean", "k_iqr"].map(String::from).to_vec();
    header.extend((1..=groups).map(|s| format!("rv_median_{s}")));
    header.extend(["auc_median".to_string(), "wall_seconds_mean".to_string()]);
    wtr.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.scenario.clone(),
            r.shape.clone(),
            r.replicates.to_string(),
            num(r.d_mean),
            num(r.d_iqr),
            num(r.k_mean),
            num(r.k_iqr),
        ];
        rec.extend((0..groups).map(|s| opt(r.rv_median.get(s).copied())));
        rec.extend([opt(r.auc_median), num(r.wall_seconds_mean)]);
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    finish(wtr, path)
}

pub fn write_replicates_csv(path: &Path, report: &StudyReport) -> Result<(), CliError> {
    let groups = report.rows.iter().map(|r| r.rv_omega.len()).max().unwrap_or(0);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["scenario", "shape", "replicate", "seed", "d_mean", "k_mean", "rv_shared"].map(String::from).to_vec();
    header.extend((1..=groups).map(|s| format!("rv_omega_{s}")));
    header.extend(["auc".to_string(), "wall_seconds".to_string()]);
    wtr.write_record(&header).map_err(csv_err)?;
    for r in &report.rows {
        let mut rec = vec![
            r.scenario.name().to_string(),
            r.shape.clone(),
            r.replicate.to_string(),
            r.seed.to_string(),
            num(r.d_mean),
            num(r.k_mean),
            num(r.rv_shared),
        ];
        rec.extend((0..groups).map(|s| opt(r.rv_omega.get(s).copied())));
        rec.extend([opt(r.auc), num(r.wall_seconds)]);
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    finish(wtr, path)
}

/// Plain-text table: posterior mean numbers of factors as `mean (IQR)`.
pub fn table1_text(rows: &[Table1Row]) -> String {
    let mut out = format!("{:<9}{:<8}{:>16}{:>16}{:>10}{:>10}\n", "scenario", "shape", "shared", "specific", "RV med", "AUC med");
    for r in rows {
        let rv = r.rv_median.iter().copied().fold(f64::INFINITY, f64::min);
        let rv = if rv.is_finite() { format!("{rv:.2}") } else { "-".into() };
        let auc = r.auc_median.map_or("-".to_string(), |a| format!("{a:.2}"));
        out.push_str(&format!(
            "{:<9}{:<8}{:>16}{:>16}{:>10}{:>10}\n",
            r.scenario,
            r.shape,
            format!("{:.2} ({:.2})", r.d_mean, r.d_iqr),
            format!("{:.2} ({:.2})", r.k_mean, r.k_iqr),
            rv,
            auc
        ));
    }
    out
}
