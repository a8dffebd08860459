use std::fs;
use std::path::Path;

use apafa::evaluation::{
    choose_heldout_cells, column_variance_baseline, evaluate_covariance_recovery, heldout_imputation_mse,
    partial_sharing_recovered, posterior_summary, psi_recovery_roc, PosteriorSummary, RocOutcome,
};
use apafa::gibbs::adapt::AdaptCounts;
use apafa::identifiability::detect_information_switching;
use apafa::io::{
    apply_overrides, load_config, load_dataset_csv, load_truth, read_draws, read_json, save_dataset_csv, save_truth,
    write_draws, write_json, CsvOptions,
};
use apafa::simulation::{generate_scenario, replicate_study, Scenario, ScenarioConfig, Shape, StudyPlan, StudyReport};
use apafa::{run_chain_with_diagnostics, ChainConfig, Hyperparameters, OutcomeKind};
use serde::{Deserialize, Serialize};

use crate::tables;
use crate::{ChainArgs, CliError, EvaluateArgs, FitArgs, ReplicateArgs, SimulateArgs};

/// What `simulate` records next to the data and truth files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub config: ScenarioConfig,
    pub n: usize,
    pub p: usize,
    pub n_groups: usize,
    pub d_true: usize,
    pub k_true: usize,
    /// The data file carries a single label (study membership is hidden).
    pub labels_withheld: bool,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let scenario: Scenario = a.scenario.parse()?;
    let shape: Shape = a.shape.parse()?;
    let mut cfg = ScenarioConfig::new(scenario, shape, a.seed);
    cfg.binary = a.binary;
    let (dataset, truth) = generate_scenario(&cfg)?;
    fs::create_dir_all(&a.out)?;
    save_dataset_csv(&a.out.join("Y.csv"), &dataset)?;
    save_truth(&a.out.join("truth.json"), &truth)?;
    let meta = SimulationMetadata {
        n: dataset.n(),
        p: dataset.p(),
        n_groups: truth.n_groups(),
        d_true: truth.lambda.ncols(),
        k_true: truth.gamma.ncols(),
        labels_withheld: dataset.n_groups() != truth.n_groups(),
        config: cfg,
    };
    write_json(&a.out.join("metadata.json"), &meta)?;
    println!("wrote {} units x {} variables to {}", meta.n, meta.p, a.out.display());
    Ok(())
}

/// Defaults for `p` variables, then the config file, then `--set`, then the
/// explicit length flags. `--iterations` alone keeps a four-fifths burn-in.
pub fn chain_settings(a: &ChainArgs, p: usize) -> Result<(Hyperparameters, ChainConfig), CliError> {
    let (hyper, chain) = match &a.config {
        Some(path) => load_config(path, p)?,
        None => (Hyperparameters::for_dimension(p), ChainConfig::default()),
    };
    let pairs = a
        .set
        .iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got '{kv}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (hyper, chain) = apply_overrides(hyper, chain, &pairs, p)?;
    let mut lengths = Vec::new();
    if let Some(it) = a.iterations {
        lengths.push(("iterations".to_string(), it.to_string()));
        let burn = a.burn_in.unwrap_or(it * 4 / 5);
        lengths.push(("burn_in".to_string(), burn.to_string()));
    } else if let Some(b) = a.burn_in {
        lengths.push(("burn_in".to_string(), b.to_string()));
    }
    Ok(apply_overrides(hyper, chain, &lengths, p)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub n: usize,
    pub p: usize,
    pub outcome: OutcomeKind,
    pub group_labels: Vec<String>,
    /// Posterior mean numbers of active shared and specific factors.
    pub d_hat: f64,
    pub k_hat: f64,
    pub posterior: PosteriorSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub runtime_seconds: f64,
    pub sweeps: usize,
    pub step_seconds: std::collections::BTreeMap<String, f64>,
    pub beta_acceptance: Option<f64>,
    pub exchange_acceptance: Option<f64>,
    pub adaptation_attempts: u64,
    pub adaptation: AdaptCounts,
    pub final_truncation: Option<(usize, usize)>,
    pub switching_threshold: f64,
    /// Specific columns whose posterior-mean gate exceeds the threshold for every unit.
    pub switching_flags: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub cells: Vec<(usize, usize)>,
    pub heldout: Vec<f64>,
    pub mse: f64,
    /// Mean observed-column variance over the held-out cells.
    pub baseline: f64,
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let dataset = load_dataset_csv(&a.data, CsvOptions { binary: a.binary, strict_labels: a.strict_labels })?;
    let (hyper, mut chain) = chain_settings(&a.chain, dataset.p())?;
    if let Some(seed) = a.seed {
        chain.seed = seed;
    }
    let holdout = match a.holdout_frac {
        None => None,
        Some(f) if f > 0.0 && f < 1.0 => {
            let observed = dataset.n() * dataset.p() - dataset.missing_cells().len();
            let count = ((f * observed as f64).round() as usize).max(1);
            let cells = choose_heldout_cells(&dataset, count, a.holdout_seed.unwrap_or(chain.seed))?;
            Some(cells)
        }
        Some(f) => return Err(CliError::usage(format!("--holdout-frac must lie in (0, 1), got {f}"))),
    };
    let (fit_data, held) = match &holdout {
        Some(cells) => {
            let (masked, held) = dataset.mask_cells(cells)?;
            (masked, held)
        }
        None => (dataset.clone(), Vec::new()),
    };

    let (draws, diag) = run_chain_with_diagnostics(&fit_data, &hyper, &chain)?;
    fs::create_dir_all(&a.out)?;
    write_draws(&a.out.join("draws.bin"), &draws)?;
    write_json(&a.out.join("config.json"), &serde_json::json!({ "hyperparameters": hyper, "chain": chain }))?;

    let posterior = posterior_summary(&draws);
    let summary = FitSummary {
        n: dataset.n(),
        p: dataset.p(),
        outcome: dataset.kind(),
        group_labels: dataset.group_labels().to_vec(),
        d_hat: posterior.d_mean,
        k_hat: posterior.k_mean,
        posterior,
    };
    write_json(&a.out.join("summary.json"), &summary)?;

    let diagnostics = FitDiagnostics {
        runtime_seconds: draws.meta.runtime_micros as f64 * 1e-6,
        sweeps: diag.sweeps,
        step_seconds: diag.step_seconds(),
        beta_acceptance: diag.beta.acceptance_rate(),
        exchange_acceptance: diag.exchange.acceptance_rate(),
        adaptation_attempts: diag.adaptation_attempts,
        adaptation: diag.adaptation,
        final_truncation: diag.truncation_trace.last().copied(),
        switching_threshold: a.switching_threshold,
        switching_flags: detect_information_switching(&draws, a.switching_threshold),
    };
    write_json(&a.out.join("diagnostics.json"), &diagnostics)?;

    if let Some(cells) = holdout {
        let report = HoldoutReport {
            mse: heldout_imputation_mse(&draws, &cells, &held)?,
            baseline: column_variance_baseline(&fit_data, &cells)?,
            cells,
            heldout: held,
        };
        println!("held-out MSE {:.4} (column-variance baseline {:.4})", report.mse, report.baseline);
        write_json(&a.out.join("holdout.json"), &report)?;
    }
    println!(
        "{} draws, posterior mean factors: shared {:.2}, specific {:.2}",
        draws.len(),
        summary.d_hat,
        summary.k_hat
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Ordered `(name, value)` metrics; identical to `metrics.csv`.
    pub metrics: Vec<(String, f64)>,
    pub roc: RocOutcome,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    fs::create_dir_all(&a.out)?;
    if let Some(report) = &a.report {
        let report: StudyReport = read_json(report)?;
        return write_study_tables(&report, &a.out);
    }
    let (Some(draws), Some(truth)) = (&a.draws, &a.truth) else {
        return Err(CliError::usage("evaluate needs --draws with --truth, or --report"));
    };
    let draws = read_draws(draws)?;
    let truth = load_truth(truth)?;
    let cov = evaluate_covariance_recovery(&draws, &truth)?;
    let summary = posterior_summary(&draws);
    let roc = psi_recovery_roc(&draws, &truth, true)?;

    let mut metrics: Vec<(String, f64)> = cov
        .rv_omega
        .iter()
        .enumerate()
        .map(|(s, &v)| (format!("rv_omega_{}", s + 1), v))
        .collect();
    metrics.push(("rv_shared".into(), cov.rv_shared));
    metrics.push(("d_mean".into(), summary.d_mean));
    metrics.push(("d_iqr".into(), summary.d_iqr));
    metrics.push(("k_mean".into(), summary.k_mean));
    metrics.push(("k_iqr".into(), summary.k_iqr));
    if let RocOutcome::Curve { auc, .. } = &roc {
        metrics.push(("auc".into(), *auc));
    }
    let partial = partial_sharing_recovered(&draws, &truth)?;
    if !partial.is_empty() {
        let share = partial.iter().filter(|&&b| b).count() as f64 / partial.len() as f64;
        metrics.push(("partial_sharing_recovered".into(), share));
    }
    tables::write_metrics_csv(&a.out.join("metrics.csv"), &metrics)?;
    if let RocOutcome::Curve { points, .. } = &roc {
        tables::write_roc_csv(&a.out.join("roc.csv"), points)?;
    }
    for (name, value) in &metrics {
        println!("{name:>26}  {value:.4}");
    }
    if !matches!(roc, RocOutcome::Curve { .. }) {
        println!("{:>26}  {}", "auc", tables::roc_status(&roc));
    }
    write_json(&a.out.join("metrics.json"), &EvaluationReport { metrics, roc })?;
    Ok(())
}

fn write_study_tables(report: &StudyReport, out: &Path) -> Result<(), CliError> {
    let rows = tables::table1_rows(report);
    tables::write_table1_csv(&out.join("table1.csv"), &rows)?;
    write_json(&out.join("table1.json"), &rows)?;
    tables::write_replicates_csv(&out.join("replicates.csv"), report)?;
    print!("{}", tables::table1_text(&rows));
    Ok(())
}

pub fn replicate(a: &ReplicateArgs) -> Result<(), CliError> {
    let scenarios = a.scenarios.iter().map(|s| s.parse()).collect::<apafa::Result<Vec<Scenario>>>()?;
    let shapes = a.shapes.iter().map(|s| s.parse()).collect::<apafa::Result<Vec<Shape>>>()?;
    if a.replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    let p = shapes.iter().map(|s| s.dims().1).min().unwrap_or(1);
    let (hyper, chain) = chain_settings(&a.chain, p)?;
    if hyper != Hyperparameters::for_dimension(p) {
        eprintln!("apafa: note: replicate fits use the default hyperparameters of each shape");
    }
    let plan = StudyPlan { scenarios, shapes, seeds: (0..a.replicates as u64).map(|r| a.seed + r).collect(), chain };
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("plan.json"), &plan)?;
    if a.dry_run {
        println!(
            "plan: {} scenario(s) x {} shape(s) x {} replicate(s), {} iterations each",
            plan.scenarios.len(),
            plan.shapes.len(),
            plan.seeds.len(),
            plan.chain.iterations
        );
        return Ok(());
    }
    let report = replicate_study(&plan)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_study_tables(&report, &a.out)
}
