//! The five subcommands, callable from the binary or directly from tests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use altt_core::simharness::{
    run_trial_outcomes, run_trial_results, summarize, Execution, MetricsSummary, TrialOutcome,
};
use altt_core::{
    ground_truth, run_altt, validate_config, AcquisitionPolicy, ErrorMetric, RunResult, SyntheticSource,
};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::config::ExperimentConfig;
use crate::oracle::OracleClient;
use crate::rundir::{
    self, create_dir, fmt_f64, now, read_summary, size_only_rows, summary_rows, write_json, write_rounds,
    write_summary, FinalRecord, RunManifest,
};

pub const DEFAULT_TRIALS: usize = 500;

fn final_record(run: &RunResult) -> FinalRecord {
    FinalRecord {
        selected: run.selected.iter().copied().collect(),
        stop_reason: run.stop_reason,
        stop_round: run.stop_round,
    }
}

/// One aLTT run on the synthetic risk model.
pub fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<RunResult> {
    let started = now();
    let mut exp = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        exp.calibration.seed = seed;
    }
    let spec = exp.synthetic()?.clone();
    let cfg = &exp.calibration;
    let run = run_altt(cfg, &mut SyntheticSource::new(&spec))?;
    let gt = ground_truth(cfg, &spec)?;
    let summary = summarize(&gt, &[TrialOutcome::from(run.clone())], cfg.t_max, cfg.delta);

    let dir = create_dir(out)?;
    write_rounds(&dir.join(rundir::ROUNDS), [(0, run.rounds.as_slice())])?;
    write_summary(&dir.join(rundir::SUMMARY), &summary_rows(&summary))?;
    write_json(&dir.join(rundir::FINAL), &final_record(&run))?;
    let base_seed = cfg.seed;
    let mut manifest = RunManifest::new("simulate", exp, base_seed, started);
    manifest.stop_reason = Some(run.stop_reason);
    manifest.write(&dir)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub metric: ErrorMetric,
    pub delta: f64,
    /// FWER estimate under FWER control, unconditional FDR otherwise.
    pub error_hat: f64,
    pub error_margin: f64,
    pub passed: bool,
    pub trials: usize,
    pub base_seed: u64,
    pub fwer_hat: f64,
    pub fdr_hat_conditional: f64,
    pub fdr_hat_unconditional: f64,
    pub tpr_hat: Option<f64>,
    pub tpr_sd: Option<f64>,
    pub mean_stop_round: f64,
    pub nonempty_trials: usize,
}

impl ValidationReport {
    pub fn new(summary: &MetricsSummary, metric: ErrorMetric, delta: f64, base_seed: u64) -> Self {
        let error_hat = match metric {
            ErrorMetric::Fwer => summary.fwer_hat,
            ErrorMetric::Fdr => summary.fdr_hat_unconditional,
        };
        ValidationReport {
            metric,
            delta,
            error_hat,
            error_margin: summary.error_margin,
            passed: error_hat <= delta + summary.error_margin,
            trials: summary.trials,
            base_seed,
            fwer_hat: summary.fwer_hat,
            fdr_hat_conditional: summary.fdr_hat_conditional,
            fdr_hat_unconditional: summary.fdr_hat_unconditional,
            tpr_hat: summary.tpr_hat,
            tpr_sd: summary.tpr_sd,
            mean_stop_round: summary.mean_stop_round,
            nonempty_trials: summary.nonempty_trials,
        }
    }
}

pub struct ValidateArgs<'a> {
    pub config: &'a Path,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub keep_rounds: bool,
}

/// Monte Carlo estimate of the error rate and power over independent trials.
pub fn validate(args: ValidateArgs<'_>) -> Result<ValidationReport> {
    let started = now();
    let mut exp = ExperimentConfig::load(args.config)?;
    let m = args.trials.or(exp.trials).unwrap_or(DEFAULT_TRIALS);
    if m == 0 {
        bail!("--trials must be at least 1");
    }
    let base_seed = args.seed.unwrap_or(exp.base_seed);
    exp.trials = Some(m);
    exp.base_seed = base_seed;
    let spec = exp.synthetic()?.clone();
    let cfg = &exp.calibration;
    let gt = ground_truth(cfg, &spec)?;
    let dir = create_dir(args.out)?;

    let outcomes = if args.keep_rounds {
        let results = run_trial_results(cfg, &spec, m, base_seed, Execution::Parallel)?;
        write_rounds(
            &dir.join(rundir::ROUNDS),
            results
                .iter()
                .enumerate()
                .map(|(i, r)| (i as u64, r.rounds.as_slice())),
        )?;
        results.into_iter().map(TrialOutcome::from).collect()
    } else {
        run_trial_outcomes(cfg, &spec, m, base_seed, Execution::Parallel)?
    };
    let summary = summarize(&gt, &outcomes, cfg.t_max, cfg.delta);
    let report = ValidationReport::new(&summary, cfg.error_metric, cfg.delta, base_seed);

    write_summary(&dir.join(rundir::SUMMARY), &summary_rows(&summary))?;
    write_json(&dir.join(rundir::METRICS), &report)?;
    RunManifest::new("validate", exp, base_seed, started).write(&dir)?;
    Ok(report)
}

/// One aLTT run against an external oracle process.
pub fn calibrate(
    config: &Path,
    oracle: &str,
    timeout: Duration,
    seed: Option<u64>,
    out: &Path,
) -> Result<RunResult> {
    let started = now();
    let mut exp = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        exp.calibration.seed = seed;
    }
    let cfg = &exp.calibration;
    let mut client = OracleClient::spawn(oracle, cfg, timeout)?;
    let run = run_altt(cfg, &mut client).context("calibration aborted")?;
    drop(client);

    let dir = create_dir(out)?;
    write_rounds(&dir.join(rundir::ROUNDS), [(0, run.rounds.as_slice())])?;
    write_summary(&dir.join(rundir::SUMMARY), &size_only_rows(&run.rounds))?;
    write_json(&dir.join(rundir::FINAL), &final_record(&run))?;
    let base_seed = cfg.seed;
    let mut manifest = RunManifest::new("calibrate", exp, base_seed, started);
    manifest.stop_reason = Some(run.stop_reason);
    manifest.write(&dir)?;
    Ok(run)
}

/// Run directories under `root`: `root` itself if it holds a manifest,
/// otherwise every descendant that does, in path order.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        bail!("{} is not a directory", root.display());
    }
    if root.join(rundir::MANIFEST).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut runs = Vec::new();
    for entry in WalkDir::new(root).min_depth(1).sort_by_file_name() {
        let entry = entry?;
        if entry.file_type().is_dir() && entry.path().join(rundir::MANIFEST).is_file() {
            runs.push(entry.path().to_path_buf());
        }
    }
    Ok(runs)
}

#[derive(Debug, Serialize)]
struct TidyRow<'a> {
    run: &'a str,
    t: u64,
    tpr: Option<f64>,
    fwer: Option<f64>,
    fdr: Option<f64>,
    mean_set_size: f64,
}

/// Concatenate the per-round curves of every run under `input` into one
/// tidy CSV with a leading `run` column. Returns the number of runs.
pub fn report(input: &Path, sink: impl Write) -> Result<usize> {
    let runs = find_runs(input)?;
    if runs.is_empty() {
        bail!("no runs found in {}", input.display());
    }
    let mut w = csv::Writer::from_writer(sink);
    for dir in &runs {
        let label = match dir.strip_prefix(input) {
            Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
            _ => dir
                .file_name()
                .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        };
        for row in read_summary(&dir.join(rundir::SUMMARY))? {
            w.serialize(TidyRow {
                run: &label,
                t: row.t,
                tpr: row.tpr,
                fwer: row.fwer,
                fdr: row.fdr,
                mean_set_size: row.mean_set_size,
            })?;
        }
    }
    w.flush()?;
    Ok(runs.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub alpha: f64,
    pub strategy: String,
    pub trials: usize,
    pub fwer: f64,
    pub fdr_conditional: f64,
    pub fdr_unconditional: f64,
    pub tpr: Option<f64>,
    pub tpr_sd: Option<f64>,
    pub mean_stop_round: f64,
    pub error_margin: f64,
}

/// Monte Carlo summary for every point of the config's sweep grid.
pub fn sweep(config: &Path, trials: Option<usize>, seed: Option<u64>, out: &Path) -> Result<Vec<SweepRow>> {
    let started = now();
    let mut exp = ExperimentConfig::load(config)?;
    let m = trials.or(exp.trials).unwrap_or(DEFAULT_TRIALS);
    if m == 0 {
        bail!("--trials must be at least 1");
    }
    let base_seed = seed.unwrap_or(exp.base_seed);
    exp.trials = Some(m);
    exp.base_seed = base_seed;
    let spec = exp.synthetic()?.clone();

    let mut rows = Vec::new();
    for point in exp.sweep.grid() {
        let cfg = validate_config(&point.apply(&exp.calibration))
            .with_context(|| format!("sweep point {point:?}"))?;
        let gt = ground_truth(&cfg, &spec)?;
        let outcomes = run_trial_outcomes(&cfg, &spec, m, base_seed, Execution::Parallel)?;
        let s = summarize(&gt, &outcomes, cfg.t_max, cfg.delta);
        rows.push(SweepRow {
            epsilon: match cfg.acquisition.policy {
                AcquisitionPolicy::EpsGreedy { epsilon } => Some(epsilon),
                _ => None,
            },
            delta: cfg.delta,
            alpha: cfg.alpha,
            strategy: cfg.betting.strategy.name().into(),
            trials: m,
            fwer: s.fwer_hat,
            fdr_conditional: s.fdr_hat_conditional,
            fdr_unconditional: s.fdr_hat_unconditional,
            tpr: s.tpr_hat,
            tpr_sd: s.tpr_sd,
            mean_stop_round: s.mean_stop_round,
            error_margin: s.error_margin,
        });
    }

    let dir = create_dir(out)?;
    let mut w = csv::Writer::from_path(dir.join(rundir::SWEEP))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    RunManifest::new("sweep", exp, base_seed, started).write(&dir)?;
    Ok(rows)
}

/// Human-readable one-line verdict for `validate`.
pub fn verdict(r: &ValidationReport) -> String {
    let name = match r.metric {
        ErrorMetric::Fwer => "fwer_hat",
        ErrorMetric::Fdr => "fdr_hat_unconditional",
    };
    format!(
        "{} {name}={} bound={} (delta {} + margin {}) trials={}",
        if r.passed { "PASS" } else { "FAIL" },
        fmt_f64(r.error_hat),
        fmt_f64(r.delta + r.error_margin),
        r.delta,
        fmt_f64(r.error_margin),
        r.trials
    )
}
