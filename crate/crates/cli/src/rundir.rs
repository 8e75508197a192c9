//! Run directories: `manifest.json`, `rounds.csv`, `summary.csv` and
//! `final.json`, plus replay verification of logged wealths.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use altt_core::rng::MIXING_FUNCTION_ID;
use altt_core::simharness::MetricsSummary;
use altt_core::{CalibrationEngine, HyperparameterId, RoundRecord, StopReason};
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";
pub const ROUNDS: &str = "rounds.csv";
pub const SUMMARY: &str = "summary.csv";
pub const FINAL: &str = "final.json";
pub const METRICS: &str = "metrics.json";
pub const SWEEP: &str = "sweep.csv";

pub const TOOL: &str = "altt";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

fn split_ids(s: &str) -> Result<Vec<HyperparameterId>> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<u32>()
                .map(HyperparameterId)
                .with_context(|| format!("bad id {p:?}"))
        })
        .collect()
}

fn split_f64(s: &str) -> Result<Vec<f64>> {
    s.split(';')
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub mixing_function: String,
    pub started_at: String,
    pub finished_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config: ExperimentConfig, base_seed: u64, started_at: String) -> Self {
        RunManifest {
            tool: TOOL.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config,
            base_seed,
            mixing_function: MIXING_FUNCTION_ID.into(),
            started_at,
            finished_at: now(),
            stop_reason: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST), text + "\n").context("writing manifest")
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn create_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RoundRow {
    trial: u64,
    t: u64,
    tested_ids: String,
    risks: String,
    selected_ids: String,
    wealths: String,
}

/// One parsed line of `rounds.csv`. `wealth_text` keeps the printed digits.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRound {
    pub trial: u64,
    pub t: u64,
    pub tested: Vec<HyperparameterId>,
    pub risks: Vec<f64>,
    pub selected: Vec<HyperparameterId>,
    pub wealths: Vec<f64>,
    pub wealth_text: Vec<String>,
}

/// Write the rounds of each trial. `wealths` holds the e-value of each
/// tested id after the round; records without snapshots leave it empty.
pub fn write_rounds<'a>(
    path: &Path,
    trials: impl IntoIterator<Item = (u64, &'a [RoundRecord])>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for (trial, rounds) in trials {
        for r in rounds {
            let wealths = if r.wealths.is_empty() {
                String::new()
            } else {
                join(&r.tested, |id| fmt_f64(r.wealths[id.index()]))
            };
            w.serialize(RoundRow {
                trial,
                t: r.t,
                tested_ids: join(&r.tested, |id| id.0.to_string()),
                risks: join(&r.risks, |x| fmt_f64(*x)),
                selected_ids: join(&r.selected, |id| id.0.to_string()),
                wealths,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_rounds(path: &Path) -> Result<Vec<LoggedRound>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize::<RoundRow>()
        .map(|row| {
            let row = row?;
            Ok(LoggedRound {
                trial: row.trial,
                t: row.t,
                tested: split_ids(&row.tested_ids)?,
                risks: split_f64(&row.risks)?,
                selected: split_ids(&row.selected_ids)?,
                wealths: split_f64(&row.wealths)?,
                wealth_text: row
                    .wealths
                    .split(';')
                    .filter(|p| !p.is_empty())
                    .map(String::from)
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: u64,
    pub tpr: Option<f64>,
    pub fwer: Option<f64>,
    pub fdr: Option<f64>,
    pub mean_set_size: f64,
}

pub fn summary_rows(m: &MetricsSummary) -> Vec<SummaryRow> {
    (0..m.mean_set_size_curve.len())
        .map(|i| SummaryRow {
            t: i as u64 + 1,
            tpr: m.tpr_hat.map(|_| m.tpr_curve[i]),
            fwer: Some(m.fwer_curve[i]),
            fdr: Some(m.fdr_curve[i]),
            mean_set_size: m.mean_set_size_curve[i],
        })
        .collect()
}

/// Curves of a run without ground truth: only the set size is known.
pub fn size_only_rows(rounds: &[RoundRecord]) -> Vec<SummaryRow> {
    rounds
        .iter()
        .map(|r| SummaryRow {
            t: r.t,
            tpr: None,
            fwer: None,
            fdr: None,
            mean_set_size: r.selected.len() as f64,
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub selected: Vec<HyperparameterId>,
    pub stop_reason: StopReason,
    pub stop_round: u64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(f).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayReport {
    pub trials: usize,
    pub rows: usize,
}

/// Feed the logged risks of every trial back through a fresh engine and
/// check that each logged wealth and selected set is reproduced exactly at
/// the printed precision.
pub fn verify_replay(dir: &Path) -> Result<ReplayReport> {
    let manifest = RunManifest::read(dir)?;
    let rows = read_rounds(&dir.join(ROUNDS))?;
    let cfg = &manifest.config.calibration;

    let mut trials = 0;
    let mut engine = None;
    let mut current = None;
    for row in &rows {
        if current != Some(row.trial) {
            current = Some(row.trial);
            trials += 1;
            engine = Some(CalibrationEngine::new(cfg)?);
        }
        let engine = engine.as_mut().expect("engine set on first row");
        engine
            .absorb(&row.tested, &row.risks)
            .with_context(|| format!("trial {} round {}", row.trial, row.t))?;
        if row.wealth_text.is_empty() {
            bail!("trial {} round {}: no logged wealths to check", row.trial, row.t);
        }
        ensure!(
            row.wealth_text.len() == row.tested.len(),
            "trial {} round {}: {} wealths for {} tested ids",
            row.trial,
            row.t,
            row.wealth_text.len(),
            row.tested.len()
        );
        let e = engine.e_values();
        for (id, logged) in row.tested.iter().zip(&row.wealth_text) {
            let replayed = fmt_f64(e[id.index()]);
            ensure!(
                &replayed == logged,
                "trial {} round {} id {id}: logged wealth {logged}, replay gives {replayed}",
                row.trial,
                row.t
            );
        }
        let selected: Vec<_> = engine.select()?.selected.into_iter().collect();
        ensure!(
            selected == row.selected,
            "trial {} round {}: logged selection {:?}, replay gives {:?}",
            row.trial,
            row.t,
            row.selected,
            selected
        );
    }
    Ok(ReplayReport {
        trials,
        rows: rows.len(),
    })
}
