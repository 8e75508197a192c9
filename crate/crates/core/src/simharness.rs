//! Synthetic risk sources with known ground truth and Monte Carlo estimation
//! of FWER, FDR, TPR and stopping times.
//!
//! Each draw is the inverse CDF of a uniform keyed by
//! `(trial seed, id, metric, round)`, or `(trial seed, metric, round)` when
//! `shared_draw` couples all arms of a round through one latent uniform.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::domain::{CalibrationConfig, Direction, GroundTruth, HyperparameterId};
use crate::error::{Error, Result};
use crate::orchestrator::{run_altt_with, Recording, RiskSource, RunResult};
use crate::rng::{stream_key, tag, trial_seed, unit_f64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RiskDistribution {
    Bernoulli { p: f64 },
    Beta { a: f64, b: f64 },
    PointMass { m: f64 },
}

impl RiskDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RiskDistribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            RiskDistribution::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            RiskDistribution::PointMass { m } => (0.0..=1.0).contains(&m),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(vec![format!(
                "invalid risk distribution {self:?}"
            )]))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RiskDistribution::Bernoulli { p } => p,
            RiskDistribution::Beta { a, b } => a / (a + b),
            RiskDistribution::PointMass { m } => m,
        }
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            RiskDistribution::Bernoulli { p } => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            RiskDistribution::Beta { a, b } => beta(a, b).cdf(x.clamp(0.0, 1.0)),
            RiskDistribution::PointMass { m } => f64::from(u8::from(m <= x)),
        }
    }

    /// `P(X >= x)`.
    pub fn survival_inclusive(&self, x: f64) -> f64 {
        match *self {
            RiskDistribution::Bernoulli { p } => {
                if x <= 0.0 {
                    1.0
                } else if x <= 1.0 {
                    p
                } else {
                    0.0
                }
            }
            RiskDistribution::Beta { a, b } => 1.0 - beta(a, b).cdf(x.clamp(0.0, 1.0)),
            RiskDistribution::PointMass { m } => f64::from(u8::from(m >= x)),
        }
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            RiskDistribution::Bernoulli { p } => f64::from(u8::from(u >= 1.0 - p)),
            RiskDistribution::Beta { a, b } => beta(a, b).inverse_cdf(u).clamp(0.0, 1.0),
            RiskDistribution::PointMass { m } => m,
        }
    }
}

fn beta(a: f64, b: f64) -> Beta {
    Beta::new(a, b).expect("validated beta parameters")
}

/// Per-arm distribution(s): one per constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArmSpec {
    Single(RiskDistribution),
    Composite(Vec<RiskDistribution>),
}

impl ArmSpec {
    pub fn metrics(&self) -> &[RiskDistribution] {
        match self {
            ArmSpec::Single(d) => std::slice::from_ref(d),
            ArmSpec::Composite(ds) => ds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub arms: Vec<ArmSpec>,
    #[serde(default)]
    pub shared_draw: bool,
}

impl SyntheticSpec {
    /// One independent distribution per arm.
    pub fn independent(dists: impl IntoIterator<Item = RiskDistribution>) -> Self {
        SyntheticSpec {
            arms: dists.into_iter().map(ArmSpec::Single).collect(),
            shared_draw: false,
        }
    }

    pub fn validate_for(&self, cfg: &CalibrationConfig) -> Result<()> {
        let mut errs = Vec::new();
        if self.arms.len() != cfg.n_candidates {
            errs.push(format!(
                "synthetic spec has {} arms, config has {} candidates",
                self.arms.len(),
                cfg.n_candidates
            ));
        }
        for (i, arm) in self.arms.iter().enumerate() {
            if arm.metrics().len() != cfg.n_metrics() {
                errs.push(format!(
                    "arm {i} has {} metrics, config has {} constraints",
                    arm.metrics().len(),
                    cfg.n_metrics()
                ));
            }
            for d in arm.metrics() {
                if let Err(Error::InvalidConfig(e)) = d.validate() {
                    errs.extend(e.into_iter().map(|m| format!("arm {i}: {m}")));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs))
        }
    }
}

/// One draw of metric `metric` for arm `id` in `round` under stream `token`.
pub fn sample_risk(spec: &SyntheticSpec, id: HyperparameterId, metric: usize, round: u64, token: u64) -> f64 {
    let key = if spec.shared_draw {
        stream_key(token, &[tag::SHARED, metric as u64, round])
    } else {
        stream_key(token, &[tag::RISK, u64::from(id.0), metric as u64, round])
    };
    spec.arms[id.index()].metrics()[metric].quantile(unit_f64(key))
}

/// A [`RiskSource`] drawing from a [`SyntheticSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticSource<'a> {
    spec: &'a SyntheticSpec,
}

impl<'a> SyntheticSource<'a> {
    pub fn new(spec: &'a SyntheticSpec) -> Self {
        SyntheticSource { spec }
    }
}

impl RiskSource for SyntheticSource<'_> {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], token: u64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let arm = self
                .spec
                .arms
                .get(id.index())
                .ok_or_else(|| Error::SourceFailure(format!("unknown arm {id}")))?;
            for metric in 0..arm.metrics().len() {
                out.push(sample_risk(self.spec, id, metric, round, token));
            }
        }
        Ok(out)
    }
}

/// Ground truth of `spec` under the constraints of `cfg`.
pub fn ground_truth(cfg: &CalibrationConfig, spec: &SyntheticSpec) -> Result<GroundTruth> {
    spec.validate_for(cfg)?;
    let constraints = cfg.constraints();
    let means: Vec<Vec<f64>> = constraints
        .iter()
        .enumerate()
        .map(|(k, c)| {
            spec.arms
                .iter()
                .map(|arm| {
                    let d = arm.metrics()[k];
                    match (c.quantile, c.direction) {
                        (None, _) => d.mean(),
                        (Some(_), Direction::RiskBelow) => d.cdf(c.alpha),
                        (Some(_), Direction::RewardAbove) => d.survival_inclusive(c.alpha),
                    }
                })
                .collect()
        })
        .collect();
    let levels: Vec<(f64, Direction)> = constraints.iter().map(|c| c.test_level()).collect();
    Ok(GroundTruth::from_constraints(&means, &levels))
}

/// What the metrics need from one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub selected_per_round: Vec<Vec<HyperparameterId>>,
    pub final_selected: BTreeSet<HyperparameterId>,
    pub stop_round: u64,
}

impl From<RunResult> for TrialOutcome {
    fn from(r: RunResult) -> Self {
        TrialOutcome {
            selected_per_round: r.rounds.into_iter().map(|rec| rec.selected).collect(),
            final_selected: r.selected,
            stop_round: r.stop_round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub trials: usize,
    pub fwer_hat: f64,
    /// Mean false discovery proportion over trials with a nonempty set.
    pub fdr_hat_conditional: f64,
    /// Mean false discovery proportion over all trials (0 for empty sets).
    pub fdr_hat_unconditional: f64,
    /// `None` when the ground truth has no reliable arm.
    pub tpr_hat: Option<f64>,
    /// Sample standard deviation of the per-trial true positive proportion.
    pub tpr_sd: Option<f64>,
    pub mean_stop_round: f64,
    pub nonempty_trials: usize,
    /// Multiplier of the binomial standard error used for the margins.
    pub margin_z: f64,
    /// `margin_z * sqrt(delta (1 - delta) / M)`: error-rate tolerance at the nominal level.
    pub error_margin: f64,
    /// Per-round curves, index `t - 1`; sets are frozen after a trial stops.
    pub tpr_curve: Vec<f64>,
    pub fwer_curve: Vec<f64>,
    pub fdr_curve: Vec<f64>,
    pub mean_set_size_curve: Vec<f64>,
}

impl MetricsSummary {
    pub fn tpr(&self) -> Result<f64> {
        self.tpr_hat.ok_or(Error::NoReliableArm)
    }

    /// Standard error of `tpr_hat`.
    pub fn tpr_se(&self) -> Option<f64> {
        self.tpr_sd.map(|sd| sd / (self.trials as f64).sqrt())
    }
}

/// `z * sqrt(p (1 - p) / m)`.
pub fn binomial_margin(p: f64, m: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / m as f64).sqrt()
}

pub const MARGIN_Z: f64 = 3.0;

struct SetScore {
    false_discovery: bool,
    fdp: f64,
    tpp: f64,
    size: usize,
}

fn score<'a>(set: impl IntoIterator<Item = &'a HyperparameterId>, gt: &GroundTruth) -> SetScore {
    let (mut size, mut false_hits, mut true_hits) = (0usize, 0usize, 0usize);
    for id in set {
        size += 1;
        if gt.reliable().contains(id) {
            true_hits += 1;
        } else {
            false_hits += 1;
        }
    }
    let n_rel = gt.reliable().len();
    SetScore {
        false_discovery: false_hits > 0,
        fdp: if size == 0 {
            0.0
        } else {
            false_hits as f64 / size as f64
        },
        tpp: if n_rel == 0 {
            0.0
        } else {
            true_hits as f64 / n_rel as f64
        },
        size,
    }
}

/// Aggregate trial outcomes against the ground truth. Curves run to `horizon`.
pub fn summarize(gt: &GroundTruth, outcomes: &[TrialOutcome], horizon: u64, delta: f64) -> MetricsSummary {
    let m = outcomes.len();
    let mf = m.max(1) as f64;
    let h = horizon as usize;
    let has_reliable = !gt.reliable().is_empty();

    let mut fwer = 0.0;
    let mut fdp_sum = 0.0;
    let mut fdp_nonempty = 0.0;
    let mut nonempty = 0usize;
    let mut tpps = Vec::with_capacity(m);
    let mut stop_sum = 0.0;
    let mut tpr_curve = vec![0.0; h];
    let mut fwer_curve = vec![0.0; h];
    let mut fdr_curve = vec![0.0; h];
    let mut size_curve = vec![0.0; h];

    for o in outcomes {
        let s = score(&o.final_selected, gt);
        fwer += f64::from(u8::from(s.false_discovery));
        fdp_sum += s.fdp;
        if s.size > 0 {
            nonempty += 1;
            fdp_nonempty += s.fdp;
        }
        tpps.push(s.tpp);
        stop_sum += o.stop_round as f64;

        let final_score = s;
        for t in 0..h {
            let sc;
            let s = match o.selected_per_round.get(t) {
                Some(set) => {
                    sc = score(set, gt);
                    &sc
                }
                None => &final_score,
            };
            tpr_curve[t] += s.tpp;
            fwer_curve[t] += f64::from(u8::from(s.false_discovery));
            fdr_curve[t] += s.fdp;
            size_curve[t] += s.size as f64;
        }
    }
    for curve in [&mut tpr_curve, &mut fwer_curve, &mut fdr_curve, &mut size_curve] {
        curve.iter_mut().for_each(|v| *v /= mf);
    }

    let tpr_mean = tpps.iter().sum::<f64>() / mf;
    let tpr_sd = if m > 1 {
        (tpps.iter().map(|x| (x - tpr_mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
    } else {
        0.0
    };
    MetricsSummary {
        trials: m,
        fwer_hat: fwer / mf,
        fdr_hat_conditional: if nonempty == 0 {
            0.0
        } else {
            fdp_nonempty / nonempty as f64
        },
        fdr_hat_unconditional: fdp_sum / mf,
        tpr_hat: has_reliable.then_some(tpr_mean),
        tpr_sd: has_reliable.then_some(tpr_sd),
        mean_stop_round: stop_sum / mf,
        nonempty_trials: nonempty,
        margin_z: MARGIN_Z,
        error_margin: binomial_margin(delta, m.max(1), MARGIN_Z),
        tpr_curve,
        fwer_curve,
        fdr_curve,
        mean_set_size_curve: size_curve,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

/// Config of trial `trial`: identical except for its derived seed.
pub fn trial_config(cfg: &CalibrationConfig, base_seed: u64, trial: u64) -> CalibrationConfig {
    CalibrationConfig {
        seed: trial_seed(base_seed, trial),
        ..cfg.clone()
    }
}

fn map_trials<T: Send>(
    cfg: &CalibrationConfig,
    spec: &SyntheticSpec,
    m: usize,
    base_seed: u64,
    execution: Execution,
    recording: Recording,
    finish: impl Fn(RunResult) -> T + Sync,
) -> Result<Vec<T>> {
    spec.validate_for(cfg)?;
    let one = |trial: u64| -> Result<T> {
        let tcfg = trial_config(cfg, base_seed, trial);
        let mut source = SyntheticSource::new(spec);
        run_altt_with(&tcfg, &mut source, recording).map(&finish)
    };
    match execution {
        Execution::Parallel => (0..m as u64).into_par_iter().map(one).collect(),
        Execution::Sequential => (0..m as u64).map(one).collect(),
    }
}

/// Run `m` independent aLTT trials; results are ordered by trial index.
pub fn run_trial_outcomes(
    cfg: &CalibrationConfig,
    spec: &SyntheticSpec,
    m: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<Vec<TrialOutcome>> {
    map_trials(
        cfg,
        spec,
        m,
        base_seed,
        execution,
        Recording::SelectionOnly,
        TrialOutcome::from,
    )
}

/// Like [`run_trial_outcomes`] but keeps every full [`RunResult`].
pub fn run_trial_results(
    cfg: &CalibrationConfig,
    spec: &SyntheticSpec,
    m: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<Vec<RunResult>> {
    map_trials(cfg, spec, m, base_seed, execution, Recording::Full, |r| r)
}

pub fn run_trials(
    cfg: &CalibrationConfig,
    spec: &SyntheticSpec,
    gt: &GroundTruth,
    m: usize,
    base_seed: u64,
) -> Result<MetricsSummary> {
    run_trials_with(cfg, spec, gt, m, base_seed, Execution::Parallel)
}

pub fn run_trials_with(
    cfg: &CalibrationConfig,
    spec: &SyntheticSpec,
    gt: &GroundTruth,
    m: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<MetricsSummary> {
    if m == 0 {
        return Err(Error::InvalidConfig(vec!["trial count must be >= 1".into()]));
    }
    let outcomes = run_trial_outcomes(cfg, spec, m, base_seed, execution)?;
    Ok(summarize(gt, &outcomes, cfg.t_max, cfg.delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(i: u32) -> HyperparameterId {
        HyperparameterId(i)
    }

    fn outcome(sets: &[&[u32]]) -> TrialOutcome {
        let per: Vec<Vec<HyperparameterId>> =
            sets.iter().map(|s| s.iter().map(|&i| id(i)).collect()).collect();
        TrialOutcome {
            final_selected: per.last().cloned().unwrap_or_default().into_iter().collect(),
            stop_round: per.len() as u64,
            selected_per_round: per,
        }
    }

    #[test]
    fn point_mass_and_bernoulli_edges() {
        let spec = SyntheticSpec::independent([
            RiskDistribution::PointMass { m: 0.3 },
            RiskDistribution::Bernoulli { p: 0.0 },
            RiskDistribution::Bernoulli { p: 1.0 },
        ]);
        for round in 1..1000 {
            assert_eq!(sample_risk(&spec, id(0), 0, round, 9), 0.3);
            assert_eq!(sample_risk(&spec, id(1), 0, round, 9), 0.0);
            assert_eq!(sample_risk(&spec, id(2), 0, round, 9), 1.0);
        }
    }

    #[test]
    fn bernoulli_half_law_of_large_numbers() {
        let spec = SyntheticSpec::independent([RiskDistribution::Bernoulli { p: 0.5 }]);
        let n = 100_000;
        let mean = (1..=n).map(|r| sample_risk(&spec, id(0), 0, r, 11)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn beta_draws_match_mean() {
        let spec = SyntheticSpec::independent([RiskDistribution::Beta { a: 2.0, b: 6.0 }]);
        let n = 50_000;
        let mean = (1..=n).map(|r| sample_risk(&spec, id(0), 0, r, 5)).sum::<f64>() / n as f64;
        assert!((mean - 0.25).abs() < 0.01, "{mean}");
    }

    #[test]
    fn shared_draw_couples_arms() {
        let mut spec = SyntheticSpec::independent([
            RiskDistribution::Beta { a: 2.0, b: 2.0 },
            RiskDistribution::Beta { a: 2.0, b: 2.0 },
        ]);
        let differ =
            (1..200).any(|r| sample_risk(&spec, id(0), 0, r, 1) != sample_risk(&spec, id(1), 0, r, 1));
        assert!(differ);
        spec.shared_draw = true;
        for r in 1..200 {
            assert_eq!(
                sample_risk(&spec, id(0), 0, r, 1),
                sample_risk(&spec, id(1), 0, r, 1)
            );
        }
    }

    #[test]
    fn empty_selector_scores_zero() {
        let gt = GroundTruth::from_means(vec![0.1, 0.9], 0.2, Direction::RiskBelow);
        let outs = vec![outcome(&[&[]]); 10];
        let s = summarize(&gt, &outs, 1, 0.1);
        assert_eq!(s.fwer_hat, 0.0);
        assert_eq!(s.tpr_hat, Some(0.0));
        assert_eq!(s.fdr_hat_conditional, 0.0);
    }

    #[test]
    fn all_reliable_has_no_errors() {
        let gt = GroundTruth::from_means(vec![0.1, 0.15], 0.2, Direction::RiskBelow);
        let outs = vec![outcome(&[&[0, 1]]), outcome(&[&[1]])];
        let s = summarize(&gt, &outs, 1, 0.1);
        assert_eq!(s.fwer_hat, 0.0);
        assert_eq!(s.fdr_hat_unconditional, 0.0);
        assert_eq!(s.fdr_hat_conditional, 0.0);
    }

    #[test]
    fn oracle_selector_hand_values() {
        let gt = GroundTruth::from_means(vec![0.1, 0.9], 0.2, Direction::RiskBelow);
        let outs = vec![outcome(&[&[0, 1]]); 7];
        let s = summarize(&gt, &outs, 1, 0.1);
        assert_eq!(s.fwer_hat, 1.0);
        assert_eq!(s.fdr_hat_conditional, 0.5);
        assert_eq!(s.tpr_hat, Some(1.0));
    }

    #[test]
    fn no_reliable_arm_makes_tpr_undefined() {
        let gt = GroundTruth::from_means(vec![0.5], 0.2, Direction::RiskBelow);
        let s = summarize(&gt, &[outcome(&[&[]])], 1, 0.1);
        assert_eq!(s.tpr(), Err(Error::NoReliableArm));
    }

    #[test]
    fn curves_freeze_after_stop() {
        let gt = GroundTruth::from_means(vec![0.1, 0.9], 0.2, Direction::RiskBelow);
        let outs = vec![outcome(&[&[], &[0]]), outcome(&[&[], &[], &[], &[0, 1]])];
        let s = summarize(&gt, &outs, 4, 0.1);
        assert_eq!(s.tpr_curve, vec![0.0, 0.5, 0.5, 1.0]);
        assert_eq!(s.fwer_curve, vec![0.0, 0.0, 0.0, 0.5]);
        assert_eq!(s.mean_set_size_curve, vec![0.0, 0.5, 0.5, 1.5]);
        assert_eq!(s.mean_stop_round, 3.0);
    }

    #[test]
    fn quantile_ground_truth() {
        use crate::domain::tests_support::config;
        let mut cfg = config(2);
        cfg.alpha = 0.57;
        cfg.quantile = Some(0.1);
        let spec = SyntheticSpec::independent([
            RiskDistribution::Beta { a: 2.0, b: 10.0 },
            RiskDistribution::Beta { a: 3.0, b: 3.0 },
        ]);
        let gt = ground_truth(&cfg, &spec).unwrap();
        assert!(gt.true_means[0] > 0.99);
        assert!(gt.true_means[1] < 0.9);
        assert_eq!(gt.reliable().iter().copied().collect::<Vec<_>>(), vec![id(0)]);
    }

    #[test]
    fn synthetic_shape_checked() {
        use crate::domain::tests_support::config;
        let spec = SyntheticSpec::independent([RiskDistribution::Bernoulli { p: 1.5 }]);
        let err = spec.validate_for(&config(2)).unwrap_err();
        let Error::InvalidConfig(msgs) = err else { panic!() };
        assert_eq!(msgs.len(), 2, "{msgs:?}");
    }
}
