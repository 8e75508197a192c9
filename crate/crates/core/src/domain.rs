//! Shared domain types: candidate ids, reliability direction, calibration
//! config and its validation, the evidence log, and simulation ground truth.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a candidate hyperparameter within `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperparameterId(pub u32);

impl HyperparameterId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for HyperparameterId {
    fn from(i: usize) -> Self {
        HyperparameterId(i as u32)
    }
}

impl fmt::Display for HyperparameterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which side of the level `alpha` counts as reliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Reliable iff mean risk <= alpha. Null: mean > alpha.
    RiskBelow,
    /// Reliable iff mean reward > alpha. Null: mean <= alpha.
    RewardAbove,
}

impl Direction {
    /// Whether a population mean passes the reliability inequality.
    pub fn is_reliable(self, mean: f64, alpha: f64) -> bool {
        match self {
            Direction::RiskBelow => mean <= alpha,
            Direction::RewardAbove => mean > alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorMetric {
    #[serde(rename = "FWER")]
    Fwer,
    #[serde(rename = "FDR")]
    Fdr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionRule {
    Bonferroni,
    FixedSequence,
    #[serde(rename = "BH")]
    Bh,
    #[serde(rename = "BY")]
    By,
    #[serde(rename = "eBH")]
    Ebh,
}

impl SelectionRule {
    pub fn name(self) -> &'static str {
        match self {
            SelectionRule::Bonferroni => "Bonferroni",
            SelectionRule::FixedSequence => "FixedSequence",
            SelectionRule::Bh => "BH",
            SelectionRule::By => "BY",
            SelectionRule::Ebh => "eBH",
        }
    }

    pub fn metric(self) -> ErrorMetric {
        match self {
            SelectionRule::Bonferroni | SelectionRule::FixedSequence => ErrorMetric::Fwer,
            SelectionRule::Bh | SelectionRule::By | SelectionRule::Ebh => ErrorMetric::Fdr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy")]
pub enum AcquisitionPolicy {
    EpsGreedy { epsilon: f64 },
    UniformAll,
    RoundRobin,
    FullBatch,
}

impl AcquisitionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionPolicy::EpsGreedy { .. } => "EpsGreedy",
            AcquisitionPolicy::UniformAll => "UniformAll",
            AcquisitionPolicy::RoundRobin => "RoundRobin",
            AcquisitionPolicy::FullBatch => "FullBatch",
        }
    }

    /// Policies whose choices never look at the e-processes or the certified set.
    pub fn is_non_adaptive(&self) -> bool {
        !matches!(self, AcquisitionPolicy::EpsGreedy { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSpec {
    #[serde(flatten)]
    pub policy: AcquisitionPolicy,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BettingStrategy {
    UnitBet,
    MaxBet,
    #[serde(rename = "aGRAPA")]
    AGrapa,
    #[serde(rename = "ONS")]
    Ons,
    #[serde(rename = "LBOW")]
    Lbow,
}

impl BettingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            BettingStrategy::UnitBet => "UnitBet",
            BettingStrategy::MaxBet => "MaxBet",
            BettingStrategy::AGrapa => "aGRAPA",
            BettingStrategy::Ons => "ONS",
            BettingStrategy::Lbow => "LBOW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettingSpec {
    pub strategy: BettingStrategy,
    #[serde(default = "default_clip_fraction")]
    pub clip_fraction: f64,
    #[serde(default = "default_max_bet_epsilon")]
    pub max_bet_epsilon: f64,
}

fn default_clip_fraction() -> f64 {
    0.75
}

fn default_max_bet_epsilon() -> f64 {
    1e-6
}

impl BettingSpec {
    pub fn new(strategy: BettingStrategy) -> Self {
        BettingSpec {
            strategy,
            clip_fraction: default_clip_fraction(),
            max_bet_epsilon: default_max_bet_epsilon(),
        }
    }
}

/// One reliability requirement on a hyperparameter.
///
/// With `quantile = Some(q)` the raw risk is reduced to the indicator
/// `1[raw <= alpha]` (`1[raw >= alpha]` for rewards) and the indicator mean is
/// tested against `1 - q` in the reward direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub alpha: f64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
}

impl Constraint {
    /// The (level, direction) pair of the mean actually tested.
    pub fn test_level(&self) -> (f64, Direction) {
        match self.quantile {
            None => (self.alpha, self.direction),
            Some(q) => (1.0 - q, Direction::RewardAbove),
        }
    }

    /// Map a raw observation onto the tested stream.
    pub fn observation(&self, raw: f64) -> f64 {
        match self.quantile {
            None => raw,
            Some(_) => match self.direction {
                Direction::RiskBelow => f64::from(u8::from(raw <= self.alpha)),
                Direction::RewardAbove => f64::from(u8::from(raw >= self.alpha)),
            },
        }
    }
}

/// A prior observation (round 0) or an in-run observation (round >= 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskObservation {
    pub round: u64,
    pub id: HyperparameterId,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub n_candidates: usize,
    pub alpha: f64,
    pub delta: f64,
    pub direction: Direction,
    /// Quantile level `q` for quantile-risk control of the primary constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
    /// Further constraints; a hypothesis is reliable only if all hold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_constraints: Vec<Constraint>,
    pub error_metric: ErrorMetric,
    pub selection_rule: SelectionRule,
    /// Use the literal per-rank set for BH/BY/eBH instead of the step-up closure.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub literal_set: bool,
    /// Explicit fixed-sequence order; derived from `prior` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_order: Option<Vec<HyperparameterId>>,
    /// Prior evidence (round 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior: Vec<RiskObservation>,
    pub acquisition: AcquisitionSpec,
    pub betting: BettingSpec,
    pub t_max: u64,
    pub d_stop: usize,
    pub seed: u64,
}

impl CalibrationConfig {
    /// All constraints, primary first.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut all = Vec::with_capacity(1 + self.extra_constraints.len());
        all.push(Constraint {
            alpha: self.alpha,
            direction: self.direction,
            quantile: self.quantile,
        });
        all.extend_from_slice(&self.extra_constraints);
        all
    }

    pub fn n_metrics(&self) -> usize {
        1 + self.extra_constraints.len()
    }

    /// Fixed-sequence order: explicit, else ascending prior mean risk
    /// (descending for rewards), ids without prior evidence last, ties by id.
    pub fn sequence_order(&self) -> Vec<HyperparameterId> {
        if let Some(order) = &self.fixed_order {
            return order.clone();
        }
        let n = self.n_candidates;
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for obs in &self.prior {
            if obs.id.index() < n {
                sum[obs.id.index()] += obs.risk;
                count[obs.id.index()] += 1;
            }
        }
        let sign = match self.direction {
            Direction::RiskBelow => 1.0,
            Direction::RewardAbove => -1.0,
        };
        let key = |i: usize| {
            if count[i] == 0 {
                f64::INFINITY
            } else {
                sign * sum[i] / count[i] as f64
            }
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        order.into_iter().map(HyperparameterId::from).collect()
    }
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Check every config invariant, reporting all violations at once.
pub fn validate_config(cfg: &CalibrationConfig) -> Result<CalibrationConfig> {
    let mut errs = Vec::new();
    let n = cfg.n_candidates;
    if n == 0 {
        errs.push("n_candidates must be >= 1".to_string());
    }
    if !in_open_unit(cfg.alpha) {
        errs.push(format!("alpha out of (0,1): {}", cfg.alpha));
    }
    if !in_open_unit(cfg.delta) {
        errs.push(format!("delta out of (0,1): {}", cfg.delta));
    }
    if let Some(q) = cfg.quantile {
        if !in_open_unit(q) {
            errs.push(format!("quantile level out of (0,1): {q}"));
        }
    }
    for (k, c) in cfg.extra_constraints.iter().enumerate() {
        if !in_open_unit(c.alpha) {
            errs.push(format!("extra_constraints[{k}].alpha out of (0,1): {}", c.alpha));
        }
        if let Some(q) = c.quantile {
            if !in_open_unit(q) {
                errs.push(format!("extra_constraints[{k}].quantile out of (0,1): {q}"));
            }
        }
    }
    if cfg.selection_rule.metric() != cfg.error_metric {
        errs.push(format!(
            "rule/metric mismatch: {} does not control {:?}",
            cfg.selection_rule.name(),
            cfg.error_metric
        ));
    }
    if cfg.t_max == 0 {
        errs.push("t_max must be >= 1".to_string());
    }
    if cfg.d_stop == 0 {
        errs.push("d_stop must be >= 1".to_string());
    } else if cfg.d_stop > n {
        errs.push(format!("d_stop {} exceeds n_candidates {n}", cfg.d_stop));
    }
    let b = cfg.acquisition.batch_size;
    if b == 0 {
        errs.push("batch_size must be >= 1".to_string());
    } else if b > n {
        errs.push(format!("batch_size {b} exceeds n_candidates {n}"));
    }
    if let AcquisitionPolicy::EpsGreedy { epsilon } = cfg.acquisition.policy {
        if !(0.0..=1.0).contains(&epsilon) {
            errs.push(format!("epsilon out of [0,1]: {epsilon}"));
        }
    }
    let c = cfg.betting.clip_fraction;
    if !(c > 0.0 && c <= 1.0) {
        errs.push(format!("clip_fraction out of (0,1]: {c}"));
    }
    if !in_open_unit(cfg.betting.max_bet_epsilon) {
        errs.push(format!(
            "max_bet_epsilon out of (0,1): {}",
            cfg.betting.max_bet_epsilon
        ));
    }
    if cfg.betting.strategy == BettingStrategy::Lbow {
        errs.push("betting strategy LBOW is not available in this build".to_string());
    }
    if let Some(order) = &cfg.fixed_order {
        if !is_permutation(order, n) {
            errs.push(format!("fixed_order is not a permutation of 0..{n}"));
        }
    }
    for obs in &cfg.prior {
        if obs.round != 0 {
            errs.push(format!(
                "prior observation for id {} has round {} != 0",
                obs.id, obs.round
            ));
        }
        if obs.id.index() >= n {
            errs.push(format!("prior observation id {} out of range", obs.id));
        }
        if !(0.0..=1.0).contains(&obs.risk) {
            errs.push(format!("prior risk out of [0,1]: {}", obs.risk));
        }
    }
    if errs.is_empty() {
        Ok(cfg.clone())
    } else {
        Err(Error::InvalidConfig(errs))
    }
}

pub(crate) fn is_permutation(order: &[HyperparameterId], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for id in order {
        match seen.get_mut(id.index()) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

/// One calibration round of evidence: the tested ids and their risks,
/// row-major with `n_metrics` values per id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRound {
    pub round: u64,
    pub tested: Vec<HyperparameterId>,
    pub risks: Vec<f64>,
}

/// Append-only record of all evidence gathered so far.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvidenceLog {
    n_metrics: usize,
    prior: Vec<RiskObservation>,
    rounds: Vec<EvidenceRound>,
}

impl EvidenceLog {
    pub fn new(n_metrics: usize) -> Self {
        EvidenceLog {
            n_metrics: n_metrics.max(1),
            prior: Vec::new(),
            rounds: Vec::new(),
        }
    }

    pub fn with_prior(n_metrics: usize, prior: Vec<RiskObservation>) -> Self {
        EvidenceLog {
            prior,
            ..Self::new(n_metrics)
        }
    }

    pub fn n_metrics(&self) -> usize {
        self.n_metrics
    }

    pub fn prior(&self) -> &[RiskObservation] {
        &self.prior
    }

    pub fn rounds(&self) -> &[EvidenceRound] {
        &self.rounds
    }

    pub fn last_round(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.round)
    }

    pub fn append(&mut self, entry: EvidenceRound) -> Result<()> {
        if entry.round <= self.last_round() {
            return Err(Error::InvariantBreach(format!(
                "evidence round {} does not follow {}",
                entry.round,
                self.last_round()
            )));
        }
        if entry.risks.len() != entry.tested.len() * self.n_metrics {
            return Err(Error::InvariantBreach(format!(
                "round {}: {} risks for {} ids x {} metrics",
                entry.round,
                entry.risks.len(),
                entry.tested.len(),
                self.n_metrics
            )));
        }
        if let Some(&bad) = entry.risks.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::OutOfRange {
                what: "risk",
                value: bad,
            });
        }
        let distinct: BTreeSet<_> = entry.tested.iter().collect();
        if distinct.len() != entry.tested.len() {
            return Err(Error::InvariantBreach(format!(
                "round {}: duplicate tested id",
                entry.round
            )));
        }
        self.rounds.push(entry);
        Ok(())
    }

    /// All observations of the primary metric, in round order.
    pub fn observations(&self) -> impl Iterator<Item = RiskObservation> + '_ {
        let k = self.n_metrics;
        self.rounds.iter().flat_map(move |r| {
            r.tested.iter().enumerate().map(move |(j, &id)| RiskObservation {
                round: r.round,
                id,
                risk: r.risks[j * k],
            })
        })
    }

    /// A copy holding only rounds `<= t`.
    pub fn truncated(&self, t: u64) -> EvidenceLog {
        EvidenceLog {
            n_metrics: self.n_metrics,
            prior: self.prior.clone(),
            rounds: self.rounds.iter().filter(|r| r.round <= t).cloned().collect(),
        }
    }
}

/// Known population means for simulation, with the derived reliable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub true_means: Vec<f64>,
    reliable: BTreeSet<HyperparameterId>,
}

impl GroundTruth {
    pub fn from_means(true_means: Vec<f64>, alpha: f64, direction: Direction) -> Self {
        let reliable = reliable_set(&true_means, alpha, direction);
        GroundTruth { true_means, reliable }
    }

    /// Ground truth for several constraints: `means[k][i]` is the mean of
    /// arm `i` under constraint `k`'s tested stream. Arm `i` is reliable iff
    /// every constraint passes. `true_means` keeps the primary metric.
    pub fn from_constraints(means: &[Vec<f64>], levels: &[(f64, Direction)]) -> Self {
        assert_eq!(means.len(), levels.len());
        let n = means.first().map_or(0, Vec::len);
        let reliable = (0..n)
            .filter(|&i| {
                means
                    .iter()
                    .zip(levels)
                    .all(|(m, &(alpha, dir))| dir.is_reliable(m[i], alpha))
            })
            .map(HyperparameterId::from)
            .collect();
        GroundTruth {
            true_means: means.first().cloned().unwrap_or_default(),
            reliable,
        }
    }

    pub fn n(&self) -> usize {
        self.true_means.len()
    }

    pub fn reliable(&self) -> &BTreeSet<HyperparameterId> {
        &self.reliable
    }

    pub fn unreliable(&self) -> BTreeSet<HyperparameterId> {
        (0..self.n())
            .map(HyperparameterId::from)
            .filter(|id| !self.reliable.contains(id))
            .collect()
    }
}

/// Ids whose mean passes the direction's inequality at level `alpha`.
pub fn reliable_set(means: &[f64], alpha: f64, direction: Direction) -> BTreeSet<HyperparameterId> {
    means
        .iter()
        .enumerate()
        .filter(|(_, &m)| direction.is_reliable(m, alpha))
        .map(|(i, _)| HyperparameterId::from(i))
        .collect()
}
