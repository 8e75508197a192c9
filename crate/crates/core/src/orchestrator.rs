//! The calibration loop.
//!
//! Each round the acquisition policy picks hyperparameters from the current
//! e-processes, the risk source reports one risk per tested id and constraint,
//! the tested e-processes and betting states are updated, and the selection
//! rule recomputes the certified set. `run_altt` stops as soon as the set
//! holds `d_stop` ids, when `t_max` is reached, or when acquisition has
//! nothing left to test. `run_ltt` runs a fixed number of non-adaptive rounds
//! and selects once at the end.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::acquisition::select_batch;
use crate::betting::{self, BettingState};
use crate::domain::{
    validate_config, CalibrationConfig, Constraint, Direction, EvidenceLog, EvidenceRound, HyperparameterId,
};
use crate::eprocess::{self, BetBound, EProcessState};
use crate::error::{Error, Result};
use crate::rng::{stream_key, stream_rng, tag};
use crate::selection::{self, SelectionInput, SelectionResult};

/// Anything that can answer "test these ids in this round".
///
/// The reply holds `ids.len() * n_metrics` values in `[0, 1]`, row-major by
/// id. `token` identifies the random stream of the run; a source may use it to
/// derive reproducible draws.
pub trait RiskSource {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], token: u64) -> Result<Vec<f64>>;
}

impl<S: RiskSource + ?Sized> RiskSource for &mut S {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], token: u64) -> Result<Vec<f64>> {
        (**self).query(round, ids, token)
    }
}

impl<S: RiskSource + ?Sized> RiskSource for Box<S> {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], token: u64) -> Result<Vec<f64>> {
        (**self).query(round, ids, token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    ReachedD,
    ReachedTmax,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub tested: Vec<HyperparameterId>,
    /// Raw risks, row-major by tested id.
    pub risks: Vec<f64>,
    /// Merged wealth of every hypothesis after the round (empty unless recorded).
    pub wealths: Vec<f64>,
    /// Anytime p-value of every hypothesis after the round (empty unless recorded).
    pub p_values: Vec<f64>,
    pub selected: Vec<HyperparameterId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub selected: BTreeSet<HyperparameterId>,
    pub stop_round: u64,
    pub stop_reason: StopReason,
    pub rounds: Vec<RoundRecord>,
    pub evidence: EvidenceLog,
    pub final_wealths: Vec<f64>,
    pub final_p_values: Vec<f64>,
}

/// How much of each round to keep in `RunResult::rounds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    /// Everything including per-hypothesis wealth and p-value snapshots.
    Full,
    /// Tested ids, risks and selected sets only.
    SelectionOnly,
}

#[derive(Debug, Clone, Copy)]
struct TestedConstraint {
    constraint: Constraint,
    level: f64,
    direction: Direction,
    bound: BetBound,
}

/// E-process and betting state for every hypothesis and constraint.
#[derive(Debug, Clone)]
pub struct CalibrationEngine {
    cfg: CalibrationConfig,
    constraints: Vec<TestedConstraint>,
    eprocs: Vec<Vec<EProcessState>>,
    bets: Vec<Vec<BettingState>>,
    merged_log_max: Vec<f64>,
    order: Vec<HyperparameterId>,
    tie_rank: Option<Vec<usize>>,
}

impl CalibrationEngine {
    pub fn new(cfg: &CalibrationConfig) -> Result<Self> {
        let cfg = validate_config(cfg)?;
        let constraints: Vec<TestedConstraint> = cfg
            .constraints()
            .into_iter()
            .map(|constraint| {
                let (level, direction) = constraint.test_level();
                TestedConstraint {
                    constraint,
                    level,
                    direction,
                    bound: BetBound::new(level, direction),
                }
            })
            .collect();
        let n = cfg.n_candidates;
        let k = constraints.len();
        let order = cfg.sequence_order();
        let tie_rank = (!cfg.prior.is_empty()).then(|| {
            let mut rank = vec![0; n];
            for (pos, id) in order.iter().enumerate() {
                rank[id.index()] = pos;
            }
            rank
        });
        Ok(CalibrationEngine {
            constraints,
            eprocs: vec![vec![EProcessState::new(); k]; n],
            bets: vec![vec![BettingState::default(); k]; n],
            merged_log_max: vec![0.0; n],
            order,
            tie_rank,
            cfg,
        })
    }

    pub fn config(&self) -> &CalibrationConfig {
        &self.cfg
    }

    pub fn n_candidates(&self) -> usize {
        self.cfg.n_candidates
    }

    pub fn n_metrics(&self) -> usize {
        self.constraints.len()
    }

    pub fn eprocesses(&self, id: HyperparameterId) -> &[EProcessState] {
        &self.eprocs[id.index()]
    }

    pub fn betting_states(&self, id: HyperparameterId) -> &[BettingState] {
        &self.bets[id.index()]
    }

    /// `ln` of the merged e-value (minimum over constraints).
    pub fn log_e_value(&self, i: usize) -> f64 {
        self.eprocs[i]
            .iter()
            .map(EProcessState::log_wealth)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn e_values(&self) -> Vec<f64> {
        (0..self.n_candidates())
            .map(|i| self.log_e_value(i).exp())
            .collect()
    }

    pub fn log_e_values(&self) -> Vec<f64> {
        (0..self.n_candidates()).map(|i| self.log_e_value(i)).collect()
    }

    /// `1 / max_{tau <= t} E^tau` of the merged process.
    pub fn p_values(&self) -> Vec<f64> {
        self.merged_log_max.iter().map(|m| (-m).exp().min(1.0)).collect()
    }

    /// Fold one round of raw risks (row-major, `n_metrics` per id) into the
    /// tested hypotheses. Untested hypotheses are not touched.
    pub fn absorb(&mut self, tested: &[HyperparameterId], risks: &[f64]) -> Result<()> {
        let k = self.constraints.len();
        if risks.len() != tested.len() * k {
            return Err(Error::InvariantBreach(format!(
                "{} risks for {} ids x {k} metrics",
                risks.len(),
                tested.len()
            )));
        }
        if let Some(id) = tested.iter().find(|id| id.index() >= self.n_candidates()) {
            return Err(Error::InvariantBreach(format!("tested id {id} out of range")));
        }
        if let Some(&raw) = risks.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::OutOfRange {
                what: "risk",
                value: raw,
            });
        }
        for (j, id) in tested.iter().enumerate() {
            let i = id.index();
            for (c, tc) in self.constraints.iter().enumerate() {
                let raw = risks[j * k + c];
                let g = eprocess::payoff(tc.constraint.observation(raw), tc.level, tc.direction)?;
                let mu = betting::next_bet(&self.cfg.betting, &self.bets[i][c], tc.bound)?;
                self.eprocs[i][c] = eprocess::update(&self.eprocs[i][c], g, mu, tc.bound)?;
                self.bets[i][c] = betting::observe(&self.cfg.betting, &self.bets[i][c], g, mu, tc.bound);
            }
            self.merged_log_max[i] = self.merged_log_max[i].max(self.log_e_value(i));
        }
        Ok(())
    }

    /// Apply the configured rule to the current p-values / e-values.
    pub fn select(&self) -> Result<SelectionResult> {
        let p = self.p_values();
        let e = self.e_values();
        selection::apply(
            self.cfg.selection_rule,
            &SelectionInput {
                p_values: &p,
                e_values: &e,
                order: &self.order,
            },
            self.cfg.delta,
            self.cfg.literal_set,
        )
    }

    fn acquire(&self, round: u64, certified: &BTreeSet<HyperparameterId>) -> Vec<HyperparameterId> {
        let mut rng = stream_rng(stream_key(self.cfg.seed, &[tag::ACQUISITION, round]));
        select_batch(
            &self.cfg.acquisition,
            round,
            &self.log_e_values(),
            certified,
            self.tie_rank.as_deref(),
            &mut rng,
        )
    }
}

fn record(
    engine: &CalibrationEngine,
    recording: Recording,
    t: u64,
    tested: Vec<HyperparameterId>,
    risks: Vec<f64>,
    selected: &BTreeSet<HyperparameterId>,
) -> RoundRecord {
    let (wealths, p_values) = match recording {
        Recording::Full => (engine.e_values(), engine.p_values()),
        Recording::SelectionOnly => (Vec::new(), Vec::new()),
    };
    RoundRecord {
        t,
        tested,
        risks,
        wealths,
        p_values,
        selected: selected.iter().copied().collect(),
    }
}

fn query_round<S: RiskSource + ?Sized>(
    source: &mut S,
    engine: &CalibrationEngine,
    round: u64,
    tested: &[HyperparameterId],
) -> Result<Vec<f64>> {
    let risks = source.query(round, tested, engine.cfg.seed)?;
    let want = tested.len() * engine.n_metrics();
    if risks.len() != want {
        return Err(Error::InvariantBreach(format!(
            "round {round}: source returned {} risks, expected {want}",
            risks.len()
        )));
    }
    Ok(risks)
}

/// Adaptive Learn-then-Test with full round records.
pub fn run_altt<S: RiskSource + ?Sized>(cfg: &CalibrationConfig, source: &mut S) -> Result<RunResult> {
    run_altt_with(cfg, source, Recording::Full)
}

pub fn run_altt_with<S: RiskSource + ?Sized>(
    cfg: &CalibrationConfig,
    source: &mut S,
    recording: Recording,
) -> Result<RunResult> {
    let mut engine = CalibrationEngine::new(cfg)?;
    let mut evidence = EvidenceLog::with_prior(engine.n_metrics(), engine.cfg.prior.clone());
    let mut selected = BTreeSet::new();
    let mut rounds = Vec::new();
    let mut stop_round = 0;
    let mut stop_reason = StopReason::ReachedTmax;

    for t in 1..=engine.cfg.t_max {
        let tested = engine.acquire(t, &selected);
        if tested.is_empty() {
            stop_reason = StopReason::PoolExhausted;
            break;
        }
        let risks = query_round(source, &engine, t, &tested)?;
        engine.absorb(&tested, &risks)?;
        evidence.append(EvidenceRound {
            round: t,
            tested: tested.clone(),
            risks: risks.clone(),
        })?;
        selected = engine.select()?.selected;
        stop_round = t;
        rounds.push(record(&engine, recording, t, tested, risks, &selected));
        if selected.len() >= engine.cfg.d_stop {
            stop_reason = StopReason::ReachedD;
            break;
        }
    }

    Ok(RunResult {
        selected,
        stop_round,
        stop_reason,
        rounds,
        evidence,
        final_wealths: engine.e_values(),
        final_p_values: engine.p_values(),
    })
}

/// Non-adaptive Learn-then-Test: `horizon` rounds, one selection at the end.
pub fn run_ltt<S: RiskSource + ?Sized>(
    cfg: &CalibrationConfig,
    source: &mut S,
    horizon: u64,
) -> Result<RunResult> {
    if !cfg.acquisition.policy.is_non_adaptive() {
        return Err(Error::NotNonAdaptive(cfg.acquisition.policy.name()));
    }
    let mut engine = CalibrationEngine::new(cfg)?;
    let mut evidence = EvidenceLog::with_prior(engine.n_metrics(), engine.cfg.prior.clone());
    let mut rounds = Vec::new();
    let none = BTreeSet::new();

    for t in 1..=horizon {
        let tested = engine.acquire(t, &none);
        let risks = query_round(source, &engine, t, &tested)?;
        engine.absorb(&tested, &risks)?;
        evidence.append(EvidenceRound {
            round: t,
            tested: tested.clone(),
            risks: risks.clone(),
        })?;
        rounds.push(record(&engine, Recording::Full, t, tested, risks, &none));
    }
    let selected = engine.select()?.selected;
    if let Some(last) = rounds.last_mut() {
        last.selected = selected.iter().copied().collect();
    }
    Ok(RunResult {
        selected,
        stop_round: horizon,
        stop_reason: StopReason::ReachedTmax,
        rounds,
        evidence,
        final_wealths: engine.e_values(),
        final_p_values: engine.p_values(),
    })
}

/// Serves risks from a recorded evidence log, checking that the same ids are
/// requested in the same rounds.
pub struct ReplaySource<'a> {
    log: &'a EvidenceLog,
}

impl<'a> ReplaySource<'a> {
    pub fn new(log: &'a EvidenceLog) -> Self {
        ReplaySource { log }
    }
}

impl RiskSource for ReplaySource<'_> {
    fn query(&mut self, round: u64, ids: &[HyperparameterId], _token: u64) -> Result<Vec<f64>> {
        let entry = self
            .log
            .rounds()
            .binary_search_by_key(&round, |r| r.round)
            .map(|pos| &self.log.rounds()[pos])
            .map_err(|_| Error::SourceFailure(format!("no logged evidence for round {round}")))?;
        if entry.tested != ids {
            return Err(Error::SourceFailure(format!(
                "round {round}: replay requested {ids:?}, log has {:?}",
                entry.tested
            )));
        }
        Ok(entry.risks.clone())
    }
}
