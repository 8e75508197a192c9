//! Adaptive Learn-then-Test (aLTT).
//!
//! Certifies which of a finite set of hyperparameters meet a reliability
//! requirement, with family-wise error rate or false discovery rate control,
//! while testing them sequentially and adaptively. Each hypothesis carries an
//! e-process built by betting against its null; acquisition chooses what to
//! test next from those e-processes, and the run may stop as soon as enough
//! hyperparameters are certified.
//!
//! * [`domain`]: ids, configuration and its validation, evidence, ground truth.
//! * [`eprocess`]: payoffs, wealth updates, anytime p-values, merging.
//! * [`betting`]: wager strategies.
//! * [`selection`]: Bonferroni, fixed-sequence, BH, BY and eBH.
//! * [`acquisition`]: epsilon-greedy and non-adaptive policies.
//! * [`orchestrator`]: the aLTT and LTT loops.
//! * [`simharness`]: synthetic sources and Monte Carlo error-rate estimation.

pub mod acquisition;
pub mod betting;
pub mod domain;
pub mod eprocess;
pub mod error;
pub mod orchestrator;
pub mod rng;
pub mod selection;
pub mod simharness;

pub use domain::{
    reliable_set, validate_config, AcquisitionPolicy, AcquisitionSpec, BettingSpec, BettingStrategy,
    CalibrationConfig, Constraint, Direction, ErrorMetric, EvidenceLog, EvidenceRound, GroundTruth,
    HyperparameterId, RiskObservation, SelectionRule,
};
pub use error::{Error, Result};
pub use orchestrator::{
    run_altt, run_altt_with, run_ltt, CalibrationEngine, Recording, ReplaySource, RiskSource, RoundRecord,
    RunResult, StopReason,
};
pub use simharness::{
    ground_truth, run_trial_results, run_trials, MetricsSummary, RiskDistribution, SyntheticSource,
    SyntheticSpec,
};
