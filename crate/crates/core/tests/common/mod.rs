#![allow(dead_code)]

use altt_core::{
    AcquisitionPolicy, AcquisitionSpec, BettingSpec, BettingStrategy, CalibrationConfig, Direction,
    ErrorMetric, RiskDistribution, SelectionRule, SyntheticSpec,
};

pub fn config(n: usize) -> CalibrationConfig {
    CalibrationConfig {
        n_candidates: n,
        alpha: 0.2,
        delta: 0.1,
        direction: Direction::RiskBelow,
        quantile: None,
        extra_constraints: Vec::new(),
        error_metric: ErrorMetric::Fwer,
        selection_rule: SelectionRule::Bonferroni,
        literal_set: false,
        fixed_order: None,
        prior: Vec::new(),
        acquisition: AcquisitionSpec {
            policy: AcquisitionPolicy::EpsGreedy { epsilon: 0.25 },
            batch_size: 1,
        },
        betting: BettingSpec::new(BettingStrategy::AGrapa),
        t_max: 300,
        d_stop: n,
        seed: 11,
    }
}

pub fn bernoulli_arms(ps: &[f64]) -> SyntheticSpec {
    SyntheticSpec::independent(ps.iter().map(|&p| RiskDistribution::Bernoulli { p }))
}
