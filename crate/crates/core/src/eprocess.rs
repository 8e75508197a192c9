//! Per-hypothesis e-processes.
//!
//! An e-process is the wealth of a gambler who, each time hypothesis `i` is
//! tested, multiplies their wealth by `1 + mu * g` where `g` is the payoff of
//! the observed risk. Wealth starts at 1. Its reciprocal running maximum is
//! an anytime-valid p-value.
//!
//! Wealth is stored in the log domain. A factor of exactly zero makes the
//! process bankrupt: wealth stays at 0 forever and the running maximum (hence
//! the p-value) is frozen.

use serde::{Deserialize, Serialize};

use crate::domain::Direction;
use crate::error::{Error, Result};

/// Per-observation payoff `g`: positive when the observation favours reliability.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Payoff(pub f64);

impl Payoff {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `g = alpha - risk` (RiskBelow) or `g = risk - alpha` (RewardAbove).
pub fn payoff(risk: f64, alpha: f64, direction: Direction) -> Result<Payoff> {
    if !(0.0..=1.0).contains(&risk) {
        return Err(Error::OutOfRange {
            what: "risk",
            value: risk,
        });
    }
    Ok(Payoff(match direction {
        Direction::RiskBelow => alpha - risk,
        Direction::RewardAbove => risk - alpha,
    }))
}

/// Exclusive upper bound on admissible bets, keeping every factor `1 + mu*g` >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetBound {
    pub mu_max: f64,
}

impl BetBound {
    pub fn new(alpha: f64, direction: Direction) -> Self {
        let mu_max = match direction {
            Direction::RiskBelow => 1.0 / (1.0 - alpha),
            Direction::RewardAbove => 1.0 / alpha,
        };
        BetBound { mu_max }
    }

    pub fn admits(&self, mu: f64) -> bool {
        mu >= 0.0 && mu < self.mu_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EProcessState {
    log_wealth: f64,
    log_running_max: f64,
    bankrupt: bool,
    n_updates: u64,
}

impl Default for EProcessState {
    fn default() -> Self {
        Self::new()
    }
}

impl EProcessState {
    /// Fresh process with wealth 1.
    pub fn new() -> Self {
        EProcessState {
            log_wealth: 0.0,
            log_running_max: 0.0,
            bankrupt: false,
            n_updates: 0,
        }
    }

    pub fn wealth(&self) -> f64 {
        if self.bankrupt {
            0.0
        } else {
            self.log_wealth.exp()
        }
    }

    /// `ln(wealth)`, `-inf` once bankrupt.
    pub fn log_wealth(&self) -> f64 {
        if self.bankrupt {
            f64::NEG_INFINITY
        } else {
            self.log_wealth
        }
    }

    pub fn running_max(&self) -> f64 {
        self.log_running_max.exp()
    }

    pub fn log_running_max(&self) -> f64 {
        self.log_running_max
    }

    pub fn n_updates(&self) -> u64 {
        self.n_updates
    }

    pub fn is_bankrupt(&self) -> bool {
        self.bankrupt
    }
}

/// Multiply wealth by `1 + mu * g`.
pub fn update(state: &EProcessState, g: Payoff, mu: f64, bound: BetBound) -> Result<EProcessState> {
    if !bound.admits(mu) {
        return Err(Error::BetOutOfBounds {
            mu,
            mu_max: bound.mu_max,
        });
    }
    let mut next = *state;
    next.n_updates += 1;
    if next.bankrupt {
        return Ok(next);
    }
    let step = mu * g.0;
    if step <= -1.0 {
        next.bankrupt = true;
        next.log_wealth = f64::NEG_INFINITY;
        return Ok(next);
    }
    next.log_wealth += step.ln_1p();
    next.log_running_max = next.log_running_max.max(next.log_wealth);
    Ok(next)
}

/// `min(1, 1 / max_{tau <= t} E^tau)`.
pub fn anytime_p(state: &EProcessState) -> f64 {
    (-state.log_running_max).exp().min(1.0)
}

/// E-value of an intersection of sub-hypotheses: the smallest component wealth.
pub fn min_merge(states: &[EProcessState]) -> Result<f64> {
    states
        .iter()
        .map(EProcessState::wealth)
        .reduce(f64::min)
        .ok_or(Error::EmptyMerge)
}

/// Reduce a raw risk to the indicator `1[raw <= threshold]`.
pub fn quantile_transform(raw_risk: f64, threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&raw_risk) {
        return Err(Error::OutOfRange {
            what: "risk",
            value: raw_risk,
        });
    }
    Ok(if raw_risk <= threshold { 1.0 } else { 0.0 })
}
