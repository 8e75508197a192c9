//! Betting strategies choosing the wager `mu` for the next test of a hypothesis.
//!
//! Bets are predictable: `next_bet` only sees payoffs already folded into the
//! state through `observe`.

use serde::{Deserialize, Serialize};

use crate::domain::{BettingSpec, BettingStrategy};
use crate::eprocess::{BetBound, Payoff};
use crate::error::{Error, Result};

/// Step scale of the online Newton step.
pub fn ons_step_scale() -> f64 {
    2.0 / (2.0 - 3f64.ln())
}

/// Sufficient statistics of one hypothesis' payoff history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettingState {
    pub t: u64,
    pub sum_g: f64,
    pub sum_sq_dev: f64,
    pub ons_mu: f64,
    pub ons_curvature: f64,
}

impl Default for BettingState {
    fn default() -> Self {
        BettingState {
            t: 0,
            sum_g: 0.0,
            sum_sq_dev: 0.0,
            ons_mu: 0.0,
            ons_curvature: 1.0,
        }
    }
}

impl BettingState {
    /// Mean of the payoffs with a pseudo-observation of 1/2.
    pub fn regularized_mean(&self) -> f64 {
        (0.5 + self.sum_g) / (self.t as f64 + 1.0)
    }

    /// Variance estimate with a pseudo-observation of 1/4; always positive.
    pub fn regularized_variance(&self) -> f64 {
        (0.25 + self.sum_sq_dev) / (self.t as f64 + 1.0)
    }
}

/// Largest bet an adaptive strategy may place.
pub fn bet_cap(spec: &BettingSpec, bound: BetBound) -> f64 {
    spec.clip_fraction * bound.mu_max * (1.0 - spec.max_bet_epsilon)
}

pub fn next_bet(spec: &BettingSpec, state: &BettingState, bound: BetBound) -> Result<f64> {
    let cap = bet_cap(spec, bound);
    let mu = match spec.strategy {
        BettingStrategy::UnitBet => 1f64.min(bound.mu_max * (1.0 - spec.max_bet_epsilon)),
        BettingStrategy::MaxBet => bound.mu_max * (1.0 - spec.max_bet_epsilon),
        BettingStrategy::AGrapa => {
            let mean = state.regularized_mean();
            let raw = mean / (state.regularized_variance() + mean * mean);
            raw.clamp(0.0, cap)
        }
        BettingStrategy::Ons => state.ons_mu.clamp(0.0, cap),
        BettingStrategy::Lbow => return Err(Error::UnsupportedStrategy("LBOW")),
    };
    Ok(mu)
}

/// Fold the payoff `g`, obtained with bet `mu_used`, into the statistics.
pub fn observe(
    spec: &BettingSpec,
    state: &BettingState,
    g: Payoff,
    mu_used: f64,
    bound: BetBound,
) -> BettingState {
    let g = g.value();
    let dev = g - state.regularized_mean();
    let z = -g / (1.0 + mu_used * g);
    let curvature = state.ons_curvature + z * z;
    let ons_mu = if z.is_finite() {
        (state.ons_mu - ons_step_scale() * z / curvature).clamp(0.0, bet_cap(spec, bound))
    } else {
        // the bet that produced g bankrupted the process
        0.0
    };
    BettingState {
        t: state.t + 1,
        sum_g: state.sum_g + g,
        sum_sq_dev: state.sum_sq_dev + dev * dev,
        ons_mu,
        ons_curvature: if curvature.is_finite() {
            curvature
        } else {
            state.ons_curvature
        },
    }
}
