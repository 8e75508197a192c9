//! FWER- and FDR-controlling selection rules over p-values or e-values.
//!
//! Ranks are formed by sorting p-values ascending (e-values descending) with
//! ties broken by ascending id. The BH-family rules use the step-up closure:
//! every rank up to the largest rank that passes its threshold is selected.
//! The `*_literal` variants keep only ranks that individually pass.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{is_permutation, HyperparameterId, SelectionRule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: BTreeSet<HyperparameterId>,
    pub rule: SelectionRule,
    /// Threshold applied at each rank (or each position of the order).
    pub thresholds: Vec<f64>,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// `H_N = sum_{n=1}^{N} 1/n`.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

pub fn bh_threshold(rank: usize, n: usize, delta: f64) -> f64 {
    rank as f64 * delta / n as f64
}

pub fn by_threshold(rank: usize, n: usize, delta: f64, h_n: f64) -> f64 {
    rank as f64 * delta / (n as f64 * h_n)
}

pub fn ebh_threshold(rank: usize, n: usize, delta: f64) -> f64 {
    n as f64 / (rank as f64 * delta)
}

fn ids(idx: impl IntoIterator<Item = usize>) -> BTreeSet<HyperparameterId> {
    idx.into_iter().map(HyperparameterId::from).collect()
}

fn ascending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

fn descending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Shared core of the rank-threshold rules. `passes(value, threshold)` is the
/// per-rank predicate on the ranked values.
fn ranked_rule(
    ranked: &[usize],
    values: &[f64],
    thresholds: &[f64],
    passes: impl Fn(f64, f64) -> bool,
    literal: bool,
) -> BTreeSet<HyperparameterId> {
    let pass: Vec<bool> = ranked
        .iter()
        .zip(thresholds)
        .map(|(&i, &thr)| passes(values[i], thr))
        .collect();
    if literal {
        ids(ranked.iter().zip(&pass).filter(|(_, &ok)| ok).map(|(&i, _)| i))
    } else {
        match pass.iter().rposition(|&ok| ok) {
            Some(k) => ids(ranked[..=k].iter().copied()),
            None => BTreeSet::new(),
        }
    }
}

/// `{i : p_i <= delta / N}`.
pub fn bonferroni(p: &[f64], delta: f64) -> SelectionResult {
    let n = p.len();
    let thr = delta / n as f64;
    SelectionResult {
        selected: ids((0..n).filter(|&i| p[i] <= thr)),
        rule: SelectionRule::Bonferroni,
        thresholds: vec![thr; n],
    }
}

/// Longest prefix of `order` whose p-values are all `<= delta`.
pub fn fixed_sequence(p: &[f64], order: &[HyperparameterId], delta: f64) -> Result<SelectionResult> {
    if !is_permutation(order, p.len()) {
        return Err(Error::InvalidOrder(p.len()));
    }
    let selected = order
        .iter()
        .take_while(|id| p[id.index()] <= delta)
        .copied()
        .collect();
    Ok(SelectionResult {
        selected,
        rule: SelectionRule::FixedSequence,
        thresholds: vec![delta; p.len()],
    })
}

fn bh_impl(p: &[f64], delta: f64, literal: bool) -> SelectionResult {
    let n = p.len();
    let thresholds: Vec<f64> = (1..=n).map(|k| bh_threshold(k, n, delta)).collect();
    SelectionResult {
        selected: ranked_rule(&ascending_ranks(p), p, &thresholds, |v, t| v <= t, literal),
        rule: SelectionRule::Bh,
        thresholds,
    }
}

fn by_impl(p: &[f64], delta: f64, literal: bool) -> SelectionResult {
    let n = p.len();
    let h_n = harmonic(n);
    let thresholds: Vec<f64> = (1..=n).map(|k| by_threshold(k, n, delta, h_n)).collect();
    SelectionResult {
        selected: ranked_rule(&ascending_ranks(p), p, &thresholds, |v, t| v <= t, literal),
        rule: SelectionRule::By,
        thresholds,
    }
}

fn ebh_impl(e: &[f64], delta: f64, literal: bool) -> SelectionResult {
    let n = e.len();
    let thresholds: Vec<f64> = (1..=n).map(|k| ebh_threshold(k, n, delta)).collect();
    SelectionResult {
        selected: ranked_rule(&descending_ranks(e), e, &thresholds, |v, t| v >= t, literal),
        rule: SelectionRule::Ebh,
        thresholds,
    }
}

/// Benjamini-Hochberg step-up at thresholds `k * delta / N`.
pub fn bh(p: &[f64], delta: f64) -> SelectionResult {
    bh_impl(p, delta, false)
}

/// Benjamini-Yekutieli step-up at thresholds `k * delta / (N * H_N)`.
pub fn by(p: &[f64], delta: f64) -> SelectionResult {
    by_impl(p, delta, false)
}

/// e-Benjamini-Hochberg step-up: rank `k` (descending e) needs `e >= N / (k * delta)`.
pub fn ebh(e: &[f64], delta: f64) -> SelectionResult {
    ebh_impl(e, delta, false)
}

pub fn bh_literal(p: &[f64], delta: f64) -> SelectionResult {
    bh_impl(p, delta, true)
}

pub fn by_literal(p: &[f64], delta: f64) -> SelectionResult {
    by_impl(p, delta, true)
}

pub fn ebh_literal(e: &[f64], delta: f64) -> SelectionResult {
    ebh_impl(e, delta, true)
}

/// Inputs to a rule: anytime p-values, current e-values and the fixed-sequence order.
pub struct SelectionInput<'a> {
    pub p_values: &'a [f64],
    pub e_values: &'a [f64],
    pub order: &'a [HyperparameterId],
}

/// Apply `rule` at level `delta`.
pub fn apply(
    rule: SelectionRule,
    input: &SelectionInput<'_>,
    delta: f64,
    literal: bool,
) -> Result<SelectionResult> {
    Ok(match rule {
        SelectionRule::Bonferroni => bonferroni(input.p_values, delta),
        SelectionRule::FixedSequence => fixed_sequence(input.p_values, input.order, delta)?,
        SelectionRule::Bh => bh_impl(input.p_values, delta, literal),
        SelectionRule::By => by_impl(input.p_values, delta, literal),
        SelectionRule::Ebh => ebh_impl(input.e_values, delta, literal),
    })
}
