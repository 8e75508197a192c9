//! Predicate-enumeration oracle for the selection rules.
//!
//! The oracle never sorts. For the step-up rules it uses the counting
//! characterisation: the largest `k` such that at least `k` hypotheses meet
//! the rank-`k` threshold, then selects everything meeting that threshold.
//! For the literal rules each hypothesis' rank is counted directly.

#![allow(dead_code)]

use std::collections::BTreeSet;

use altt_core::selection::{self, bh_threshold, by_threshold, ebh_threshold, harmonic};
use altt_core::HyperparameterId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Set = BTreeSet<HyperparameterId>;

pub fn to_set(idx: impl IntoIterator<Item = usize>) -> Set {
    idx.into_iter().map(HyperparameterId::from).collect()
}

pub fn oracle_bonferroni(p: &[f64], delta: f64) -> Set {
    to_set((0..p.len()).filter(|&i| p[i] <= delta / p.len() as f64))
}

pub fn oracle_fixed_sequence(p: &[f64], order: &[usize], delta: f64) -> Set {
    // j is selected iff every hypothesis at or before j in the order passes
    to_set(
        (0..order.len())
            .filter(|&pos| order[..=pos].iter().all(|&i| p[i] <= delta))
            .map(|pos| order[pos]),
    )
}

pub fn oracle_step_up(
    values: &[f64],
    threshold: impl Fn(usize) -> f64,
    passes: impl Fn(f64, f64) -> bool,
) -> Set {
    let n = values.len();
    let k_star = (1..=n)
        .filter(|&k| values.iter().filter(|&&v| passes(v, threshold(k))).count() >= k)
        .max();
    match k_star {
        Some(k) => to_set((0..n).filter(|&i| passes(values[i], threshold(k)))),
        None => Set::new(),
    }
}

/// Rank of `i` (1-based) when `before(j, i)` says j ranks ahead of i.
pub fn rank_of(i: usize, n: usize, before: impl Fn(usize, usize) -> bool) -> usize {
    1 + (0..n).filter(|&j| j != i && before(j, i)).count()
}

pub fn oracle_literal_p(p: &[f64], threshold: impl Fn(usize) -> f64) -> Set {
    let n = p.len();
    to_set((0..n).filter(|&i| {
        let r = rank_of(i, n, |j, i| p[j] < p[i] || (p[j] == p[i] && j < i));
        p[i] <= threshold(r)
    }))
}

pub fn oracle_literal_e(e: &[f64], threshold: impl Fn(usize) -> f64) -> Set {
    let n = e.len();
    to_set((0..n).filter(|&i| {
        let r = rank_of(i, n, |j, i| e[j] > e[i] || (e[j] == e[i] && j < i));
        e[i] >= threshold(r)
    }))
}

/// p-values drawn from a mix of exact thresholds, ties and continuous values.
pub fn random_p(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> Vec<f64> {
    let h = harmonic(n);
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=n);
            match rng.random_range(0..5) {
                0 => bh_threshold(k, n, delta),
                1 => by_threshold(k, n, delta, h),
                2 => 1.0,
                3 => rng.random_range(0.0..delta),
                _ => rng.random_range(0.0..=1.0),
            }
        })
        .collect()
}

pub fn random_e(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=n);
            match rng.random_range(0..4) {
                0 => ebh_threshold(k, n, delta),
                1 => 1.0,
                2 => 0.0,
                _ => rng.random_range(0.0..(2.0 * n as f64 / delta)),
            }
        })
        .collect()
}

pub fn random_order(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order
}

/// Compare every rule with the oracle on `per_n` random vectors for each
/// `N` in `1..=max_n`. Returns the number of comparisons made, or the first
/// disagreement.
pub fn check_all(seed: u64, max_n: usize, per_n: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for n in 1..=max_n {
        for _ in 0..per_n {
            let delta = [0.05, 0.1, 0.2, 0.5][rng.random_range(0..4)];
            let p = random_p(&mut rng, n, delta);
            let e = random_e(&mut rng, n, delta);
            let order = random_order(&mut rng, n);
            let order_ids: Vec<HyperparameterId> = order.iter().map(|&i| i.into()).collect();
            let h = harmonic(n);
            let fixed = selection::fixed_sequence(&p, &order_ids, delta).map_err(|e| e.to_string())?;
            let cases: [(&str, Set, Set); 8] = [
                (
                    "bonferroni",
                    selection::bonferroni(&p, delta).selected,
                    oracle_bonferroni(&p, delta),
                ),
                (
                    "fixed_sequence",
                    fixed.selected,
                    oracle_fixed_sequence(&p, &order, delta),
                ),
                (
                    "bh",
                    selection::bh(&p, delta).selected,
                    oracle_step_up(&p, |k| bh_threshold(k, n, delta), |v, t| v <= t),
                ),
                (
                    "by",
                    selection::by(&p, delta).selected,
                    oracle_step_up(&p, |k| by_threshold(k, n, delta, h), |v, t| v <= t),
                ),
                (
                    "ebh",
                    selection::ebh(&e, delta).selected,
                    oracle_step_up(&e, |k| ebh_threshold(k, n, delta), |v, t| v >= t),
                ),
                (
                    "bh_literal",
                    selection::bh_literal(&p, delta).selected,
                    oracle_literal_p(&p, |k| bh_threshold(k, n, delta)),
                ),
                (
                    "by_literal",
                    selection::by_literal(&p, delta).selected,
                    oracle_literal_p(&p, |k| by_threshold(k, n, delta, h)),
                ),
                (
                    "ebh_literal",
                    selection::ebh_literal(&e, delta).selected,
                    oracle_literal_e(&e, |k| ebh_threshold(k, n, delta)),
                ),
            ];
            for (rule, got, want) in cases {
                if got != want {
                    return Err(format!(
                        "{rule} N={n} delta={delta} p={p:?} e={e:?}: got {got:?}, oracle {want:?}"
                    ));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}
