//! Acquisition policies: which hyperparameters to test in the next round.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use crate::domain::{AcquisitionPolicy, AcquisitionSpec, HyperparameterId};

/// Choose the tested set `I^t` for round `round` (1-based).
///
/// `wealths` may be any strictly increasing transform of the e-process values
/// (the engine passes log-wealths). `tie_rank[i]` breaks greedy ties, lower
/// first; `None` means by id. The returned ids are sorted ascending.
pub fn select_batch<R: Rng + ?Sized>(
    spec: &AcquisitionSpec,
    round: u64,
    wealths: &[f64],
    certified: &BTreeSet<HyperparameterId>,
    tie_rank: Option<&[usize]>,
    rng: &mut R,
) -> Vec<HyperparameterId> {
    let n = wealths.len();
    let b = spec.batch_size.min(n);
    let mut chosen: Vec<usize> = match spec.policy {
        AcquisitionPolicy::EpsGreedy { epsilon } => {
            let pool: Vec<usize> = (0..n)
                .filter(|&i| !certified.contains(&HyperparameterId::from(i)))
                .collect();
            let explore = rng.random::<f64>() < epsilon;
            if pool.len() <= b {
                pool
            } else if explore {
                index::sample(rng, pool.len(), b)
                    .into_iter()
                    .map(|k| pool[k])
                    .collect()
            } else {
                let rank = |i: usize| tie_rank.map_or(i, |r| r[i]);
                let mut sorted = pool;
                sorted.sort_by(|&a, &c| {
                    wealths[c]
                        .total_cmp(&wealths[a])
                        .then(rank(a).cmp(&rank(c)))
                        .then(a.cmp(&c))
                });
                sorted.truncate(b);
                sorted
            }
        }
        AcquisitionPolicy::UniformAll => index::sample(rng, n, b).into_vec(),
        AcquisitionPolicy::RoundRobin => {
            let start = ((round.saturating_sub(1) as u128 * b as u128) % n as u128) as usize;
            (0..b).map(|k| (start + k) % n).collect()
        }
        AcquisitionPolicy::FullBatch => (0..n).collect(),
    };
    chosen.sort_unstable();
    chosen.into_iter().map(HyperparameterId::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn ids(v: &[u32]) -> Vec<HyperparameterId> {
        v.iter().map(|&i| HyperparameterId(i)).collect()
    }

    fn certified(v: &[u32]) -> BTreeSet<HyperparameterId> {
        v.iter().map(|&i| HyperparameterId(i)).collect()
    }

    fn eps(epsilon: f64, batch_size: usize) -> AcquisitionSpec {
        AcquisitionSpec {
            policy: AcquisitionPolicy::EpsGreedy { epsilon },
            batch_size,
        }
    }

    #[test]
    fn greedy_picks_argmax() {
        let mut rng = stream_rng(1);
        let w = [1.0, 5.0, 2.0];
        assert_eq!(
            select_batch(&eps(0.0, 1), 1, &w, &certified(&[]), None, &mut rng),
            ids(&[1])
        );
        assert_eq!(
            select_batch(&eps(0.0, 1), 1, &w, &certified(&[1]), None, &mut rng),
            ids(&[2])
        );
        assert_eq!(
            select_batch(&eps(0.0, 2), 1, &w, &certified(&[]), None, &mut rng),
            ids(&[1, 2])
        );
    }

    #[test]
    fn empty_pool() {
        let mut rng = stream_rng(1);
        for e in [0.0, 0.5, 1.0] {
            let got = select_batch(&eps(e, 1), 3, &[1.0; 3], &certified(&[0, 1, 2]), None, &mut rng);
            assert!(got.is_empty());
        }
    }

    #[test]
    fn small_pool_returned_whole() {
        let mut rng = stream_rng(1);
        let got = select_batch(&eps(0.3, 3), 1, &[1.0; 4], &certified(&[0, 2]), None, &mut rng);
        assert_eq!(got, ids(&[1, 3]));
    }

    #[test]
    fn greedy_ties_by_id_or_rank() {
        let mut rng = stream_rng(1);
        let w = [2.0, 2.0, 2.0];
        assert_eq!(
            select_batch(&eps(0.0, 1), 1, &w, &certified(&[]), None, &mut rng),
            ids(&[0])
        );
        let rank = [2, 0, 1];
        assert_eq!(
            select_batch(&eps(0.0, 1), 1, &w, &certified(&[]), Some(&rank), &mut rng),
            ids(&[1])
        );
    }

    #[test]
    fn full_explore_stays_in_pool() {
        let cert = certified(&[0, 3]);
        let mut seen = BTreeSet::new();
        for r in 0..500u64 {
            let mut rng = stream_rng(r);
            let got = select_batch(&eps(1.0, 2), r, &[9.0, 1.0, 1.0, 9.0, 1.0], &cert, None, &mut rng);
            assert_eq!(got.len(), 2);
            assert!(got.iter().all(|id| !cert.contains(id)));
            seen.extend(got);
        }
        assert_eq!(seen, certified(&[1, 2, 4]));
    }

    #[test]
    fn uniform_ignores_certified() {
        let spec = AcquisitionSpec {
            policy: AcquisitionPolicy::UniformAll,
            batch_size: 2,
        };
        let cert = certified(&[0, 1, 2]);
        let mut seen = BTreeSet::new();
        for r in 0..500u64 {
            let mut rng = stream_rng(r);
            let got = select_batch(&spec, r, &[1.0; 4], &cert, None, &mut rng);
            assert_eq!(got.len(), 2);
            assert_ne!(got[0], got[1]);
            seen.extend(got);
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn round_robin_and_full_batch() {
        let mut rng = stream_rng(0);
        let rr = AcquisitionSpec {
            policy: AcquisitionPolicy::RoundRobin,
            batch_size: 2,
        };
        let none = certified(&[]);
        let w = [1.0; 5];
        assert_eq!(select_batch(&rr, 1, &w, &none, None, &mut rng), ids(&[0, 1]));
        assert_eq!(select_batch(&rr, 2, &w, &none, None, &mut rng), ids(&[2, 3]));
        assert_eq!(select_batch(&rr, 3, &w, &none, None, &mut rng), ids(&[0, 4]));
        let fb = AcquisitionSpec {
            policy: AcquisitionPolicy::FullBatch,
            batch_size: 1,
        };
        assert_eq!(
            select_batch(&fb, 7, &w, &none, None, &mut rng),
            ids(&[0, 1, 2, 3, 4])
        );
    }

    #[test]
    fn deterministic_given_stream() {
        let w = [1.0, 3.0, 2.0, 0.5];
        let draw = |seed| {
            let mut rng = stream_rng(seed);
            select_batch(&eps(0.5, 2), 4, &w, &certified(&[]), None, &mut rng)
        };
        for s in 0..50 {
            assert_eq!(draw(s), draw(s));
        }
    }
}
