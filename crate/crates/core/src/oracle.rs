//! Brute-force reference searches used to check the simulator.
//!
//! Nothing here shares code with `subarray_search` or `merge`: distances,
//! neighbour selection and vote tallies are recomputed from scratch over the
//! unpartitioned matrix.

use std::ops::Range;

use ndarray::Array2;
use thiserror::Error;

use crate::config::DistanceFunction;
use crate::subarray_search::MatchSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("shape mismatch: stored width {stored}, query length {query}")]
pub struct ShapeMismatch {
    pub stored: usize,
    pub query: usize,
}

fn distance(row: impl Iterator<Item = f64>, query: &[f64], metric: DistanceFunction) -> f64 {
    let mut acc = 0.0;
    for (a, b) in row.zip(query) {
        let d = (a - b).abs();
        acc += match metric {
            DistanceFunction::Hamming => {
                if a != *b {
                    1.0
                } else {
                    0.0
                }
            }
            DistanceFunction::L1 => d,
            DistanceFunction::L2 => d * d,
        };
    }
    match metric {
        DistanceFunction::L2 => acc.sqrt(),
        _ => acc,
    }
}

/// All K distances of the query to the stored rows restricted to `cols`.
fn all_distances(
    stored: &Array2<f64>,
    query: &[f64],
    cols: Range<usize>,
    metric: DistanceFunction,
) -> Vec<f64> {
    stored
        .rows()
        .into_iter()
        .map(|row| distance(cols.clone().map(|j| row[j]), &query[cols.clone()], metric))
        .collect()
}

/// Indices whose distance is among the `k` smallest (ties at the k-th value
/// included).
fn k_nearest(distances: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|a, b| distances[*a].partial_cmp(&distances[*b]).unwrap());
    let take = k.max(1).min(order.len());
    let cutoff = distances[order[take - 1]];
    (0..distances.len())
        .filter(|i| distances[*i] <= cutoff)
        .collect()
}

fn select(distances: &[f64], spec: MatchSpec) -> Vec<usize> {
    match spec {
        MatchSpec::Exact => (0..distances.len())
            .filter(|i| distances[*i] == 0.0)
            .collect(),
        MatchSpec::Best { k } => k_nearest(distances, k),
        MatchSpec::Threshold { theta } => (0..distances.len())
            .filter(|i| distances[*i] <= theta)
            .collect(),
    }
}

/// Full-precision reference search on real values (no quantization).
pub fn oracle_search_real(
    stored: &Array2<f64>,
    query: &[f64],
    spec: MatchSpec,
    metric: DistanceFunction,
) -> Result<Vec<usize>, ShapeMismatch> {
    if stored.ncols() != query.len() {
        return Err(ShapeMismatch {
            stored: stored.ncols(),
            query: query.len(),
        });
    }
    if stored.nrows() == 0 {
        return Ok(Vec::new());
    }
    let d = all_distances(stored, query, 0..query.len(), metric);
    Ok(select(&d, spec))
}

/// Reference search over quantized levels.
pub fn oracle_search(
    stored: &Array2<u32>,
    query: &[u32],
    spec: MatchSpec,
    metric: DistanceFunction,
) -> Result<Vec<usize>, ShapeMismatch> {
    let q: Vec<f64> = query.iter().map(|v| f64::from(*v)).collect();
    oracle_search_real(&stored.mapv(f64::from), &q, spec, metric)
}

/// Winners of a plurality vote with per-row vote counts, ranked by
/// descending votes then ascending row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleVote {
    pub winners: Vec<usize>,
    pub votes: Vec<(usize, u32)>,
}

/// Reference for the voting horizontal merge: per column segment, the
/// segment-restricted best-`k` set votes; the `k` most-voted rows (with ties)
/// win.
pub fn oracle_voting(
    stored: &Array2<u32>,
    query: &[u32],
    col_boundaries: &[Range<usize>],
    k: usize,
    metric: DistanceFunction,
) -> Result<OracleVote, ShapeMismatch> {
    if stored.ncols() != query.len() {
        return Err(ShapeMismatch {
            stored: stored.ncols(),
            query: query.len(),
        });
    }
    let stored = stored.mapv(f64::from);
    let q: Vec<f64> = query.iter().map(|v| f64::from(*v)).collect();
    let mut counts = vec![0u32; stored.nrows()];
    for cols in col_boundaries {
        let d = all_distances(&stored, &q, cols.clone(), metric);
        for i in k_nearest(&d, k) {
            counts[i] += 1;
        }
    }
    let mut votes: Vec<(usize, u32)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, c)| (i, *c))
        .collect();
    votes.sort_by_key(|(i, c)| (std::cmp::Reverse(*c), *i));
    let winners = if votes.is_empty() {
        Vec::new()
    } else {
        let cutoff = votes[k.max(1).min(votes.len()) - 1].1;
        let mut w: Vec<usize> = votes
            .iter()
            .filter(|(_, c)| *c >= cutoff)
            .map(|(i, _)| *i)
            .collect();
        w.sort_unstable();
        w
    };
    Ok(OracleVote { winners, votes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn threshold_enumeration() {
        let stored = array![[0u32, 0], [0, 1], [1, 1]];
        let r = oracle_search(
            &stored,
            &[0, 0],
            MatchSpec::Threshold { theta: 1.0 },
            DistanceFunction::Hamming,
        )
        .unwrap();
        assert_eq!(r, vec![0, 1]);
    }

    #[test]
    fn exact_unique_row() {
        let stored = array![[0u32, 1, 2], [2, 1, 0], [1, 1, 1]];
        let r = oracle_search(&stored, &[2, 1, 0], MatchSpec::Exact, DistanceFunction::L2).unwrap();
        assert_eq!(r, vec![1]);
    }

    #[test]
    fn best_two_of_three() {
        // L1 distances to the zero query: 5, 1, 3.
        let stored = array![[5u32], [1], [3]];
        let r = oracle_search(
            &stored,
            &[0],
            MatchSpec::Best { k: 2 },
            DistanceFunction::L1,
        )
        .unwrap();
        assert_eq!(r, vec![1, 2]);
    }

    #[test]
    fn shape_checked() {
        let stored = array![[0u32, 1]];
        assert!(oracle_search(&stored, &[0], MatchSpec::Exact, DistanceFunction::L1).is_err());
    }

    /// Hand-checked table: every distance for a 4x3 instance under each
    /// metric, against query [1, 2, 0].
    #[test]
    fn distance_fixture_table() {
        let stored = array![[1u32, 2, 0], [0, 2, 0], [3, 0, 1], [1, 3, 3]];
        let q = [1.0, 2.0, 0.0];
        let s = stored.mapv(f64::from);
        let ham = all_distances(&s, &q, 0..3, DistanceFunction::Hamming);
        let l1 = all_distances(&s, &q, 0..3, DistanceFunction::L1);
        let l2 = all_distances(&s, &q, 0..3, DistanceFunction::L2);
        assert_eq!(ham, vec![0.0, 1.0, 3.0, 2.0]);
        assert_eq!(l1, vec![0.0, 1.0, 5.0, 4.0]);
        assert_eq!(l2, vec![0.0, 1.0, 3.0, 10f64.sqrt()]);
        let best2 = oracle_search(
            &stored,
            &[1, 2, 0],
            MatchSpec::Best { k: 2 },
            DistanceFunction::L1,
        )
        .unwrap();
        assert_eq!(best2, vec![0, 1]);
        let thr = oracle_search(
            &stored,
            &[1, 2, 0],
            MatchSpec::Threshold { theta: 2.0 },
            DistanceFunction::Hamming,
        )
        .unwrap();
        assert_eq!(thr, vec![0, 1, 3]);
    }

    #[test]
    fn voting_separable() {
        let stored = array![[0u32, 0, 0, 0], [3, 3, 3, 3], [5, 5, 5, 5]];
        let v = oracle_voting(
            &stored,
            &[0, 0, 0, 0],
            &[0..2, 2..4],
            1,
            DistanceFunction::L1,
        )
        .unwrap();
        assert_eq!(v.winners, vec![0]);
        assert_eq!(v.votes, vec![(0, 2)]);
    }

    /// Voting picks the per-segment winners while the global best is a third
    /// entry that is good but never best in any segment.
    #[test]
    fn voting_differs_from_global_best() {
        let stored = array![
            [0u32, 0, 7, 7], // segment distances 0, 14; total 14
            [7, 7, 0, 0],    // 14, 0; total 14
            [1, 0, 1, 0],    // 1, 1; total 2
            [5, 5, 5, 5],    // 10, 10; total 20
        ];
        let q = [0u32, 0, 0, 0];
        let v = oracle_voting(&stored, &q, &[0..2, 2..4], 1, DistanceFunction::L1).unwrap();
        assert_eq!(v.winners, vec![0, 1]);
        let best =
            oracle_search(&stored, &q, MatchSpec::Best { k: 1 }, DistanceFunction::L1).unwrap();
        assert_eq!(best, vec![2]);
    }
}
