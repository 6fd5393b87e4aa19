//! Search within a single CAM subarray: per-row distances, sensing-limit
//! slack, and the resulting local match set.

use thiserror::Error;

use crate::config::{DistanceFunction, MatchType};
use crate::mapping::Block;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("length mismatch: query segment has {query} dims, row has {row}")]
    LengthMismatch { query: usize, row: usize },
    #[error("subarray has no valid rows")]
    NoValidRows,
}

/// A stored CAM cell after quantization (and possibly variation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Level(f64),
    /// TCAM don't-care; never mismatches.
    Wildcard,
    /// ACAM range; matches any query inside `[lo, hi]`.
    Range {
        lo: f64,
        hi: f64,
    },
}

impl Default for Cell {
    fn default() -> Self {
        Cell::Level(0.0)
    }
}

/// Match semantics with their parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchSpec {
    Exact,
    Best { k: usize },
    Threshold { theta: f64 },
}

impl MatchSpec {
    pub fn from_parts(match_type: MatchType, parameter: f64) -> Self {
        match match_type {
            MatchType::Exact => MatchSpec::Exact,
            MatchType::Best => MatchSpec::Best {
                k: parameter.max(1.0) as usize,
            },
            MatchType::Threshold => MatchSpec::Threshold { theta: parameter },
        }
    }

    pub fn match_type(&self) -> MatchType {
        match self {
            MatchSpec::Exact => MatchType::Exact,
            MatchSpec::Best { .. } => MatchType::Best,
            MatchSpec::Threshold { .. } => MatchType::Threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubarrayResult {
    /// Ascending local row indices.
    pub matched_local_rows: Vec<usize>,
    /// Distance of every valid row; index is the local row.
    pub distances: Vec<f64>,
    pub best_distance: f64,
}

/// Per-dimension contribution before the metric's final aggregation.
#[inline]
fn cell_term(cell: Cell, q: f64, metric: DistanceFunction) -> f64 {
    let gap = match cell {
        Cell::Wildcard => return 0.0,
        Cell::Level(l) => {
            let d = (l - q).abs();
            if metric == DistanceFunction::Hamming {
                // Nearest-level sensing.
                return if d > 0.5 { 1.0 } else { 0.0 };
            }
            d
        }
        Cell::Range { lo, hi } => {
            if q < lo {
                lo - q
            } else if q > hi {
                q - hi
            } else {
                0.0
            }
        }
    };
    match metric {
        DistanceFunction::Hamming => {
            if gap > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        DistanceFunction::L1 => gap,
        DistanceFunction::L2 => gap * gap,
    }
}

fn distance_of<'a, I>(cells: I, query: &[f64], metric: DistanceFunction) -> f64
where
    I: IntoIterator<Item = &'a Cell>,
{
    let sum: f64 = cells
        .into_iter()
        .zip(query)
        .map(|(c, q)| cell_term(*c, *q, metric))
        .sum();
    if metric == DistanceFunction::L2 {
        sum.sqrt()
    } else {
        sum
    }
}

pub fn row_distance(
    query: &[f64],
    row: &[Cell],
    metric: DistanceFunction,
) -> Result<f64, SearchError> {
    if query.len() != row.len() {
        return Err(SearchError::LengthMismatch {
            query: query.len(),
            row: row.len(),
        });
    }
    Ok(distance_of(row, query, metric))
}

/// Combines per-segment distances of one row into the full-width distance.
pub fn combine_segment_distances(
    parts: impl IntoIterator<Item = f64>,
    metric: DistanceFunction,
) -> f64 {
    match metric {
        DistanceFunction::L2 => parts.into_iter().map(|d| d * d).sum::<f64>().sqrt(),
        _ => parts.into_iter().sum(),
    }
}

/// k-th smallest value (1-based), or the largest when `k` exceeds the count.
pub(crate) fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[k.clamp(1, sorted.len()) - 1]
}

/// Distance bound under which a row is reported as a match.
pub(crate) fn match_bound(distances: &[f64], spec: MatchSpec, sensing_limit: f64) -> f64 {
    match spec {
        MatchSpec::Exact => sensing_limit,
        MatchSpec::Best { k } => kth_smallest(distances, k) + sensing_limit,
        MatchSpec::Threshold { theta } => theta + sensing_limit,
    }
}

pub fn search_subarray(
    block: &Block<Cell>,
    query: &[f64],
    spec: MatchSpec,
    metric: DistanceFunction,
    sensing_limit: f64,
) -> Result<SubarrayResult, SearchError> {
    if query.len() != block.cells.ncols() {
        return Err(SearchError::LengthMismatch {
            query: query.len(),
            row: block.cells.ncols(),
        });
    }
    let valid = block.valid_rows();
    if valid == 0 {
        return Err(SearchError::NoValidRows);
    }
    let distances: Vec<f64> = block
        .cells
        .outer_iter()
        .take(valid)
        .map(|row| distance_of(row.iter(), query, metric))
        .collect();
    let bound = match_bound(&distances, spec, sensing_limit);
    let matched_local_rows = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= bound)
        .map(|(i, _)| i)
        .collect();
    let best_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SubarrayResult {
        matched_local_rows,
        distances,
        best_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn block(rows: &[Vec<Cell>], padded: usize) -> Block<Cell> {
        let n = rows[0].len();
        let mut cells = Array2::default((rows.len() + padded, n));
        for (i, r) in rows.iter().enumerate() {
            for (j, c) in r.iter().enumerate() {
                cells[[i, j]] = *c;
            }
        }
        let mut valid = vec![true; rows.len()];
        valid.extend(std::iter::repeat_n(false, padded));
        Block {
            cells,
            valid,
            row_offset: 0,
            col_offset: 0,
        }
    }

    fn levels(v: &[f64]) -> Vec<Cell> {
        v.iter().map(|x| Cell::Level(*x)).collect()
    }

    #[test]
    fn identical_rows_have_zero_hamming() {
        let d = row_distance(
            &[1.0, 0.0, 1.0],
            &levels(&[1.0, 0.0, 1.0]),
            DistanceFunction::Hamming,
        );
        assert_eq!(d, Ok(0.0));
    }

    #[test]
    fn wildcard_never_mismatches() {
        let row = vec![Cell::Level(1.0), Cell::Wildcard, Cell::Level(0.0)];
        let d = row_distance(&[1.0, 0.0, 1.0], &row, DistanceFunction::Hamming);
        assert_eq!(d, Ok(1.0));
    }

    #[test]
    fn acam_range_distance() {
        let row = vec![
            Cell::Range { lo: 1.0, hi: 3.0 },
            Cell::Range { lo: 0.0, hi: 4.0 },
        ];
        assert_eq!(
            row_distance(&[2.0, 5.0], &row, DistanceFunction::L1),
            Ok(1.0)
        );
        assert_eq!(
            row_distance(&[2.0, 5.0], &row, DistanceFunction::Hamming),
            Ok(1.0)
        );
        assert_eq!(
            row_distance(&[0.0, 7.0], &row, DistanceFunction::L2),
            Ok(10f64.sqrt())
        );
    }

    #[test]
    fn nearest_level_rule() {
        let row = levels(&[2.4, 2.6]);
        assert_eq!(
            row_distance(&[2.0, 2.0], &row, DistanceFunction::Hamming),
            Ok(1.0)
        );
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            row_distance(&[1.0], &levels(&[1.0, 2.0]), DistanceFunction::L1),
            Err(SearchError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exact_unique_row() {
        let b = block(&[levels(&[1.0, 0.0, 1.0]), levels(&[1.0, 1.0, 1.0])], 1);
        let r = search_subarray(
            &b,
            &[1.0, 0.0, 1.0],
            MatchSpec::Exact,
            DistanceFunction::Hamming,
            0.0,
        )
        .unwrap();
        assert_eq!(r.matched_local_rows, vec![0]);
        assert_eq!(r.distances, vec![0.0, 1.0]);
        assert_eq!(r.best_distance, 0.0);
    }

    #[test]
    fn best_with_sensing_limit_picks_up_runner_up() {
        // L1 distances 2, 3, 7 against the zero query.
        let b = block(&[levels(&[2.0]), levels(&[3.0]), levels(&[7.0])], 0);
        let r = search_subarray(
            &b,
            &[0.0],
            MatchSpec::Best { k: 1 },
            DistanceFunction::L1,
            1.0,
        )
        .unwrap();
        assert_eq!(r.distances, vec![2.0, 3.0, 7.0]);
        assert_eq!(r.matched_local_rows, vec![0, 1]);
    }

    #[test]
    fn threshold_match() {
        let b = block(
            &[
                levels(&[0.0, 0.0]),
                levels(&[0.0, 1.0]),
                levels(&[1.0, 1.0]),
            ],
            0,
        );
        let r = search_subarray(
            &b,
            &[0.0, 0.0],
            MatchSpec::Threshold { theta: 1.0 },
            DistanceFunction::Hamming,
            0.0,
        )
        .unwrap();
        assert_eq!(r.matched_local_rows, vec![0, 1]);
    }

    #[test]
    fn best_ties_are_all_included() {
        let b = block(&[levels(&[1.0]), levels(&[3.0]), levels(&[1.0])], 0);
        let r = search_subarray(
            &b,
            &[2.0],
            MatchSpec::Best { k: 1 },
            DistanceFunction::L1,
            0.0,
        )
        .unwrap();
        assert_eq!(r.matched_local_rows, vec![0, 1, 2]);
    }

    #[test]
    fn padded_rows_never_match() {
        // Padding is level 0, which would exactly match the zero query.
        let b = block(&[levels(&[1.0, 1.0])], 3);
        let r = search_subarray(
            &b,
            &[0.0, 0.0],
            MatchSpec::Threshold { theta: 100.0 },
            DistanceFunction::L1,
            0.0,
        )
        .unwrap();
        assert_eq!(r.matched_local_rows, vec![0]);
        assert_eq!(r.distances.len(), 1);
    }

    #[test]
    fn all_padded_block_errors() {
        let mut b = block(&[levels(&[1.0])], 1);
        b.valid[0] = false;
        assert_eq!(
            search_subarray(&b, &[1.0], MatchSpec::Exact, DistanceFunction::L1, 0.0),
            Err(SearchError::NoValidRows)
        );
    }

    #[test]
    fn k_larger_than_rows_matches_everything() {
        let b = block(&[levels(&[1.0]), levels(&[5.0])], 2);
        let r = search_subarray(
            &b,
            &[0.0],
            MatchSpec::Best { k: 10 },
            DistanceFunction::L1,
            0.0,
        )
        .unwrap();
        assert_eq!(r.matched_local_rows, vec![0, 1]);
    }

    fn arb_block(max_level: u32) -> impl Strategy<Value = (Vec<Vec<u32>>, Vec<u32>)> {
        (1usize..12, 1usize..10).prop_flat_map(move |(rows, cols)| {
            (
                prop::collection::vec(prop::collection::vec(0..=max_level, cols), rows),
                prop::collection::vec(0..=max_level, cols),
            )
        })
    }

    fn to_block(rows: &[Vec<u32>]) -> Block<Cell> {
        let cells: Vec<Vec<Cell>> = rows
            .iter()
            .map(|r| r.iter().map(|v| Cell::Level(f64::from(*v))).collect())
            .collect();
        block(&cells, 1)
    }

    fn metric_strategy() -> impl Strategy<Value = DistanceFunction> {
        prop::sample::select(DistanceFunction::ALL)
    }

    proptest! {
        #[test]
        fn sensing_limit_is_monotone((rows, q) in arb_block(7), metric in metric_strategy(),
                                     sl1 in 0.0f64..4.0, extra in 0.0f64..4.0, k in 1usize..4, theta in 0.0f64..6.0) {
            let b = to_block(&rows);
            let q: Vec<f64> = q.iter().map(|v| f64::from(*v)).collect();
            for spec in [MatchSpec::Exact, MatchSpec::Best { k }, MatchSpec::Threshold { theta }] {
                let a = search_subarray(&b, &q, spec, metric, sl1).unwrap().matched_local_rows;
                let c = search_subarray(&b, &q, spec, metric, sl1 + extra).unwrap().matched_local_rows;
                prop_assert!(a.iter().all(|r| c.contains(r)));
            }
        }

        #[test]
        fn best_one_agrees_with_argmin((rows, q) in arb_block(7), metric in metric_strategy()) {
            let b = to_block(&rows);
            let qf: Vec<f64> = q.iter().map(|v| f64::from(*v)).collect();
            // Brute force in integer arithmetic.
            let dist: Vec<u64> = rows.iter().map(|r| {
                r.iter().zip(&q).map(|(a, b)| {
                    let d = u64::from(a.abs_diff(*b));
                    match metric {
                        DistanceFunction::Hamming => u64::from(d != 0),
                        DistanceFunction::L1 => d,
                        DistanceFunction::L2 => d * d,
                    }
                }).sum()
            }).collect();
            let min = *dist.iter().min().unwrap();
            let argmins: Vec<usize> = (0..dist.len()).filter(|i| dist[*i] == min).collect();
            let r = search_subarray(&b, &qf, MatchSpec::Best { k: 1 }, metric, 0.0).unwrap();
            prop_assert_eq!(&r.matched_local_rows, &argmins);
            if argmins.len() == 1 {
                prop_assert_eq!(r.matched_local_rows.len(), 1);
            }
        }

        #[test]
        fn all_wildcard_row_is_distance_zero(q in prop::collection::vec(0.0f64..8.0, 1..20)) {
            let row = vec![Cell::Wildcard; q.len()];
            prop_assert_eq!(row_distance(&q, &row, DistanceFunction::Hamming).unwrap(), 0.0);
        }

        #[test]
        fn binary_l2_best_equals_hamming_best((rows, q) in arb_block(1), k in 1usize..4) {
            let b = to_block(&rows);
            let q: Vec<f64> = q.iter().map(|v| f64::from(*v)).collect();
            let spec = MatchSpec::Best { k };
            let l2 = search_subarray(&b, &q, spec, DistanceFunction::L2, 0.0).unwrap();
            let hm = search_subarray(&b, &q, spec, DistanceFunction::Hamming, 0.0).unwrap();
            prop_assert_eq!(l2.matched_local_rows, hm.matched_local_rows);
        }
    }
}
