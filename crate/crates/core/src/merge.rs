//! Horizontal (across column groups) and vertical (across row groups) merging
//! of subarray results into application-level match sets.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::config::{HorizontalMerge, MatchType, SimConfig, VerticalMerge};
use crate::mapping::PartitionGrid;
use crate::subarray_search::{kth_smallest, SubarrayResult};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MergeError {
    #[error("unsupported merge: {0}")]
    UnsupportedMerge(String),
    #[error("merge scheme {scheme} cannot be used for {match_type} match")]
    BadScheme {
        scheme: String,
        match_type: MatchType,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizontalPlan {
    NoneNeeded,
    And,
    Voting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerticalPlan {
    NoneNeeded,
    Gather,
    Comparator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub struct MergePlan {
    pub horizontal: HorizontalPlan,
    pub vertical: VerticalPlan,
    pub approximate: bool,
}

/// Schemes the configuration asks for, without checking that they are
/// meaningful for the match type.
pub fn requested_schemes(cfg: &SimConfig, grid: &PartitionGrid) -> (HorizontalPlan, VerticalPlan) {
    let h = if grid.col_groups == 1 {
        HorizontalPlan::NoneNeeded
    } else {
        match cfg.arch.horizontal_merge {
            HorizontalMerge::And => HorizontalPlan::And,
            HorizontalMerge::Voting => HorizontalPlan::Voting,
        }
    };
    let v = if grid.row_groups == 1 {
        VerticalPlan::NoneNeeded
    } else {
        match cfg.arch.vertical_merge {
            VerticalMerge::Gather => VerticalPlan::Gather,
            VerticalMerge::Comparator => VerticalPlan::Comparator,
        }
    };
    (h, v)
}

pub fn plan_merge(cfg: &SimConfig, grid: &PartitionGrid) -> Result<MergePlan, MergeError> {
    let match_type = cfg.app.match_type;
    let (horizontal, vertical) = requested_schemes(cfg, grid);
    let bad = |scheme: &str| MergeError::BadScheme {
        scheme: scheme.to_string(),
        match_type,
    };

    if match_type == MatchType::Threshold && horizontal != HorizontalPlan::NoneNeeded {
        return Err(MergeError::UnsupportedMerge(format!(
            "threshold match cannot be merged across {} column groups",
            grid.col_groups
        )));
    }
    if match_type == MatchType::Best
        && horizontal != HorizontalPlan::NoneNeeded
        && vertical != VerticalPlan::NoneNeeded
        && cfg.strict_merge
    {
        return Err(MergeError::UnsupportedMerge(format!(
            "best match split over both {} row groups and {} column groups \
             (set strict_merge = false for the approximate path)",
            grid.row_groups, grid.col_groups
        )));
    }
    match (match_type, horizontal) {
        (MatchType::Best, HorizontalPlan::And) => return Err(bad("and")),
        (MatchType::Exact, HorizontalPlan::Voting) => return Err(bad("voting")),
        _ => {}
    }
    match (match_type, vertical) {
        (MatchType::Best, VerticalPlan::Gather) => return Err(bad("gather")),
        (MatchType::Exact | MatchType::Threshold, VerticalPlan::Comparator) => {
            return Err(bad("comparator"))
        }
        _ => {}
    }
    Ok(MergePlan {
        horizontal,
        vertical,
        approximate: horizontal == HorizontalPlan::Voting,
    })
}

/// Intersection of per-column-group match sets (all ascending).
pub fn merge_horizontal_and(results: &[Vec<usize>]) -> Vec<usize> {
    let Some((first, rest)) = results.split_first() else {
        return Vec::new();
    };
    first
        .iter()
        .copied()
        .filter(|r| rest.iter().all(|s| s.binary_search(r).is_ok()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteOutcome {
    /// Winning rows, ascending.
    pub winners: Vec<usize>,
    /// Every row that received a vote, ranked by descending votes then
    /// ascending row.
    pub ranking: Vec<(usize, u32)>,
}

impl VoteOutcome {
    pub fn votes_of(&self, row: usize) -> u32 {
        self.ranking
            .iter()
            .find(|(r, _)| *r == row)
            .map_or(0, |(_, v)| *v)
    }
}

/// Top `k` of a ranking plus anything tied with the k-th vote count.
fn top_k_with_ties(ranking: &[(usize, u32)], k: usize) -> Vec<usize> {
    let Some(&(_, cutoff)) = ranking.get(k.max(1) - 1).or(ranking.last()) else {
        return Vec::new();
    };
    let mut winners: Vec<usize> = ranking
        .iter()
        .filter(|(_, v)| *v >= cutoff)
        .map(|(r, _)| *r)
        .collect();
    winners.sort_unstable();
    winners
}

fn rank(tally: BTreeMap<usize, u32>) -> Vec<(usize, u32)> {
    let mut ranking: Vec<(usize, u32)> = tally.into_iter().collect();
    ranking.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranking
}

/// Plurality vote: each column group votes for every row in its match set.
pub fn merge_horizontal_voting(results: &[Vec<usize>], k: usize) -> VoteOutcome {
    let mut tally = BTreeMap::new();
    for set in results {
        for row in set {
            *tally.entry(*row).or_insert(0u32) += 1;
        }
    }
    let ranking = rank(tally);
    VoteOutcome {
        winners: top_k_with_ties(&ranking, k),
        ranking,
    }
}

/// Union of per-row-group local match sets, mapped to global indices.
pub fn merge_vertical_gather(results: &[Vec<usize>], grid: &PartitionGrid) -> Vec<usize> {
    // Row groups are disjoint and visited in order, so the output is sorted.
    results
        .iter()
        .enumerate()
        .flat_map(|(rg, set)| set.iter().map(move |r| rg * grid.rows + r))
        .collect()
}

/// Global best match over per-row-group distances.
pub fn merge_vertical_comparator(
    results: &[SubarrayResult],
    k: usize,
    sensing_limit: f64,
    grid: &PartitionGrid,
) -> Vec<usize> {
    let all: Vec<f64> = results
        .iter()
        .flat_map(|r| r.distances.iter().copied())
        .collect();
    if all.is_empty() {
        return Vec::new();
    }
    let bound = kth_smallest(&all, k) + sensing_limit;
    results
        .iter()
        .enumerate()
        .flat_map(|(rg, r)| {
            r.distances
                .iter()
                .enumerate()
                .filter(move |(_, d)| **d <= bound)
                .map(move |(i, _)| rg * grid.rows + i)
        })
        .collect()
}

/// Approximate best match when both horizontal and vertical merges are
/// needed: per-row-group voting winners ranked globally by vote count.
pub fn merge_combined_voting(
    outcomes: &[VoteOutcome],
    k: usize,
    grid: &PartitionGrid,
) -> VoteOutcome {
    let mut tally = BTreeMap::new();
    for (rg, o) in outcomes.iter().enumerate() {
        for w in &o.winners {
            tally.insert(rg * grid.rows + w, o.votes_of(*w));
        }
    }
    let ranking = rank(tally);
    VoteOutcome {
        winners: top_k_with_ties(&ranking, k),
        ranking,
    }
}
