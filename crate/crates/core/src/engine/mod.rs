//! Write and query simulation.
//!
//! `write` quantizes the stored data, partitions it onto subarrays and
//! applies device-to-device variation once. `query` then runs every query
//! through the subarrays (with fresh cycle-to-cycle variation per query
//! ordinal) and merges the per-subarray results.

pub mod io;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, CellType, SimConfig, Violation};
use crate::mapping::{self, BlockGrid, MappingError, PartitionGrid};
use crate::merge::{self, HorizontalPlan, MergeError, MergePlan, VerticalPlan, VoteOutcome};
use crate::quantization::{self, QuantError, QuantRange};
use crate::subarray_search::{self, Cell, MatchSpec, SearchError, SubarrayResult};
use crate::variation::{self, VariationError, VariationSpec};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<Violation>),
    #[error(transparent)]
    Quantization(#[from] QuantError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("entry {row}, dimension {col}: {message}")]
    BadCell {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// A cell of application data before quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataCell {
    Value(f64),
    Wildcard,
    Range(f64, f64),
}

/// Stored data after write: immutable for the lifetime of the queries.
#[derive(Debug, Clone)]
pub struct CamState {
    pub config: SimConfig,
    pub grid: PartitionGrid,
    pub plan: MergePlan,
    pub quant_range: QuantRange,
    /// Quantized blocks before variation.
    pub base_blocks: BlockGrid<Cell>,
    /// Blocks after device-to-device variation.
    pub blocks: BlockGrid<Cell>,
    pub variation: VariationSpec,
    pub write_seed: u64,
}

impl CamState {
    pub fn entries(&self) -> usize {
        self.grid.entries
    }

    pub fn dims(&self) -> usize {
        self.grid.dims
    }

    pub fn match_spec(&self) -> MatchSpec {
        MatchSpec::from_parts(self.config.app.match_type, self.config.app.match_parameter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub query_ordinal: usize,
    pub matched_indices: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    pub approximate: bool,
    pub warnings: Vec<String>,
}

fn quantize_cell(
    cell: DataCell,
    cell_type: CellType,
    max_level: u32,
    range: QuantRange,
) -> Result<Cell, String> {
    let q = |v| f64::from(quantization::quantize_value(v, max_level, range));
    match (cell, cell_type) {
        (DataCell::Value(v), CellType::Acam) => {
            let l = q(v);
            Ok(Cell::Range { lo: l, hi: l })
        }
        (DataCell::Value(v), _) => Ok(Cell::Level(q(v))),
        (DataCell::Wildcard, CellType::Tcam | CellType::Acam) => Ok(Cell::Wildcard),
        (DataCell::Wildcard, other) => Err(format!("{other} cells cannot store a don't-care")),
        (DataCell::Range(lo, hi), CellType::Acam) => Ok(Cell::Range {
            lo: q(lo),
            hi: q(hi),
        }),
        (DataCell::Range(..), other) => Err(format!("{other} cells cannot store a range")),
    }
}

/// Reads the experimental variation table when the device needs one.
fn variation_for(cfg: &SimConfig) -> Result<VariationSpec, EngineError> {
    let dev = &cfg.device;
    let table = match (&dev.empirical_table_path, dev.variation_spec) {
        (Some(path), config::VariationSource::Experimental) if dev.variation_enabled => {
            Some(variation::load_empirical_table(path)?)
        }
        _ => None,
    };
    Ok(VariationSpec::from_device(dev, table))
}

pub fn write(stored: &Array2<DataCell>, cfg: &SimConfig) -> Result<CamState, EngineError> {
    let spec = variation_for(cfg)?;
    write_with_variation(stored, cfg, spec)
}

/// Like [`write`] but with an explicit variation spec (no table file read).
pub fn write_with_variation(
    stored: &Array2<DataCell>,
    cfg: &SimConfig,
    variation: VariationSpec,
) -> Result<CamState, EngineError> {
    let violations = config::validate(cfg);
    if config::has_errors(&violations) {
        return Err(EngineError::InvalidConfig(violations));
    }
    let (k, n) = stored.dim();
    if k == 0 || n == 0 {
        return Err(EngineError::ShapeMismatch(format!(
            "stored data is {k}x{n}"
        )));
    }

    let quant_range = match cfg.app.value_range {
        Some((lo, hi)) => QuantRange::new(lo, hi)?,
        None => {
            let numbers: Vec<f64> = stored
                .iter()
                .flat_map(|c| match *c {
                    DataCell::Value(v) => vec![v],
                    DataCell::Range(lo, hi) => vec![lo, hi],
                    DataCell::Wildcard => vec![],
                })
                .collect();
            quantization::infer_range(&numbers)?
        }
    };
    let max_level = cfg.app.levels() - 1;
    let mut cells = Vec::with_capacity(k * n);
    for ((row, col), c) in stored.indexed_iter() {
        cells.push(
            quantize_cell(*c, cfg.circuit.cell_type, max_level, quant_range)
                .map_err(|message| EngineError::BadCell { row, col, message })?,
        );
    }
    let levels = Array2::from_shape_vec((k, n), cells).expect("shape preserved");

    let grid = mapping::plan_partition(k, n, cfg.circuit.rows, cfg.circuit.columns)?;
    let plan = merge::plan_merge(cfg, &grid)?;
    let base_blocks = mapping::slice_stored(&levels, &grid)?;
    let blocks = base_blocks
        .iter()
        .map(|row| {
            row.iter()
                .map(|b| variation::apply_d2d(b, &variation))
                .collect()
        })
        .collect();

    Ok(CamState {
        config: cfg.clone(),
        grid,
        plan,
        quant_range,
        base_blocks,
        blocks,
        write_seed: variation.seed,
        variation,
    })
}

/// Per-row-group outcome after the horizontal merge.
enum RowGroupOutcome {
    Distances(SubarrayResult),
    Votes(VoteOutcome),
}

/// Runs one query; `ordinal` selects the cycle-to-cycle variation draw.
pub fn query_one(
    state: &CamState,
    query: ArrayView1<f64>,
    ordinal: usize,
) -> Result<SearchResult, EngineError> {
    if query.len() != state.dims() {
        return Err(EngineError::ShapeMismatch(format!(
            "query has {} dims, stored data has {}",
            query.len(),
            state.dims()
        )));
    }
    let cfg = &state.config;
    let metric = cfg.app.distance_function;
    let spec = state.match_spec();
    let sl = cfg.circuit.sensing_limit;
    let max_level = cfg.app.levels() - 1;
    let levels: Vec<f64> = query
        .iter()
        .map(|v| {
            f64::from(quantization::quantize_value(
                *v,
                max_level,
                state.quant_range,
            ))
        })
        .collect();
    let segments = mapping::segment_query(&levels, &state.grid)?;
    let c2c = variation::c2c_active(&state.variation);

    let mut outcomes = Vec::with_capacity(state.grid.row_groups);
    for row in &state.blocks {
        let mut per_col = Vec::with_capacity(row.len());
        for (block, segment) in row.iter().zip(&segments) {
            let result = if c2c {
                let noisy = variation::sample_c2c(block, &state.variation, ordinal as u64);
                subarray_search::search_subarray(&noisy, segment, spec, metric, sl)?
            } else {
                subarray_search::search_subarray(block, segment, spec, metric, sl)?
            };
            per_col.push(result);
        }
        let outcome = match state.plan.horizontal {
            HorizontalPlan::NoneNeeded => RowGroupOutcome::Distances(per_col.swap_remove(0)),
            HorizontalPlan::And => {
                let sets: Vec<Vec<usize>> = per_col
                    .iter()
                    .map(|r| r.matched_local_rows.clone())
                    .collect();
                let rows = per_col[0].distances.len();
                let distances: Vec<f64> = (0..rows)
                    .map(|i| {
                        subarray_search::combine_segment_distances(
                            per_col.iter().map(|r| r.distances[i]),
                            metric,
                        )
                    })
                    .collect();
                RowGroupOutcome::Distances(SubarrayResult {
                    matched_local_rows: merge::merge_horizontal_and(&sets),
                    best_distance: distances.iter().copied().fold(f64::INFINITY, f64::min),
                    distances,
                })
            }
            HorizontalPlan::Voting => {
                let sets: Vec<Vec<usize>> =
                    per_col.into_iter().map(|r| r.matched_local_rows).collect();
                RowGroupOutcome::Votes(merge::merge_horizontal_voting(&sets, k_of(spec)))
            }
        };
        outcomes.push(outcome);
    }

    let grid = &state.grid;
    let tables: Option<Vec<Vec<f64>>> = outcomes
        .iter()
        .map(|o| match o {
            RowGroupOutcome::Distances(r) => Some(r.distances.clone()),
            RowGroupOutcome::Votes(_) => None,
        })
        .collect();
    let mut warnings = Vec::new();
    let matched_indices = match state.plan.vertical {
        VerticalPlan::NoneNeeded => match outcomes.pop().expect("one row group") {
            RowGroupOutcome::Distances(r) => r.matched_local_rows,
            RowGroupOutcome::Votes(v) => v.winners,
        },
        VerticalPlan::Gather => {
            let sets: Vec<Vec<usize>> = outcomes
                .into_iter()
                .map(|o| match o {
                    RowGroupOutcome::Distances(r) => r.matched_local_rows,
                    RowGroupOutcome::Votes(v) => v.winners,
                })
                .collect();
            merge::merge_vertical_gather(&sets, grid)
        }
        VerticalPlan::Comparator => {
            let mut results = Vec::with_capacity(outcomes.len());
            let mut votes = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                match o {
                    RowGroupOutcome::Distances(r) => results.push(r),
                    RowGroupOutcome::Votes(v) => votes.push(v),
                }
            }
            if votes.is_empty() {
                merge::merge_vertical_comparator(&results, k_of(spec), sl, grid)
            } else {
                warnings.push(
                    "best match merged across row and column groups by ranking \
                     per-row-group vote winners; no exact scheme exists"
                        .to_string(),
                );
                merge::merge_combined_voting(&votes, k_of(spec), grid).winners
            }
        }
    };
    if state.plan.approximate {
        warnings.insert(0, "voting merge: approximate best match".to_string());
    }

    let distances = tables.map(|t| {
        matched_indices
            .iter()
            .map(|g| t[g / grid.rows][g % grid.rows])
            .collect()
    });

    Ok(SearchResult {
        query_ordinal: ordinal,
        matched_indices,
        distances,
        approximate: state.plan.approximate,
        warnings,
    })
}

fn k_of(spec: MatchSpec) -> usize {
    match spec {
        MatchSpec::Best { k } => k,
        _ => 1,
    }
}

/// Runs a batch of queries (in parallel); result `i` has ordinal `i`.
pub fn query(state: &CamState, queries: &Array2<f64>) -> Result<Vec<SearchResult>, EngineError> {
    if queries.ncols() != state.dims() {
        return Err(EngineError::ShapeMismatch(format!(
            "queries have {} dims, stored data has {}",
            queries.ncols(),
            state.dims()
        )));
    }
    let rows: Vec<ArrayView1<f64>> = queries.axis_iter(Axis(0)).collect();
    rows.into_par_iter()
        .enumerate()
        .map(|(i, q)| query_one(state, q, i))
        .collect()
}

/// Fraction of queries whose matched entries carry the query's own label by
/// strict plurality. Empty match sets and label ties count as incorrect.
pub fn evaluate_accuracy(
    results: &[SearchResult],
    labels: &[i64],
    query_labels: &[i64],
) -> Result<f64, EngineError> {
    if results.len() != query_labels.len() {
        return Err(EngineError::LengthMismatch(format!(
            "{} results but {} query labels",
            results.len(),
            query_labels.len()
        )));
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (r, want) in results.iter().zip(query_labels) {
        let mut counts = std::collections::BTreeMap::new();
        for &idx in &r.matched_indices {
            let label = labels.get(idx).ok_or_else(|| {
                EngineError::LengthMismatch(format!(
                    "matched entry {idx} has no label ({} labels)",
                    labels.len()
                ))
            })?;
            *counts.entry(*label).or_insert(0usize) += 1;
        }
        let Some(top) = counts.values().copied().max() else {
            continue;
        };
        let leaders: Vec<i64> = counts
            .iter()
            .filter(|(_, c)| **c == top)
            .map(|(l, _)| *l)
            .collect();
        if leaders == [*want] {
            correct += 1;
        }
    }
    Ok(correct as f64 / results.len() as f64)
}
