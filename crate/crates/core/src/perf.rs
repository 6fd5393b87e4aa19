//! Architecture estimation and latency/energy/area rollup over the
//! bank-mat-array-subarray hierarchy.
//!
//! Subarray costs come from a cost-model file (circuit-level numbers produced
//! elsewhere). Each merge layer adds peripheral units sized by
//! [`estimate_peripherals`] and a linear per-child interconnect cost. A
//! fourth merge layer, `chip`, combines banks when there is more than one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{MatchType, SimConfig};
use crate::mapping::{self, MappingError};
use crate::merge::{self, HorizontalPlan, VerticalPlan};

#[derive(Debug, Error)]
pub enum PerfError {
    #[error("cost model {path} not found")]
    FileNotFound { path: PathBuf },
    #[error("cannot read cost model {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cost model format error: {0}")]
    FormatError(String),
    #[error("negative cost: {0}")]
    NegativeCost(String),
    #[error("cost model has no entry for {0}")]
    MissingCostKey(String),
    #[error("query count must be >= 1")]
    NoQueries,
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Subarray,
    Array,
    Mat,
    Bank,
    Chip,
}

impl Layer {
    pub const MERGE_LAYERS: [Layer; 4] = [Layer::Array, Layer::Mat, Layer::Bank, Layer::Chip];
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Layer::Subarray => "subarray",
            Layer::Array => "array",
            Layer::Mat => "mat",
            Layer::Bank => "bank",
            Layer::Chip => "chip",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Comparator,
    Voter,
    AndGate,
    Register,
    Adder,
    BufferPerBit,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Comparator => "comparator",
            Unit::Voter => "voter",
            Unit::AndGate => "and_gate",
            Unit::Register => "register",
            Unit::Adder => "adder",
            Unit::BufferPerBit => "buffer_per_bit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubarrayEntry {
    pub cell_type: String,
    pub rows: usize,
    pub columns: usize,
    pub device_type: String,
    /// ns
    pub search_latency: f64,
    /// pJ
    pub search_energy: f64,
    /// ns
    pub write_latency: f64,
    /// pJ
    pub write_energy: f64,
    /// µm²
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCost {
    pub latency: f64,
    pub energy: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterconnectCost {
    pub latency_per_block: f64,
    pub energy_per_block: f64,
    pub area_per_block: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub subarrays: Vec<SubarrayEntry>,
    pub peripheral_units: BTreeMap<Unit, UnitCost>,
    /// Keyed by merge layer; absent layers cost nothing.
    #[serde(default)]
    pub interconnect: BTreeMap<Layer, InterconnectCost>,
    /// Per-block unit counts that replace the estimated ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub peripheral_count_overrides: BTreeMap<Layer, BTreeMap<Unit, usize>>,
}

impl CostModel {
    pub fn subarray(&self, key: &SubarrayKey) -> Result<&SubarrayEntry, PerfError> {
        self.subarrays
            .iter()
            .find(|e| {
                e.cell_type.eq_ignore_ascii_case(&key.cell_type)
                    && e.rows == key.rows
                    && e.columns == key.columns
                    && e.device_type == key.device_type
            })
            .ok_or_else(|| {
                PerfError::MissingCostKey(format!(
                    "subarray {} {}x{} on {}",
                    key.cell_type, key.rows, key.columns, key.device_type
                ))
            })
    }

    fn unit(&self, unit: Unit) -> Result<UnitCost, PerfError> {
        self.peripheral_units
            .get(&unit)
            .copied()
            .ok_or_else(|| PerfError::MissingCostKey(format!("peripheral unit `{unit}`")))
    }

    fn interconnect(&self, layer: Layer) -> InterconnectCost {
        self.interconnect.get(&layer).copied().unwrap_or_default()
    }

    fn check(&self) -> Result<(), PerfError> {
        let neg = |what: String, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PerfError::NegativeCost(format!("{what} = {v}")))
            }
        };
        for e in &self.subarrays {
            let name = format!("{} {}x{} {}", e.cell_type, e.rows, e.columns, e.device_type);
            neg(format!("{name} search_latency"), e.search_latency)?;
            neg(format!("{name} search_energy"), e.search_energy)?;
            neg(format!("{name} write_latency"), e.write_latency)?;
            neg(format!("{name} write_energy"), e.write_energy)?;
            neg(format!("{name} area"), e.area)?;
        }
        for (u, c) in &self.peripheral_units {
            neg(format!("{u} latency"), c.latency)?;
            neg(format!("{u} energy"), c.energy)?;
            neg(format!("{u} area"), c.area)?;
        }
        for (l, c) in &self.interconnect {
            if *l == Layer::Subarray {
                return Err(PerfError::FormatError(
                    "interconnect is keyed by array, mat, bank or chip".into(),
                ));
            }
            neg(format!("{l} latency_per_block"), c.latency_per_block)?;
            neg(format!("{l} energy_per_block"), c.energy_per_block)?;
            neg(format!("{l} area_per_block"), c.area_per_block)?;
        }
        Ok(())
    }
}

pub fn parse_cost_model(text: &str) -> Result<CostModel, PerfError> {
    let cm: CostModel =
        serde_json::from_str(text).map_err(|e| PerfError::FormatError(e.to_string()))?;
    cm.check()?;
    Ok(cm)
}

pub fn load_cost_model(path: &Path) -> Result<CostModel, PerfError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PerfError::FileNotFound {
            path: path.to_path_buf(),
        },
        _ => PerfError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_cost_model(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubarrayKey {
    pub cell_type: String,
    pub rows: usize,
    pub columns: usize,
    pub device_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PeripheralItem {
    pub unit: Unit,
    pub count: usize,
    /// Sequential stages this unit type adds to the critical path.
    pub stage_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeScheme {
    And,
    Voting,
    Comparator,
    Gather,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct StageInventory {
    pub items: Vec<PeripheralItem>,
    /// Depth of the reduction tree.
    pub depth: usize,
    pub buffer_bits: usize,
}

fn tree_depth(fan_in: usize) -> usize {
    // ceil(log2(fan_in)) for fan_in >= 1
    (usize::BITS - (fan_in.max(1) - 1).leading_zeros()) as usize
}

/// Peripherals for one merge stage over `fan_in` inputs, as balanced binary
/// trees. `rows` sizes the gather buffer.
pub fn estimate_peripherals(
    scheme: MergeScheme,
    fan_in: usize,
    match_type: MatchType,
    k: usize,
    rows: usize,
) -> StageInventory {
    if fan_in <= 1 {
        return StageInventory::default();
    }
    let depth = tree_depth(fan_in);
    let item = |unit, count, stage_depth| PeripheralItem {
        unit,
        count,
        stage_depth,
    };
    let items = match scheme {
        MergeScheme::Comparator => {
            // Best match keeps k results per stage.
            let keep = if match_type == MatchType::Best {
                k.max(1)
            } else {
                1
            };
            vec![
                item(Unit::Comparator, fan_in - 1, depth),
                item(Unit::Register, depth * keep, depth),
            ]
        }
        MergeScheme::Voting => vec![
            item(Unit::Voter, fan_in, 1),
            item(Unit::Adder, fan_in - 1, depth),
        ],
        MergeScheme::And => vec![item(Unit::AndGate, fan_in - 1, depth)],
        MergeScheme::Gather => vec![item(Unit::BufferPerBit, fan_in * rows, 1)],
    };
    StageInventory {
        buffer_bits: if scheme == MergeScheme::Gather {
            fan_in * rows
        } else {
            0
        },
        items,
        depth: if scheme == MergeScheme::Gather {
            1
        } else {
            depth
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockSpec {
    pub children: usize,
    pub horizontal_fan_in: usize,
    pub vertical_fan_in: usize,
    pub inventory: Vec<PeripheralItem>,
    pub buffer_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub layer: Layer,
    pub block_count: usize,
    pub max_fan_in: usize,
    /// Unit counts summed over all blocks of the layer.
    pub inventory_total: Vec<PeripheralItem>,
    pub buffer_bits_total: usize,
    #[serde(skip)]
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchitectureSpec {
    pub entries: usize,
    pub dims: usize,
    pub row_groups: usize,
    pub col_groups: usize,
    pub subarrays_total: usize,
    pub arrays: usize,
    pub mats: usize,
    pub banks: usize,
    pub horizontal: HorizontalPlan,
    pub vertical: VerticalPlan,
    pub subarray_key: SubarrayKey,
    pub match_type: MatchType,
    pub layers: Vec<LayerSpec>,
}

fn sum_items(blocks: &[BlockSpec]) -> Vec<PeripheralItem> {
    let mut totals: BTreeMap<Unit, PeripheralItem> = BTreeMap::new();
    for b in blocks {
        for it in &b.inventory {
            let e = totals.entry(it.unit).or_insert(PeripheralItem {
                unit: it.unit,
                count: 0,
                stage_depth: 0,
            });
            e.count += it.count;
            e.stage_depth = e.stage_depth.max(it.stage_depth);
        }
    }
    totals.into_values().collect()
}

fn add_stage(into: &mut Vec<PeripheralItem>, stage: &StageInventory, copies: usize) {
    for it in &stage.items {
        match into.iter_mut().find(|x| x.unit == it.unit) {
            Some(x) => {
                x.count += it.count * copies;
                x.stage_depth += it.stage_depth;
            }
            None => into.push(PeripheralItem {
                count: it.count * copies,
                ..*it
            }),
        }
    }
}

/// Block counts and per-layer peripheral inventory for storing `entries x
/// dims` data under `cfg`.
pub fn estimate_architecture(
    cfg: &SimConfig,
    entries: usize,
    dims: usize,
) -> Result<ArchitectureSpec, PerfError> {
    let grid = mapping::plan_partition(entries, dims, cfg.circuit.rows, cfg.circuit.columns)?;
    let (horizontal, vertical) = merge::requested_schemes(cfg, &grid);
    let total = grid.subarrays();
    let per = [
        cfg.arch.subarrays_per_array.max(1),
        cfg.arch.arrays_per_mat.max(1),
        cfg.arch.mats_per_bank.max(1),
    ];
    let match_type = cfg.app.match_type;
    let k = cfg.app.k();
    let h_scheme = match horizontal {
        HorizontalPlan::NoneNeeded => None,
        HorizontalPlan::And => Some(MergeScheme::And),
        HorizontalPlan::Voting => Some(MergeScheme::Voting),
    };
    let v_scheme = match vertical {
        VerticalPlan::NoneNeeded => None,
        VerticalPlan::Gather => Some(MergeScheme::Gather),
        VerticalPlan::Comparator => Some(MergeScheme::Comparator),
    };
    // Column groups covered by a block spanning `s` subarrays (row-major
    // placement, column groups of one row group contiguous).
    let g = if h_scheme.is_some() {
        grid.col_groups
    } else {
        1
    };
    let cover = |s: usize| s.min(g).max(1);

    let mut layers = Vec::with_capacity(4);
    let mut children = total;
    let mut child_span = 1usize;
    let mut counts = [0usize; 3];
    for (i, layer) in Layer::MERGE_LAYERS.into_iter().enumerate() {
        let per_block = if i < 3 { per[i] } else { children };
        let block_count = children.div_ceil(per_block);
        if i < 3 {
            counts[i] = block_count;
        }
        let span = child_span * per_block;
        let blocks: Vec<BlockSpec> = (0..block_count)
            .map(|b| {
                let f = per_block.min(children - b * per_block);
                let h = cover(span).div_ceil(cover(child_span)).clamp(1, f);
                let v = f.div_ceil(h);
                let mut inventory = Vec::new();
                let mut buffer_bits = 0;
                if let Some(s) = h_scheme {
                    let st = estimate_peripherals(s, h, match_type, k, grid.rows);
                    add_stage(&mut inventory, &st, v);
                    buffer_bits += st.buffer_bits * v;
                }
                if let Some(s) = v_scheme {
                    let st = estimate_peripherals(s, v, match_type, k, grid.rows);
                    add_stage(&mut inventory, &st, 1);
                    buffer_bits += st.buffer_bits;
                }
                BlockSpec {
                    children: f,
                    horizontal_fan_in: h,
                    vertical_fan_in: v,
                    inventory,
                    buffer_bits,
                }
            })
            .collect();
        layers.push(LayerSpec {
            layer,
            block_count,
            max_fan_in: blocks.iter().map(|b| b.children).max().unwrap_or(0),
            inventory_total: sum_items(&blocks),
            buffer_bits_total: blocks.iter().map(|b| b.buffer_bits).sum(),
            blocks,
        });
        children = block_count;
        child_span = span;
    }

    Ok(ArchitectureSpec {
        entries,
        dims,
        row_groups: grid.row_groups,
        col_groups: grid.col_groups,
        subarrays_total: total,
        arrays: counts[0],
        mats: counts[1],
        banks: counts[2],
        horizontal,
        vertical,
        subarray_key: SubarrayKey {
            cell_type: cfg.circuit.cell_type.to_string(),
            rows: cfg.circuit.rows,
            columns: cfg.circuit.columns,
            device_type: cfg.device.device_type.clone(),
        },
        match_type,
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Search,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Cam,
    Peripheral,
    Interconnect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub layer: Layer,
    pub component: Component,
    /// Contribution to the critical path, ns.
    pub latency: f64,
    /// Per-operation energy, pJ.
    pub energy: f64,
    /// µm²
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfReport {
    pub operation: Operation,
    pub queries: usize,
    /// Per-operation latency, ns.
    pub latency: f64,
    /// Per-operation energy, pJ.
    pub energy: f64,
    /// Energy for all `queries` operations, pJ.
    pub total_energy: f64,
    /// µm²
    pub area: f64,
    /// Per-operation energy-delay product, pJ·ns.
    pub edp: f64,
    pub breakdown: Vec<BreakdownRow>,
}

/// Latency, energy and area of one block's own peripherals.
fn peripheral_cost(
    cm: &CostModel,
    layer: Layer,
    inventory: &[PeripheralItem],
    active: bool,
) -> Result<(f64, f64, f64), PerfError> {
    let overrides = cm.peripheral_count_overrides.get(&layer);
    let (mut lat, mut en, mut ar) = (0.0, 0.0, 0.0);
    for it in inventory {
        let count = overrides
            .and_then(|o| o.get(&it.unit).copied())
            .unwrap_or(it.count);
        if count == 0 {
            continue;
        }
        let c = cm.unit(it.unit)?;
        ar += c.area * count as f64;
        if active {
            lat += c.latency * it.stage_depth as f64;
            en += c.energy * count as f64;
        }
    }
    Ok((lat, en, ar))
}

/// Per-block critical-path contributions: index 0 is the subarray, then
/// (peripheral, interconnect) per merge layer.
type PathContribs = [f64; 1 + 2 * 4];

fn path_latency(p: &PathContribs) -> f64 {
    p.iter().sum()
}

pub fn predict(
    arch: &ArchitectureSpec,
    cm: &CostModel,
    op: Operation,
    queries: usize,
) -> Result<PerfReport, PerfError> {
    if queries == 0 {
        return Err(PerfError::NoQueries);
    }
    let sub = cm.subarray(&arch.subarray_key)?;
    let (sub_lat, sub_en) = match op {
        Operation::Search => (sub.search_latency, sub.search_energy),
        Operation::Write => (sub.write_latency, sub.write_energy),
    };
    let n_sub = arch.subarrays_total as f64;

    let mut rows = vec![BreakdownRow {
        layer: Layer::Subarray,
        component: Component::Cam,
        latency: sub_lat,
        energy: sub_en * n_sub,
        area: sub.area * n_sub,
    }];

    let mut start = [0.0; 9];
    start[0] = sub_lat;
    let mut child_paths: Vec<PathContribs> = vec![start; arch.subarrays_total];
    for (li, layer) in arch.layers.iter().enumerate() {
        let ic = cm.interconnect(layer.layer);
        let mut per_en = 0.0;
        let mut per_ar = 0.0;
        let mut ic_en = 0.0;
        let mut ic_ar = 0.0;
        let mut paths = Vec::with_capacity(layer.blocks.len());
        let mut next_child = 0;
        for block in &layer.blocks {
            let (p_lat, p_en, p_ar) =
                peripheral_cost(cm, layer.layer, &block.inventory, op == Operation::Search)?;
            let f = block.children as f64;
            per_en += p_en;
            per_ar += p_ar;
            ic_en += ic.energy_per_block * f;
            ic_ar += ic.area_per_block * f;
            let slowest = child_paths[next_child..next_child + block.children]
                .iter()
                .copied()
                .reduce(|a, b| {
                    if path_latency(&b) > path_latency(&a) {
                        b
                    } else {
                        a
                    }
                })
                .expect("blocks have children");
            next_child += block.children;
            let mut path = slowest;
            path[1 + 2 * li] = p_lat;
            path[2 + 2 * li] = ic.latency_per_block * f;
            paths.push(path);
        }
        rows.push(BreakdownRow {
            layer: layer.layer,
            component: Component::Peripheral,
            latency: 0.0,
            energy: per_en,
            area: per_ar,
        });
        rows.push(BreakdownRow {
            layer: layer.layer,
            component: Component::Interconnect,
            latency: 0.0,
            energy: ic_en,
            area: ic_ar,
        });
        child_paths = paths;
    }
    let critical = child_paths
        .into_iter()
        .reduce(|a, b| {
            if path_latency(&b) > path_latency(&a) {
                b
            } else {
                a
            }
        })
        .expect("one top block");
    for (row, lat) in rows.iter_mut().zip(critical) {
        row.latency = lat;
    }

    let latency: f64 = rows.iter().map(|r| r.latency).sum();
    let energy: f64 = rows.iter().map(|r| r.energy).sum();
    let area: f64 = rows.iter().map(|r| r.area).sum();
    Ok(PerfReport {
        operation: op,
        queries,
        latency,
        energy,
        total_energy: energy * queries as f64,
        area,
        edp: energy * latency,
        breakdown: rows,
    })
}
