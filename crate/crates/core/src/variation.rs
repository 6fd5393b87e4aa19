//! Device-to-device (fixed at write time) and cycle-to-cycle (fresh per
//! query) variation of stored levels.
//!
//! Every offset is derived from a counter: the seed, a stream tag, the query
//! ordinal and the global cell coordinates are hashed into a per-cell RNG
//! seed. Results therefore do not depend on partitioning, evaluation order
//! or thread scheduling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::config::{DeviceConfig, VariationSource, VariationType};
use crate::mapping::Block;
use crate::subarray_search::Cell;

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("empirical table {path} not found")]
    FileNotFound { path: PathBuf },
    #[error("cannot read empirical table {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: expected a real offset, got `{text}`")]
    FormatError {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("empirical table {path} has no offsets")]
    EmptyTable { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationKind {
    None,
    D2D,
    C2C,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariationSampler {
    /// Zero-mean Gaussian with the given standard deviation.
    Gaussian(f64),
    /// Offsets drawn uniformly, with replacement, from measured samples.
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationSpec {
    pub kind: VariationKind,
    pub sampler: VariationSampler,
    pub seed: u64,
}

impl VariationSpec {
    pub fn none() -> Self {
        VariationSpec {
            kind: VariationKind::None,
            sampler: VariationSampler::Gaussian(0.0),
            seed: 0,
        }
    }

    pub fn gaussian(kind: VariationKind, sigma: f64, seed: u64) -> Self {
        VariationSpec {
            kind,
            sampler: VariationSampler::Gaussian(sigma),
            seed,
        }
    }

    /// Builds the spec for a device section. `empirical` must hold the loaded
    /// table when the device uses experimental variation.
    pub fn from_device(dev: &DeviceConfig, empirical: Option<Vec<f64>>) -> Self {
        if !dev.variation_enabled {
            return VariationSpec::none();
        }
        let kind = match dev.variation_type {
            VariationType::D2D => VariationKind::D2D,
            VariationType::C2C => VariationKind::C2C,
            VariationType::Both => VariationKind::Both,
        };
        let sampler = match dev.variation_spec {
            VariationSource::Statistical => VariationSampler::Gaussian(dev.variation_std),
            VariationSource::Experimental => {
                VariationSampler::Empirical(empirical.unwrap_or_default())
            }
        };
        VariationSpec {
            kind,
            sampler,
            seed: dev.seed,
        }
    }

    fn has_d2d(&self) -> bool {
        matches!(self.kind, VariationKind::D2D | VariationKind::Both)
    }

    fn has_c2c(&self) -> bool {
        matches!(self.kind, VariationKind::C2C | VariationKind::Both)
    }

    /// True when the sampler can only ever produce a zero offset.
    fn is_trivial(&self) -> bool {
        match &self.sampler {
            VariationSampler::Gaussian(s) => *s == 0.0,
            VariationSampler::Empirical(v) => v.iter().all(|x| *x == 0.0),
        }
    }
}

const D2D_STREAM: u64 = 0x6432_6400;
const C2C_STREAM: u64 = 0x6332_6300;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cell_key(seed: u64, stream: u64, ordinal: u64, row: usize, col: usize, bound: u64) -> u64 {
    [stream, ordinal, row as u64, col as u64, bound]
        .into_iter()
        .fold(splitmix64(seed), |h, x| splitmix64(h ^ x))
}

fn draw_offset(sampler: &VariationSampler, key: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    match sampler {
        VariationSampler::Gaussian(sigma) => {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        }
        VariationSampler::Empirical(samples) => samples[rng.random_range(0..samples.len())],
    }
}

fn perturb(block: &Block<Cell>, spec: &VariationSpec, stream: u64, ordinal: u64) -> Block<Cell> {
    let mut out = block.clone();
    for ((r, c), cell) in out.cells.indexed_iter_mut() {
        if !block.valid[r] {
            continue;
        }
        let row = block.row_offset + r;
        let col = block.col_offset + c;
        let offset = |bound| {
            draw_offset(
                &spec.sampler,
                cell_key(spec.seed, stream, ordinal, row, col, bound),
            )
        };
        *cell = match *cell {
            Cell::Level(v) => Cell::Level(v + offset(0)),
            Cell::Range { lo, hi } => {
                let (a, b) = (lo + offset(0), hi + offset(1));
                Cell::Range {
                    lo: a.min(b),
                    hi: a.max(b),
                }
            }
            Cell::Wildcard => Cell::Wildcard,
        };
    }
    out
}

/// One-time device-to-device perturbation, applied at write.
pub fn apply_d2d(block: &Block<Cell>, spec: &VariationSpec) -> Block<Cell> {
    if !spec.has_d2d() || spec.is_trivial() {
        return block.clone();
    }
    perturb(block, spec, D2D_STREAM, 0)
}

/// Cycle-to-cycle perturbation for the query with the given ordinal.
pub fn sample_c2c(block: &Block<Cell>, spec: &VariationSpec, query_ordinal: u64) -> Block<Cell> {
    if !spec.has_c2c() || spec.is_trivial() {
        return block.clone();
    }
    perturb(block, spec, C2C_STREAM, query_ordinal)
}

/// True when [`sample_c2c`] would change anything.
pub fn c2c_active(spec: &VariationSpec) -> bool {
    spec.has_c2c() && !spec.is_trivial()
}

/// Reads one real offset per line; blank lines and `#` comments are skipped.
pub fn load_empirical_table(path: &Path) -> Result<Vec<f64>, VariationError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => VariationError::FileNotFound {
            path: path.to_path_buf(),
        },
        _ => VariationError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        // Accept the unicode minus sign as well as ASCII '-'.
        let parsed = t.replace('\u{2212}', "-").parse::<f64>();
        match parsed {
            Ok(v) if v.is_finite() => out.push(v),
            _ => {
                return Err(VariationError::FormatError {
                    path: path.to_path_buf(),
                    line: i + 1,
                    text: t.to_string(),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(VariationError::EmptyTable {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}
