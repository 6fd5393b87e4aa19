//! Linear quantization of real-valued data onto the `2^bits` level alphabet
//! of a CAM cell.

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("cannot infer a quantization range from empty data")]
    EmptyData,
    #[error("bad quantization range [{0}, {1}]: min must be below max")]
    BadRange(f64, f64),
    #[error("bit width must be between 1 and 16, got {0}")]
    BadBits(u32),
}

/// Real interval mapped linearly onto levels `0..=L-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantRange {
    pub min_val: f64,
    pub max_val: f64,
}

impl QuantRange {
    pub fn new(min_val: f64, max_val: f64) -> Result<Self, QuantError> {
        if !min_val.is_finite() || !max_val.is_finite() || min_val >= max_val {
            return Err(QuantError::BadRange(min_val, max_val));
        }
        Ok(QuantRange { min_val, max_val })
    }

    pub fn width(&self) -> f64 {
        self.max_val - self.min_val
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelMatrix {
    pub values: Array2<u32>,
    /// Alphabet size `2^bits`.
    pub levels: u32,
    pub range: QuantRange,
}

impl LevelMatrix {
    /// Maps levels back to the real value at the centre of each lattice point.
    pub fn dequantize(&self) -> Array2<f64> {
        let step = self.range.width() / f64::from(self.levels - 1);
        self.values
            .mapv(|l| self.range.min_val + f64::from(l) * step)
    }
}

/// Minimum and maximum over all elements. A constant input `v` yields
/// `(v, v + 1)`.
pub fn infer_range<'a, I>(values: I) -> Result<QuantRange, QuantError>
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut it = values.into_iter();
    let first = *it.next().ok_or(QuantError::EmptyData)?;
    let (lo, hi) = it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        QuantRange::new(lo, lo + 1.0)
    } else {
        QuantRange::new(lo, hi)
    }
}

fn check_bits(bits: u32) -> Result<u32, QuantError> {
    if (1..=16).contains(&bits) {
        Ok((1u32 << bits) - 1)
    } else {
        Err(QuantError::BadBits(bits))
    }
}

/// Quantizes one value; `max_level` is `2^bits - 1`.
#[inline]
pub fn quantize_value(v: f64, max_level: u32, range: QuantRange) -> u32 {
    let clamped = v.clamp(range.min_val, range.max_val);
    // f64::round rounds half away from zero.
    let scaled = (clamped - range.min_val) / range.width() * f64::from(max_level);
    (scaled.round() as u32).min(max_level)
}

pub fn quantize_linear(
    data: &Array2<f64>,
    bits: u32,
    range: QuantRange,
) -> Result<LevelMatrix, QuantError> {
    let max_level = check_bits(bits)?;
    let range = QuantRange::new(range.min_val, range.max_val)?;
    Ok(LevelMatrix {
        values: data.mapv(|v| quantize_value(v, max_level, range)),
        levels: max_level + 1,
        range,
    })
}
