//! CSV readers for stored data, query data and label files.
//!
//! Data files hold one entry per line. A cell is a real number, `*` for a
//! TCAM don't-care, or `lo:hi` for an ACAM range.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use super::DataCell;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}, column {column}: cannot parse `{text}`")]
    Parse {
        line: u64,
        column: usize,
        text: String,
    },
    #[error("line {line} has {got} values, expected {expected}")]
    Ragged {
        line: u64,
        got: usize,
        expected: usize,
    },
    #[error("no data rows")]
    Empty,
    #[error("query data may only contain numbers (line {line}, column {column})")]
    NonNumericQuery { line: u64, column: usize },
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_real(t: &str) -> Option<f64> {
    t.replace('\u{2212}', "-")
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
}

fn parse_cell(t: &str) -> Option<DataCell> {
    let t = t.trim();
    if t == "*" {
        return Some(DataCell::Wildcard);
    }
    // A leading sign is never a range separator, so split on the first ':'.
    if let Some((lo, hi)) = t.split_once(':') {
        let (lo, hi) = (parse_real(lo.trim())?, parse_real(hi.trim())?);
        return (lo <= hi).then_some(DataCell::Range(lo, hi));
    }
    parse_real(t).map(DataCell::Value)
}

pub fn parse_data_csv(text: &str) -> Result<Array2<DataCell>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut cells = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(DataError::Ragged {
                line,
                got: record.len(),
                expected,
            });
        }
        for (column, field) in record.iter().enumerate() {
            cells.push(parse_cell(field).ok_or_else(|| DataError::Parse {
                line,
                column: column + 1,
                text: field.to_string(),
            })?);
        }
        rows += 1;
    }
    let width = width.ok_or(DataError::Empty)?;
    Ok(Array2::from_shape_vec((rows, width), cells).expect("row widths checked"))
}

pub fn read_data_file(path: &Path) -> Result<Array2<DataCell>, DataError> {
    parse_data_csv(&read(path)?)
}

/// Reads a query file; every cell must be numeric.
pub fn read_query_file(path: &Path) -> Result<Array2<f64>, DataError> {
    numeric(parse_data_csv(&read(path)?)?)
}

pub fn numeric(data: Array2<DataCell>) -> Result<Array2<f64>, DataError> {
    if let Some(((r, c), _)) = data
        .indexed_iter()
        .find(|(_, cell)| !matches!(cell, DataCell::Value(_)))
    {
        return Err(DataError::NonNumericQuery {
            line: r as u64 + 1,
            column: c + 1,
        });
    }
    Ok(data.mapv(|c| match c {
        DataCell::Value(v) => v,
        _ => unreachable!(),
    }))
}

pub fn parse_labels(text: &str) -> Result<Vec<i64>, DataError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            let t = l.trim().trim_end_matches(',').trim();
            t.parse::<i64>().map_err(|_| DataError::Parse {
                line: i as u64 + 1,
                column: 1,
                text: t.to_string(),
            })
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<i64>, DataError> {
    parse_labels(&read(path)?)
}
