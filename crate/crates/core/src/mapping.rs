//! Partitioning of a `K x N` stored matrix onto a grid of `R x C` subarrays.

use std::ops::Range;

use ndarray::{s, Array2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("local row {local_row} out of range for row group {row_group}")]
    OutOfRange { row_group: usize, local_row: usize },
    #[error("partition dimensions must all be >= 1")]
    ZeroDimension,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionGrid {
    pub entries: usize,
    pub dims: usize,
    pub rows: usize,
    pub columns: usize,
    pub row_groups: usize,
    pub col_groups: usize,
    pub row_boundaries: Vec<Range<usize>>,
    pub col_boundaries: Vec<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubarrayAddress {
    pub row_group: usize,
    pub col_group: usize,
}

impl PartitionGrid {
    pub fn subarrays(&self) -> usize {
        self.row_groups * self.col_groups
    }

    /// Number of real (non-padded) rows in a row group.
    pub fn valid_rows(&self, row_group: usize) -> usize {
        self.row_boundaries[row_group].len()
    }

    pub fn address(&self, row_group: usize, col_group: usize) -> SubarrayAddress {
        debug_assert!(row_group < self.row_groups && col_group < self.col_groups);
        SubarrayAddress {
            row_group,
            col_group,
        }
    }
}

fn tile(total: usize, size: usize) -> Vec<Range<usize>> {
    (0..total.div_ceil(size))
        .map(|g| g * size..((g + 1) * size).min(total))
        .collect()
}

pub fn plan_partition(
    entries: usize,
    dims: usize,
    rows: usize,
    columns: usize,
) -> Result<PartitionGrid, MappingError> {
    if entries == 0 || dims == 0 || rows == 0 || columns == 0 {
        return Err(MappingError::ZeroDimension);
    }
    let row_boundaries = tile(entries, rows);
    let col_boundaries = tile(dims, columns);
    Ok(PartitionGrid {
        entries,
        dims,
        rows,
        columns,
        row_groups: row_boundaries.len(),
        col_groups: col_boundaries.len(),
        row_boundaries,
        col_boundaries,
    })
}

/// One subarray's worth of stored cells. Always `R` rows tall; rows past the
/// end of the data are padding and are marked invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub cells: Array2<T>,
    pub valid: Vec<bool>,
    /// Global entry index of local row 0.
    pub row_offset: usize,
    /// Global dimension index of local column 0.
    pub col_offset: usize,
}

impl<T> Block<T> {
    pub fn valid_rows(&self) -> usize {
        self.valid.iter().take_while(|v| **v).count()
    }
}

/// Blocks indexed `[row_group][col_group]`.
pub type BlockGrid<T> = Vec<Vec<Block<T>>>;

pub fn slice_stored<T: Clone + Default>(
    data: &Array2<T>,
    grid: &PartitionGrid,
) -> Result<BlockGrid<T>, MappingError> {
    if data.dim() != (grid.entries, grid.dims) {
        return Err(MappingError::ShapeMismatch {
            expected: format!("{}x{}", grid.entries, grid.dims),
            got: format!("{}x{}", data.nrows(), data.ncols()),
        });
    }
    let blocks = grid
        .row_boundaries
        .iter()
        .map(|rows| {
            grid.col_boundaries
                .iter()
                .map(|cols| {
                    let mut cells = Array2::<T>::default((grid.rows, cols.len()));
                    cells
                        .slice_mut(s![..rows.len(), ..])
                        .assign(&data.slice(s![rows.clone(), cols.clone()]));
                    let mut valid = vec![false; grid.rows];
                    valid[..rows.len()].fill(true);
                    Block {
                        cells,
                        valid,
                        row_offset: rows.start,
                        col_offset: cols.start,
                    }
                })
                .collect()
        })
        .collect();
    Ok(blocks)
}

pub fn segment_query<T: Copy>(
    query: &[T],
    grid: &PartitionGrid,
) -> Result<Vec<Vec<T>>, MappingError> {
    if query.len() != grid.dims {
        return Err(MappingError::ShapeMismatch {
            expected: format!("query of length {}", grid.dims),
            got: format!("length {}", query.len()),
        });
    }
    Ok(grid
        .col_boundaries
        .iter()
        .map(|r| query[r.clone()].to_vec())
        .collect())
}

pub fn global_index(
    addr: SubarrayAddress,
    local_row: usize,
    grid: &PartitionGrid,
) -> Result<usize, MappingError> {
    if addr.row_group >= grid.row_groups || local_row >= grid.valid_rows(addr.row_group) {
        return Err(MappingError::OutOfRange {
            row_group: addr.row_group,
            local_row,
        });
    }
    Ok(addr.row_group * grid.rows + local_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mann_geometry() {
        let g = plan_partition(100, 128, 32, 64).unwrap();
        assert_eq!((g.row_groups, g.col_groups, g.subarrays()), (4, 2, 8));
    }

    #[test]
    fn fits_one_subarray() {
        let g = plan_partition(32, 64, 64, 64).unwrap();
        assert_eq!((g.row_groups, g.col_groups), (1, 1));
    }

    #[test]
    fn ceiling_rows() {
        let g = plan_partition(65, 1, 64, 64).unwrap();
        assert_eq!((g.row_groups, g.col_groups), (2, 1));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert_eq!(plan_partition(0, 1, 1, 1), Err(MappingError::ZeroDimension));
    }

    #[test]
    fn padded_last_block() {
        let data = Array2::from_shape_fn((3, 2), |(r, c)| (r * 2 + c) as u32 + 1);
        let g = plan_partition(3, 2, 2, 2).unwrap();
        let blocks = slice_stored(&data, &g).unwrap();
        let last = &blocks[1][0];
        assert_eq!(last.valid, vec![true, false]);
        assert_eq!(last.valid_rows(), 1);
        assert_eq!(last.cells.row(1).to_vec(), vec![0, 0]);
        assert_eq!(last.row_offset, 2);
    }

    #[test]
    fn mann_last_row_group() {
        let data = Array2::<u32>::zeros((100, 128));
        let g = plan_partition(100, 128, 32, 64).unwrap();
        assert_eq!(g.row_boundaries[3], 96..100);
        let blocks = slice_stored(&data, &g).unwrap();
        let b = &blocks[3][1];
        assert_eq!(b.valid.iter().filter(|v| !**v).count(), 28);
        assert_eq!(b.col_offset, 64);
    }

    #[test]
    fn shape_mismatch() {
        let data = Array2::<u32>::zeros((4, 4));
        let g = plan_partition(4, 5, 2, 2).unwrap();
        assert!(matches!(
            slice_stored(&data, &g),
            Err(MappingError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            segment_query(&[0u32; 4], &g),
            Err(MappingError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn query_segments() {
        let g = plan_partition(1, 128, 1, 64).unwrap();
        let seg = segment_query(&[0u32; 128], &g).unwrap();
        assert_eq!(seg.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64]);

        let g = plan_partition(1, 10, 1, 64).unwrap();
        assert_eq!(segment_query(&[0u32; 10], &g).unwrap()[0].len(), 10);

        let g = plan_partition(1, 130, 1, 64).unwrap();
        let seg = segment_query(&[0u32; 130], &g).unwrap();
        assert_eq!(
            seg.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![64, 64, 2]
        );
    }

    #[test]
    fn global_indices() {
        let g = plan_partition(100, 128, 32, 64).unwrap();
        assert_eq!(global_index(g.address(3, 0), 2, &g), Ok(98));
        assert_eq!(global_index(g.address(0, 0), 0, &g), Ok(0));
        // Row group 3 has only 4 real rows.
        assert!(global_index(g.address(3, 0), 4, &g).is_err());
    }

    proptest! {
        #[test]
        fn tiling_is_lossless(k in 1usize..40, n in 1usize..40, r in 1usize..12, c in 1usize..12) {
            let data = Array2::from_shape_fn((k, n), |(i, j)| (i * 1000 + j) as u32);
            let g = plan_partition(k, n, r, c).unwrap();
            prop_assert!(g.row_groups * r >= k && (g.row_groups - 1) * r < k);
            prop_assert!(g.col_groups * c >= n && (g.col_groups - 1) * c < n);
            let blocks = slice_stored(&data, &g).unwrap();
            let mut rebuilt = Array2::<u32>::zeros((k, n));
            for (rg, row) in blocks.iter().enumerate() {
                for (cg, b) in row.iter().enumerate() {
                    for local in 0..r {
                        if !b.valid[local] {
                            continue;
                        }
                        let global = global_index(g.address(rg, cg), local, &g).unwrap();
                        for (j, v) in b.cells.row(local).iter().enumerate() {
                            rebuilt[[global, b.col_offset + j]] = *v;
                        }
                    }
                }
            }
            prop_assert_eq!(rebuilt, data);
        }

        #[test]
        fn more_columns_never_more_groups(n in 1usize..500, c in 1usize..100, extra in 0usize..50) {
            let a = plan_partition(1, n, 1, c).unwrap();
            let b = plan_partition(1, n, 1, c + extra).unwrap();
            prop_assert!(b.col_groups <= a.col_groups);
        }

        #[test]
        fn segments_concatenate(n in 1usize..300, c in 1usize..70) {
            let q: Vec<u32> = (0..n as u32).collect();
            let g = plan_partition(1, n, 1, c).unwrap();
            let joined: Vec<u32> = segment_query(&q, &g).unwrap().concat();
            prop_assert_eq!(joined, q);
        }
    }
}
