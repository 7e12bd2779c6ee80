//! Sample matrices, column blocks and dense pairwise distance matrices.

use crate::error::{Error, Result};

/// Dense row-major `n x d` sample matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::invalid(format!(
                "matrix of shape {n}x{d} needs {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite values"));
        }
        Ok(DataMatrix { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        DataMatrix::new(rows.len(), d, rows.concat())
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("columns have differing lengths"));
        }
        let d = columns.len();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            values.extend(columns.iter().map(|c| c[i]));
        }
        DataMatrix::new(n, d, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics, and a 0-column matrix still has n empty rows.
        (0..self.n).map(move |i| self.row(i))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// New matrix keeping only `cols`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<DataMatrix> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.d) {
            return Err(Error::invalid(format!("column {c} out of range 0..{}", self.d)));
        }
        let mut values = Vec::with_capacity(self.n * cols.len());
        for row in self.rows() {
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Ok(DataMatrix {
            n: self.n,
            d: cols.len(),
            values,
        })
    }

    /// New matrix with rows reordered so that row `i` is old row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<DataMatrix> {
        if order.len() != self.n || order.iter().any(|&i| i >= self.n) {
            return Err(Error::invalid("row permutation does not match the matrix"));
        }
        let mut values = Vec::with_capacity(self.values.len());
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Ok(DataMatrix {
            n: self.n,
            d: self.d,
            values,
        })
    }
}

/// Split of the joint column set into an X-block and a Y-block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    x_cols: Vec<usize>,
    y_cols: Vec<usize>,
}

impl BlockPartition {
    /// Both blocks must be non-empty, disjoint and together cover `0..n_cols`.
    pub fn new(x_cols: Vec<usize>, y_cols: Vec<usize>, n_cols: usize) -> Result<Self> {
        if x_cols.is_empty() || y_cols.is_empty() {
            return Err(Error::invalid("X and Y blocks must both be non-empty"));
        }
        let mut seen = vec![false; n_cols];
        for &c in x_cols.iter().chain(&y_cols) {
            if c >= n_cols {
                return Err(Error::invalid(format!("column {c} out of range 0..{n_cols}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::invalid(format!(
                    "column {c} appears twice in the block partition"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("block partition does not cover every column"));
        }
        Ok(BlockPartition { x_cols, y_cols })
    }

    /// X-block is the first `d_x` columns, Y-block the following `d_y`.
    pub fn contiguous(d_x: usize, d_y: usize) -> Result<Self> {
        BlockPartition::new((0..d_x).collect(), (d_x..d_x + d_y).collect(), d_x + d_y)
    }

    pub fn x_cols(&self) -> &[usize] {
        &self.x_cols
    }

    pub fn y_cols(&self) -> &[usize] {
        &self.y_cols
    }

    pub fn n_cols(&self) -> usize {
        self.x_cols.len() + self.y_cols.len()
    }

    /// Same blocks with the roles of X and Y exchanged.
    pub fn swapped(&self) -> BlockPartition {
        BlockPartition {
            x_cols: self.y_cols.clone(),
            y_cols: self.x_cols.clone(),
        }
    }
}

/// A validated subset of columns with an O(1) membership mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnBlock {
    cols: Vec<usize>,
    mask: Vec<bool>,
}

impl ColumnBlock {
    pub fn new(cols: &[usize], n_cols: usize) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::invalid("column block is empty"));
        }
        let mut mask = vec![false; n_cols];
        for &c in cols {
            if c >= n_cols {
                return Err(Error::invalid(format!("column {c} out of range 0..{n_cols}")));
            }
            mask[c] = true;
        }
        let cols = (0..n_cols).filter(|&c| mask[c]).collect();
        Ok(ColumnBlock { cols, mask })
    }

    pub fn all(n_cols: usize) -> Self {
        ColumnBlock {
            cols: (0..n_cols).collect(),
            mask: vec![true; n_cols],
        }
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn n_total_cols(&self) -> usize {
        self.mask.len()
    }

    #[inline]
    pub fn contains(&self, col: usize) -> bool {
        self.mask.get(col).copied().unwrap_or(false)
    }
}

/// Symmetric `n x n` matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Checks shape, symmetry, zero diagonal and non-negativity.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid(format!(
                "distance matrix of size {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(Error::invalid(format!("asymmetric entry ({i}, {j})")));
                }
                if !(v >= 0.0) {
                    return Err(Error::invalid(format!("negative or NaN entry ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    /// Trusted constructor for matrices built symmetric by construction.
    pub(crate) fn from_raw(n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n);
        DistanceMatrix { n, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("distance matrix rows must be square"));
        }
        DistanceMatrix::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_validation() {
        assert!(BlockPartition::new(vec![0], vec![1], 2).is_ok());
        assert!(BlockPartition::new(vec![0, 1], vec![1], 2).is_err());
        assert!(BlockPartition::new(vec![], vec![0, 1], 2).is_err());
        assert!(BlockPartition::new(vec![0], vec![1], 3).is_err());
        assert!(BlockPartition::new(vec![0], vec![3], 3).is_err());
        let p = BlockPartition::contiguous(2, 3).unwrap();
        assert_eq!(p.x_cols(), &[0, 1]);
        assert_eq!(p.y_cols(), &[2, 3, 4]);
        assert_eq!(p.swapped().x_cols(), &[2, 3, 4]);
    }

    #[test]
    fn matrix_accessors() {
        let m = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.column(1), vec![2.0, 4.0, 6.0]);
        assert_eq!(m.select_columns(&[1]).unwrap().as_slice(), &[2.0, 4.0, 6.0]);
        let c = DataMatrix::from_columns(&[vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert_eq!(c, m);
        assert_eq!(m.permute_rows(&[2, 0, 1]).unwrap().row(0), &[5.0, 6.0]);
        assert!(DataMatrix::new(1, 2, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn column_block_mask() {
        let b = ColumnBlock::new(&[2, 0], 4).unwrap();
        assert_eq!(b.cols(), &[0, 2]);
        assert!(b.contains(0) && !b.contains(1) && b.contains(2) && !b.contains(9));
        assert!(ColumnBlock::new(&[], 4).is_err());
        assert!(ColumnBlock::new(&[4], 4).is_err());
    }

    #[test]
    fn distance_matrix_validation() {
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
        assert!(DistanceMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
    }
}
