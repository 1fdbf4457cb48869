//! Dense non-negative integer count matrices.

use crate::linalg::Matrix;
use crate::scalar::Real;

/// Row-major `m × n` matrix of non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Counts {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl Counts {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<u64>) -> Self {
        assert_eq!(data.len(), rows * cols, "count data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged count rows");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: u64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.row(i).iter().sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        (0..self.rows).map(|i| self.get(i, j)).sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        (0..self.rows).map(|i| self.row_total(i)).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        let mut out = vec![0; self.cols];
        for i in 0..self.rows {
            for (o, &c) in out.iter_mut().zip(self.row(i)) {
                *o += c;
            }
        }
        out
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> u64 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Every count multiplied by `factor` (a duplicated corpus).
    pub fn scaled(&self, factor: u64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&c| c * factor).collect() }
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                data.push(self.get(i, j));
            }
        }
        Self { rows: rows.len(), cols: cols.len(), data }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn to_matrix<T: Real>(&self) -> Matrix<T> {
        Matrix::from_row_major(self.rows, self.cols, self.data.iter().map(|&c| T::from_count(c)).collect())
    }
}
