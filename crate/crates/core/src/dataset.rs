//! Row-major sample matrices with named columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense, row-major matrix of samples. Each column carries a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<String>,
    n_rows: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n_cols = columns.len();
        if n_cols == 0 {
            if values.is_empty() {
                return Ok(Self { columns, n_rows: 0, values });
            }
            return Err(Error::DimensionMismatch { expected: 0, got: values.len() });
        }
        if !values.len().is_multiple_of(n_cols) {
            return Err(Error::DimensionMismatch { expected: n_cols, got: values.len() % n_cols });
        }
        Ok(Self { n_rows: values.len() / n_cols, columns, values })
    }

    /// Builds a dataset with generated column names `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let columns = (0..dim).map(|i| format!("x{i}")).collect();
        Self::from_rows_named(columns, rows)
    }

    pub fn from_rows_named(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.len();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { columns, n_rows: rows.len(), values })
    }

    pub fn empty(columns: Vec<String>) -> Self {
        Self { columns, n_rows: 0, values: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let d = self.n_cols().max(1);
        (0..self.n_rows).map(move |i| &self.values[i * d..(i + 1) * d])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols() {
            return Err(Error::DimensionMismatch { expected: self.n_cols(), got: row.len() });
        }
        self.values.extend_from_slice(row);
        self.n_rows += 1;
        Ok(())
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let d = self.n_cols();
        let mut values = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self { columns: self.columns.clone(), n_rows: idx.len(), values }
    }

    /// Fails with the first non-finite cell.
    pub fn check_finite(&self) -> Result<()> {
        let d = self.n_cols().max(1);
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(Error::NonFinite { row: p / d, col: p % d }),
            None => Ok(()),
        }
    }

    /// Per-column (min, max).
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_cols()];
        for row in self.rows() {
            for (r, &v) in out.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        out
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_rows_are_rejected() {
        let err = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn check_finite_reports_position() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, f64::NAN]]).unwrap();
        assert!(matches!(ds.check_finite(), Err(Error::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn select_rows_keeps_order() {
        let ds = Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let sub = ds.select_rows(&[2, 0]);
        assert_eq!(sub.values(), &[3.0, 1.0]);
    }
}
