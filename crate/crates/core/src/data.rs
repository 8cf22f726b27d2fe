//! The n×p observation matrix shared by every detector.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Real-valued observations with row identifiers and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    row_ids: Vec<String>,
    col_names: Vec<String>,
}

impl DataMatrix {
    /// Wraps `values`, naming rows `1..=n` and columns `x1..=xp`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let row_ids = (1..=values.nrows()).map(|i| i.to_string()).collect();
        let col_names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(values, row_ids, col_names)
    }

    pub fn with_names(
        values: Array2<f64>,
        row_ids: Vec<String>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        if row_ids.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                found: row_ids.len(),
            });
        }
        if col_names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: col_names.len(),
            });
        }
        check_finite(values.view())?;
        Ok(Self {
            values,
            row_ids,
            col_names,
        })
    }

    /// Builds a matrix from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(values)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), cols),
            row_ids: self.row_ids.clone(),
            col_names: cols.iter().map(|&j| self.col_names[j].clone()).collect(),
        }
    }

    /// Reorders rows so that output row `k` is input row `order[k]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), order),
            row_ids: order.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_names: self.col_names.clone(),
        }
    }
}

pub(crate) fn check_finite(values: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}
