//! Column-major matrix and dataset containers.
//!
//! Screening walks covariates column by column, so columns are stored
//! contiguously and borrowed as plain slices.

use crate::error::{Error, Result};

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        ColMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    /// Builds from whole columns; all columns must share one length.
    pub fn from_columns(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n_cols = cols.len();
        let n_rows = cols.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (j, col) in cols.into_iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "column {} has length {}, expected {}",
                    j + 1,
                    col.len(),
                    n_rows
                )));
            }
            data.extend_from_slice(&col);
        }
        Ok(ColMatrix { n_rows, n_cols, data })
    }

    /// Builds from row-major records (the natural shape of delimited text).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = ColMatrix::zeros(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Dimension(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    n_cols
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.data[j * n_rows + i] = v;
            }
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    /// Copies the named columns (in the given order) into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> ColMatrix {
        let mut m = ColMatrix::zeros(self.n_rows, indices.len());
        for (k, &j) in indices.iter().enumerate() {
            m.col_mut(k).copy_from_slice(self.col(j));
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A response vector paired with its covariate matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: ColMatrix,
    /// Covariate names when the source table had a header.
    pub names: Option<Vec<String>>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.n_rows() {
            return Err(Error::Dimension(format!(
                "response has {} rows, covariates have {}",
                self.y.len(),
                self.x.n_rows()
            )));
        }
        if !self.y.iter().all(|v| v.is_finite()) || !self.x.is_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(())
    }

    /// Name of covariate j (0-based), falling back to a positional label.
    pub fn name(&self, j: usize) -> String {
        match &self.names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }
}
