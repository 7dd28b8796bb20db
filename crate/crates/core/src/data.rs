//! Core data containers: dense matrices, observational datasets, and the
//! series layout describing time-structured covariates.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite matrix entry at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { data, rows, cols })
    }

    /// Zero-filled matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { data: alloc::vec![0.0; rows * cols], rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j` copied out.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Partition of the covariate columns into time series and static covariates.
///
/// Covariate columns are ordered series-major: series 0 occupies the first
/// `series_lens[0]` columns in time order, series 1 the next block, and so
/// on, with the static covariates last.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeriesLayout {
    /// Length (number of time points) of each series, in column order.
    pub series_lens: Vec<usize>,
    /// Number of trailing static covariate columns.
    pub n_static: usize,
}

impl SeriesLayout {
    /// Layout with one series covering `len` columns and no statics.
    pub fn single_series(len: usize) -> Self {
        Self { series_lens: alloc::vec![len], n_static: 0 }
    }

    /// Total number of covariate columns described.
    pub fn total_cols(&self) -> usize {
        self.series_lens.iter().sum::<usize>() + self.n_static
    }

    /// Shared series length, if all series have the same number of time
    /// points (required for multi-channel convolution).
    pub fn common_series_len(&self) -> Option<usize> {
        let first = *self.series_lens.first()?;
        self.series_lens.iter().all(|&l| l == first).then_some(first)
    }

    fn validate(&self, cols: usize) -> Result<()> {
        if self.series_lens.iter().any(|&l| l < 2) {
            return Err(Error::Config(String::from(
                "every series needs at least 2 time points",
            )));
        }
        if self.total_cols() != cols {
            return Err(Error::Shape(format!(
                "series layout covers {} columns but x has {cols}",
                self.total_cols()
            )));
        }
        Ok(())
    }
}

/// Observed sample: outcome, binary treatment, covariates.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<u8>,
    pub x: Matrix,
    pub series_layout: Option<SeriesLayout>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        t: Vec<u8>,
        x: Matrix,
        series_layout: Option<SeriesLayout>,
    ) -> Result<Self> {
        let n = y.len();
        if t.len() != n || x.rows() != n {
            return Err(Error::Shape(format!(
                "inconsistent lengths: y={n}, t={}, x rows={}",
                t.len(),
                x.rows()
            )));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite outcome value {v}")));
        }
        if let Some(pos) = t.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!(
                "treatment must be 0 or 1, found {} at row {pos}",
                t[pos]
            )));
        }
        if let Some(layout) = &series_layout {
            layout.validate(x.cols())?;
        }
        Ok(Self { y, t, x, series_layout })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariate columns.
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of treated observations.
    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&t| t == 1).count()
    }

    /// Number of control observations.
    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Rows with `t == arm`, preserving order.
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == arm).collect()
    }

    /// Sub-dataset restricted to the given rows.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Matrix::zeros(rows.len(), self.x.cols());
        for (k, &i) in rows.iter().enumerate() {
            x.row_mut(k).copy_from_slice(self.x.row(i));
        }
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            x,
            series_layout: self.series_layout.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matrix_rejects_bad_shape_and_nan() {
        assert!(Matrix::from_vec(vec![1.0, 2.0, 3.0], 2, 2).is_err());
        assert!(Matrix::from_vec(vec![1.0, f64::NAN, 3.0, 4.0], 2, 2).is_err());
        let m = Matrix::from_vec(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.row(0), &[1.0, 2.0]);
        assert_eq!(m.column(1), vec![2.0, 4.0]);
    }

    #[test]
    fn dataset_validates_treatment_and_lengths() {
        let x = Matrix::zeros(2, 3);
        assert!(Dataset::new(vec![1.0, 2.0], vec![0, 2], x.clone(), None).is_err());
        assert!(Dataset::new(vec![1.0], vec![0, 1], x.clone(), None).is_err());
        let d = Dataset::new(vec![1.0, 2.0], vec![0, 1], x, None).unwrap();
        assert_eq!(d.n_treated(), 1);
        assert_eq!(d.n_control(), 1);
    }

    #[test]
    fn layout_must_cover_columns() {
        let x = Matrix::zeros(2, 5);
        let bad = SeriesLayout { series_lens: vec![3], n_static: 1 };
        assert!(Dataset::new(vec![0.0; 2], vec![0, 1], x.clone(), Some(bad)).is_err());
        let good = SeriesLayout { series_lens: vec![3], n_static: 2 };
        let d = Dataset::new(vec![0.0; 2], vec![0, 1], x, Some(good)).unwrap();
        assert_eq!(d.series_layout.as_ref().unwrap().common_series_len(), Some(3));
    }

    #[test]
    fn subset_preserves_rows() {
        let x = Matrix::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3, 2).unwrap();
        let d = Dataset::new(vec![10.0, 20.0, 30.0], vec![1, 0, 1], x, None).unwrap();
        let s = d.subset(&[0, 2]);
        assert_eq!(s.y, vec![10.0, 30.0]);
        assert_eq!(s.t, vec![1, 1]);
        assert_eq!(s.x.row(1), &[5.0, 6.0]);
    }
}
