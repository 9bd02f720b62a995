use std::fmt;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense real matrix with finite entries.
///
/// Serialized as a list of rows, e.g. `[[1, 0, 1]]` for a 1×3 row vector.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::checked(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {m}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(n, m, &flat)
    }

    pub fn column(entries: &[f64]) -> Result<Self> {
        Self::from_row_slice(entries.len(), 1, entries)
    }

    pub fn row(entries: &[f64]) -> Result<Self> {
        Self::from_row_slice(1, entries.len(), entries)
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::checked(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// Wraps an nalgebra matrix, rejecting non-finite entries.
    pub fn checked(inner: DMatrix<f64>) -> Result<Self> {
        if let Some(x) = inner.iter().find(|x| !x.is_finite()) {
            return Err(Error::Input(format!("non-finite matrix entry {x}")));
        }
        Ok(Matrix(inner))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    /// Column `j` as a plain vector.
    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        self.0.column(j).iter().copied().collect()
    }

    pub fn try_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Matrix(&self.0 * &rhs.0))
    }

    /// `self · x` for a plain vector `x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix applied to vector of length {}",
                self.rows(),
                self.cols(),
                x.len()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest real part among the eigenvalues of a square matrix.
    pub fn spectral_abscissa(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::Dimension(format!(
                "eigenvalues need a square matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        Ok(self
            .0
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Smallest |real part| among the eigenvalues, i.e. the slowest decay rate.
    pub fn slowest_decay_rate(&self) -> Result<f64> {
        Ok(-self.spectral_abscissa()?)
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{:?}", self.to_rows())
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
