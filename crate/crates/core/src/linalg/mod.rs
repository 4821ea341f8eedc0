//! Dense linear algebra sized for tall-skinny snapshot matrices.
//!
//! Matrices are stored row-major: entry `(i, j)` lives at `data[i * cols + j]`.
//! All arithmetic is `f64`; complex quantities use [`Complex64`].
//!
//! The heavy kernels (matrix products, Gram products, Jacobi rotations) report
//! the number of multiply-add operations they perform to a thread-local counter,
//! see [`op_count`] and [`reset_op_count`].

mod eig;
mod solve;
mod svd;
mod symmetric;

use std::cell::Cell;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub use eig::{eig_general, ComplexEigenSystem};
pub use solve::solve_complex;
pub use svd::{gram_svd, select_rank, SvdFactors, ZERO_SIGMA_FLOOR};
pub use symmetric::{symmetric_eigen, SymmetricEigen};

/// Errors raised by the linear algebra kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("data length mismatch: expected {expected}, got {got}")]
    DataLength { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("snapshot matrix must be tall: {rows} rows < {cols} columns")]
    WideMatrix { rows: usize, cols: usize },
    #[error("degenerate snapshot matrix")]
    Degenerate,
    #[error("zero leading singular value")]
    ZeroLeadingSingularValue,
    #[error("singular value list must be non-empty, non-negative and descending")]
    InvalidSpectrum,
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular linear system")]
    Singular,
}

thread_local! {
    static OPS: Cell<u64> = const { Cell::new(0) };
}

/// Number of multiply-add operations counted on this thread since the last reset.
pub fn op_count() -> u64 {
    OPS.with(Cell::get)
}

/// Resets this thread's operation counter to zero.
pub fn reset_op_count() {
    OPS.with(|c| c.set(0));
}

pub(crate) fn count_ops(n: u64) {
    OPS.with(|c| c.set(c.get().wrapping_add(n)));
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    /// Zero matrix. Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting empty shapes and non-finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DataLength {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    /// Builds an `n x m` matrix whose `j`-th column is `columns[j]`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyMatrix { rows, cols });
        }
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(LinalgError::DataLength {
                    expected: rows,
                    got: c.len(),
                });
            }
            for (i, &v) in c.iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies columns `start..end` into a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> RealMatrix {
        assert!(start < end && end <= self.cols, "column range out of bounds");
        let width = end - start;
        let mut out = RealMatrix::zeros(self.rows, width);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    pub fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(LinalgError::NonFinite {
                row: k / self.cols,
                col: k % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = RealMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &RealMatrix) -> Result<RealMatrix, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: (self.cols, rhs.cols),
                got: (rhs.rows, rhs.cols),
            });
        }
        let mut out = RealMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        count_ops((self.rows * self.cols * rhs.cols) as u64);
        Ok(out)
    }

    /// `selfᵀ * rhs` without materializing the transpose.
    pub fn transpose_matmul(&self, rhs: &RealMatrix) -> Result<RealMatrix, LinalgError> {
        if self.rows != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: (self.rows, rhs.cols),
                got: (rhs.rows, rhs.cols),
            });
        }
        let mut out = RealMatrix::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        count_ops((self.rows * self.cols * rhs.cols) as u64);
        Ok(out)
    }

    /// Gram matrix `selfᵀ * self`, exploiting symmetry.
    pub fn gram(&self) -> RealMatrix {
        let m = self.cols;
        let mut g = RealMatrix::zeros(m, m);
        for k in 0..self.rows {
            let r = self.row(k);
            for i in 0..m {
                let a = r[i];
                if a == 0.0 {
                    continue;
                }
                let g_row = &mut g.data[i * m..(i + 1) * m];
                for j in i..m {
                    g_row[j] += a * r[j];
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                g.data[i * m + j] = g.data[j * m + i];
            }
        }
        count_ops((self.rows * m * (m + 1) / 2) as u64);
        g
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        count_ops((self.rows * self.cols) as u64);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_real(m: &RealMatrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real-by-complex product `lhs * rhs`.
    pub fn real_matmul(lhs: &RealMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        if lhs.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch {
                expected: (lhs.cols, rhs.cols),
                got: (rhs.rows, rhs.cols),
            });
        }
        let mut out = ComplexMatrix::zeros(lhs.rows, rhs.cols);
        for i in 0..lhs.rows {
            let o_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in lhs.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in o_row.iter_mut().zip(rhs.row(k)) {
                    *o += b * a;
                }
            }
        }
        count_ops((lhs.rows * lhs.cols * rhs.cols) as u64);
        Ok(out)
    }

    /// `selfᴴ * x` for a complex vector `x`.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.rows, "adjoint_matvec dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * xi;
            }
        }
        count_ops((self.rows * self.cols) as u64);
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        count_ops((self.rows * self.cols) as u64);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ * self`.
    pub fn gram(&self) -> ComplexMatrix {
        let m = self.cols;
        let mut g = ComplexMatrix::zeros(m, m);
        for k in 0..self.rows {
            let r = self.row(k);
            for i in 0..m {
                let a = r[i].conj();
                for j in 0..m {
                    g.data[i * m + j] += a * r[j];
                }
            }
        }
        count_ops((self.rows * m * m) as u64);
        g
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}
