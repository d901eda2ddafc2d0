//! Dense row-major matrices over `f64`.
//!
//! Construction validates shape and finiteness; once a `Matrix` exists its
//! entries are finite and its shape is positive. Determinants use LU with
//! partial pivoting, with direct formulas for orders <= 3.

use thiserror::Error;

/// Relative tolerance used to classify an LU pivot as zero, scaled by the
/// largest absolute entry of the input.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("matrix shape must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has {got} entries, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("determinant requires a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: left is {lr}x{lc}, right is {rr}x{rc}")]
    DimensionMismatch { lr: usize, lc: usize, rr: usize, rc: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::DataLength { rows, cols, len: data.len() });
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatrixError::NonFinite { row: idx / cols, col: idx % cols });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MatrixError> {
        if rows.is_empty() {
            return Err(MatrixError::EmptyShape { rows: 0, cols: 0 });
        }
        let n_rows = rows.len();
        let cols = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(MatrixError::RaggedRows { row: i, got: r.len(), expected: cols });
            }
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_vec(n_rows, cols, data)
    }

    /// Builds from a generator; panics only if the generator produces a
    /// non-finite value (programmer error at the call site).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix shape must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                assert!(v.is_finite(), "generator produced non-finite entry at ({r},{c})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| 0.0)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index ({row},{col}) out of bounds");
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.rows && col < self.cols, "index ({row},{col}) out of bounds");
        assert!(value.is_finite(), "entry ({row},{col}) must be finite");
        self.data[row * self.cols + col] = value;
    }

    /// Row-major view of the raw entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        assert!(c.is_finite());
        Matrix::from_fn(self.rows, self.cols, |r, k| c * self.get(r, k))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch {
                lr: self.rows,
                lc: self.cols,
                rr: other.rows,
                rc: other.cols,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        Ok(out)
    }

    /// Extracts the submatrix with the given (strictly increasing) row and
    /// column index subsets.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Matrix {
        assert!(!row_idx.is_empty() && !col_idx.is_empty());
        Matrix::from_fn(row_idx.len(), col_idx.len(), |r, c| self.get(row_idx[r], col_idx[c]))
    }

    /// Applies a row permutation: output row `r` is input row `perm[r]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.rows);
        Matrix::from_fn(self.rows, self.cols, |r, c| self.get(perm[r], c))
    }

    /// Applies a column permutation: output column `c` is input column `perm[c]`.
    pub fn permute_cols(&self, perm: &[usize]) -> Matrix {
        assert_eq!(perm.len(), self.cols);
        Matrix::from_fn(self.rows, self.cols, |r, c| self.get(r, perm[c]))
    }

    /// Determinant via LU with partial pivoting; orders <= 3 use the direct
    /// cofactor formulas. A pivot below `PIVOT_TOL * max(1, max_abs)` is
    /// classified as zero and the determinant is reported as exactly 0.
    pub fn determinant(&self) -> Result<f64, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::NotSquare { rows: self.rows, cols: self.cols });
        }
        Ok(match self.rows {
            1 => self.data[0],
            2 => det2(&self.data),
            3 => det3(&self.data),
            _ => self.lu_determinant(),
        })
    }

    /// LU determinant for any square order; exposed so the direct small-order
    /// formulas can be cross-checked against it.
    pub fn lu_determinant(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.data.clone();
        let tol = PIVOT_TOL * self.max_abs().max(1.0);
        let mut sign = 1.0_f64;
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_abs = a[k * n + k].abs();
            for r in (k + 1)..n {
                let v = a[r * n + k].abs();
                if v > pivot_abs {
                    pivot_abs = v;
                    pivot_row = r;
                }
            }
            if pivot_abs <= tol {
                return 0.0;
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for r in (k + 1)..n {
                let factor = a[r * n + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[r * n + k] = 0.0;
                for c in (k + 1)..n {
                    a[r * n + c] -= factor * a[k * n + c];
                }
            }
        }
        let mut det = sign;
        for k in 0..n {
            det *= a[k * n + k];
        }
        det
    }
}

#[inline]
fn det2(d: &[f64]) -> f64 {
    d[0] * d[3] - d[1] * d[2]
}

#[inline]
fn det3(d: &[f64]) -> f64 {
    d[0] * (d[4] * d[8] - d[5] * d[7]) - d[1] * (d[3] * d[8] - d[5] * d[6])
        + d[2] * (d[3] * d[7] - d[4] * d[6])
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Largest entrywise relative difference, with the same unit floor as
/// [`rel_close`]. Panics on shape mismatch.
pub fn max_rel_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "shape mismatch");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate() {
        assert_eq!(
            Matrix::from_vec(0, 2, vec![]).unwrap_err(),
            MatrixError::EmptyShape { rows: 0, cols: 2 }
        );
        assert_eq!(
            Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).unwrap_err(),
            MatrixError::DataLength { rows: 2, cols: 2, len: 3 }
        );
        assert_eq!(
            Matrix::from_vec(2, 2, vec![1.0, f64::NAN, 3.0, 4.0]).unwrap_err(),
            MatrixError::NonFinite { row: 0, col: 1 }
        );
        assert_eq!(
            Matrix::from_rows(vec![vec![1.0], vec![2.0, 3.0]]).unwrap_err(),
            MatrixError::RaggedRows { row: 1, got: 2, expected: 1 }
        );
    }

    #[test]
    fn determinant_small_orders_exact() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.determinant().unwrap(), -2.0);
        let id = Matrix::identity(3);
        assert_eq!(id.determinant().unwrap(), 1.0);
        let singular = Matrix::from_rows(vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 4.0, 6.0],
            vec![0.0, 1.0, 1.0],
        ])
        .unwrap();
        assert_eq!(singular.determinant().unwrap(), 0.0);
    }

    #[test]
    fn determinant_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert_eq!(m.determinant().unwrap_err(), MatrixError::NotSquare { rows: 2, cols: 3 });
    }

    #[test]
    fn lu_matches_known_4x4() {
        // Block upper-triangular: det = det([[2,1],[1,3]]) * det([[4,0],[7,5]]) = 5 * 20.
        let m = Matrix::from_rows(vec![
            vec![2.0, 1.0, 9.0, -3.0],
            vec![1.0, 3.0, 0.5, 2.0],
            vec![0.0, 0.0, 4.0, 0.0],
            vec![0.0, 0.0, 7.0, 5.0],
        ])
        .unwrap();
        assert!(rel_close(m.determinant().unwrap(), 100.0, 1e-12));
    }

    #[test]
    fn lu_pivots_through_leading_zero() {
        let m = Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(m.determinant().unwrap(), -1.0);
    }

    #[test]
    fn matmul_identity_and_mismatch() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let prod = m.matmul(&Matrix::identity(3)).unwrap();
        assert_eq!(prod, m);
        assert!(matches!(
            m.matmul(&Matrix::identity(2)),
            Err(MatrixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn submatrix_extracts_named_entries() {
        let m = Matrix::from_fn(4, 5, |r, c| (r * 10 + c) as f64);
        let s = m.submatrix(&[1, 3], &[0, 2, 4]);
        assert_eq!(s.as_slice(), &[10.0, 12.0, 14.0, 30.0, 32.0, 34.0]);
    }
}
