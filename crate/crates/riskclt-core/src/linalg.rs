//! Small dense matrices for stage Jacobians and covariance blocks.
//!
//! The matrices in this crate are tiny (stage dimensions are single digits),
//! so a row-major `Vec<T>` with straightforward loops is the right tool.
//! Symmetric eigenvalues come from the cyclic Jacobi iteration, which is
//! robust and plenty fast at these sizes.

use crate::error::{Result, RiskError};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Creates a zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Creates a matrix from a row-major data vector.
    ///
    /// # Errors
    /// [`RiskError::DimensionMismatch`] when the data length is not
    /// `rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RiskError::DimensionMismatch {
                context: format!(
                    "matrix data length {} does not fill {rows}x{cols}",
                    data.len()
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// 1x1 matrix holding a single value.
    pub fn scalar(v: T) -> Self {
        Matrix {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Number of rows.
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Reads the entry at `(r, c)`.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// Writes the entry at `(r, c)`.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// Borrows row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Borrows the row-major backing storage.
    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Matrix-vector product.
    ///
    /// # Panics
    /// Panics when `v.len() != self.cols()`; callers pass shapes validated
    /// at construction time.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "matvec shape mismatch");
        let mut out = vec![T::zero(); self.rows];
        for r in 0..self.rows {
            let mut acc = T::zero();
            for c in 0..self.cols {
                acc += self.get(r, c) * v[c];
            }
            out[r] = acc;
        }
        out
    }

    /// Vector-matrix product `v^T A`, returned as a plain vector.
    pub fn vecmat(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows, "vecmat shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for c in 0..self.cols {
            let mut acc = T::zero();
            for r in 0..self.rows {
                acc += v[r] * self.get(r, c);
            }
            out[c] = acc;
        }
        out
    }

    /// Extracts the rectangular block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix<T> {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols, "block out of range");
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                out.set(r, c, self.get(r0 + r, c0 + c));
            }
        }
        out
    }

    /// Quadratic form `v^T A v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        assert_eq!(self.rows, self.cols, "quadratic form needs a square matrix");
        assert_eq!(v.len(), self.rows, "quadratic form shape mismatch");
        let mut acc = T::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                acc += v[r] * self.get(r, c) * v[c];
            }
        }
        acc
    }

    /// Sum of diagonal entries.
    pub fn trace(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.rows.min(self.cols) {
            acc += self.get(i, i);
        }
        acc
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols, "asymmetry of a non-square matrix");
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let d = (self.get(r, c) - self.get(c, r)).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
///
/// # Arguments
/// * `m` - square symmetric matrix; mild asymmetry from rounding is
///   symmetrized before iterating.
///
/// # Returns
/// Eigenvalues sorted ascending.
///
/// # Errors
/// [`RiskError::DimensionMismatch`] for non-square input and
/// [`RiskError::SolverFailure`] if the off-diagonal mass refuses to vanish
/// within the sweep budget.
pub fn symmetric_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>> {
    if m.rows() != m.cols() {
        return Err(RiskError::DimensionMismatch {
            context: format!("eigenvalues of a {}x{} matrix", m.rows(), m.cols()),
        });
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let v = (m.get(r, c) + m.get(c, r)) / T::of(2.0);
            a.set(r, c, v);
        }
    }

    let off = |a: &Matrix<T>| {
        let mut s = T::zero();
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a.get(r, c) * a.get(r, c);
                }
            }
        }
        s
    };
    let scale = a.trace().abs() + T::one();
    let tol = T::epsilon() * T::epsilon() * scale * scale;

    for _sweep in 0..64 {
        if off(&a) <= tol {
            let mut eig: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
            eig.sort_by(|x, y| x.partial_cmp(y).expect("non-finite eigenvalue"));
            return Ok(eig);
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (T::of(2.0) * apq);
                // Stable choice of the smaller rotation angle.
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let aqi = a.get(q, i);
                    a.set(p, i, c * api - s * aqi);
                    a.set(q, i, s * api + c * aqi);
                }
            }
        }
    }
    Err(RiskError::SolverFailure {
        reason: "Jacobi eigenvalue iteration did not converge in 64 sweeps".into(),
    })
}
