//! Dense real-matrix primitives.
//!
//! [`Matrix`] is a column-major newtype over `faer::Mat<f64>` that refuses
//! non-finite entries at construction. The factorizations used by the rest of
//! the crate (Cholesky solves, symmetric eigendecomposition and the SVD-based
//! pseudoinverse) are exposed as free functions with explicit tolerance
//! contracts. faer runs single-threaded here, so every routine is
//! bit-reproducible for a given input.

use std::fmt;
use std::ops::Index;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative singular-value cutoff for pseudoinverses and numeric rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Largest asymmetry `max|a - aᵀ|` (relative to `max(1, max|a|)`) accepted by
/// the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct Matrix(Mat<f64>);

/// Row-major nested representation used for serialization.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixRepr> for Matrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        let rows: Vec<&[f64]> = repr.rows.iter().map(Vec::as_slice).collect();
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for MatrixRepr {
    fn from(m: Matrix) -> Self {
        MatrixRepr { rows: m.to_rows() }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} {:?}", self.rows(), self.cols(), self.to_rows())
    }
}

impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        self.0.shape() == other.0.shape() && self.0 == other.0
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[(i, j)]
    }
}

impl Matrix {
    /// Builds a matrix from column-major data.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_column_major",
                detail: format!("{} entries for a {rows}x{cols} matrix", data.len()),
            });
        }
        Self::from_mat(Mat::from_fn(rows, cols, |i, j| data[j * rows + i]))
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if nrows == 0 || ncols == 0 {
            return Err(Error::EmptyMatrix);
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch {
                op: "from_rows",
                detail: format!("row {bad} has {} entries, expected {ncols}", rows[bad].len()),
            });
        }
        Self::from_mat(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Wraps a faer matrix, checking shape and finiteness.
    pub fn from_mat(m: Mat<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for j in 0..m.ncols() {
            if let Some(i) = m.col_as_slice(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        Ok(Matrix(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix(Mat::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Matrix(Mat::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        Self::from_mat(Mat::from_fn(rows, cols, f))
    }

    /// Builds a matrix whose columns are the given equal-length vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                op: "from_columns",
                detail: format!("column {bad} has {} entries, expected {rows}", columns[bad].len()),
            });
        }
        Self::from_fn(rows, cols, |i, j| columns[j][i])
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

    /// Contiguous view of column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        self.0.col_as_slice(j)
    }

    /// Entries in column-major order.
    pub fn to_column_major(&self) -> Vec<f64> {
        (0..self.cols()).flat_map(|j| self.column(j).iter().copied()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.0.as_ref()
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.0
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose().to_owned())
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                detail: format!(
                    "{}x{} times {}x{}",
                    self.rows(),
                    self.cols(),
                    rhs.rows(),
                    rhs.cols()
                ),
            });
        }
        Matrix::from_mat(&self.0 * &rhs.0)
    }

    /// `selfᵀ · self`.
    pub fn gram(&self) -> Matrix {
        Matrix(self.0.transpose() * &self.0)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix(Mat::from_fn(self.rows(), self.cols(), |i, j| self.0[(i, j)] * s))
    }

    /// Entrywise `self - other`; `None` when shapes differ.
    pub fn sub(&self, other: &Matrix) -> Option<Matrix> {
        if self.0.shape() != other.0.shape() {
            return None;
        }
        Some(Matrix(&self.0 - &other.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm_l2()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.norm_max()
    }

    /// Sum of absolute entries.
    pub fn abs_sum(&self) -> f64 {
        (0..self.cols()).map(|j| self.column(j).iter().map(|v| v.abs()).sum::<f64>()).sum()
    }

    /// Largest entrywise absolute difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Matrix) -> Option<f64> {
        self.sub(other).map(|d| d.max_abs())
    }

    /// `max|a - aᵀ|` for square matrices.
    pub fn asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in (j + 1)..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)]).abs());
            }
        }
        Some(worst)
    }

    /// Columns selected in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<Matrix> {
        if idx.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(Matrix(Mat::from_fn(self.rows(), idx.len(), |i, j| self.0[(i, idx[j])])))
    }

    /// Rows and columns selected in the given order (`self[idx, idx]`).
    pub fn select_principal(&self, idx: &[usize]) -> Result<Matrix> {
        if idx.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        Ok(Matrix(Mat::from_fn(idx.len(), idx.len(), |i, j| self.0[(idx[i], idx[j])])))
    }
}

/// Eigendecomposition of a symmetric matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

fn check_square(op: &'static str, a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op,
            detail: format!("expected a square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    Ok(())
}

/// Checks symmetry within tolerance and returns the averaged `(a + aᵀ)/2`.
fn symmetrized(a: &Matrix) -> Result<Mat<f64>> {
    let asym = a.asymmetry().unwrap_or(f64::INFINITY);
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let n = a.rows();
    Ok(Mat::from_fn(n, n, |i, j| 0.5 * (a.0[(i, j)] + a.0[(j, i)])))
}

/// Solves `a · S = b` for symmetric positive-definite `a` via Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_square("solve_spd", a)?;
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "solve_spd",
            detail: format!("{}x{} system with {}-row right-hand side", a.rows(), a.cols(), b.rows()),
        });
    }
    let sym = symmetrized(a)?;
    let llt = sym.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite)?;
    Matrix::from_mat(llt.solve(&b.0))
}

/// Symmetric eigendecomposition, eigenvalues ascending.
///
/// Inputs with asymmetry up to [`SYMMETRY_TOL`] are symmetrized by averaging
/// with their transpose; larger asymmetry is rejected. Each eigenvector is
/// sign-normalized so that its largest-magnitude entry is positive.
pub fn sym_eigen(a: &Matrix) -> Result<SymEigen> {
    check_square("sym_eigen", a)?;
    let sym = symmetrized(a)?;
    let n = sym.nrows();
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::ConvergenceFailure("symmetric eigendecomposition"))?;
    let s = evd.S().column_vector();
    let u = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]).then(i.cmp(&j)));

    let values = order.iter().map(|&i| s[i]).collect();
    let signs: Vec<f64> = order
        .iter()
        .map(|&src| {
            let pivot = (0..n)
                .map(|i| u[(i, src)])
                .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])] * signs[k]);
    Ok(SymEigen {
        values,
        vectors: Matrix::from_mat(vectors)?,
    })
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    a.0.singular_values()
        .map_err(|_| Error::ConvergenceFailure("singular value decomposition"))
}

/// Number of singular values above `tol · σ_max`.
pub fn numeric_rank(a: &Matrix, tol: f64) -> Result<usize> {
    let s = singular_values(a)?;
    let cutoff = tol * s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&v| v > cutoff && v > 0.0).count())
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Thin SVD `a = U diag(s) Vᵀ` with singular values descending.
pub struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    let dec = a
        .0
        .thin_svd()
        .map_err(|_| Error::ConvergenceFailure("singular value decomposition"))?;
    let s = dec.S().column_vector();
    Ok(ThinSvd {
        u: Matrix::from_mat(dec.U().to_owned())?,
        s: (0..s.nrows()).map(|k| s[k]).collect(),
        v: Matrix::from_mat(dec.V().to_owned())?,
    })
}

/// Moore–Penrose pseudoinverse; singular values at or below `tol · σ_max`
/// are treated as zero.
pub fn pseudo_inverse(a: &Matrix, tol: f64) -> Result<Matrix> {
    let svd = thin_svd(a)?;
    let cutoff = tol * svd.s.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..svd.s.len()).filter(|&k| svd.s[k] > cutoff && svd.s[k] > 0.0).collect();
    // pinv = Σ_k v_k u_kᵀ / s_k
    let v = Mat::from_fn(a.cols(), kept.len(), |i, k| svd.v.0[(i, kept[k])] / svd.s[kept[k]]);
    let ut = Mat::from_fn(kept.len(), a.rows(), |k, j| svd.u.0[(j, kept[k])]);
    if kept.is_empty() {
        return Ok(Matrix::zeros(a.cols(), a.rows()));
    }
    Matrix::from_mat(&v * &ut)
}
