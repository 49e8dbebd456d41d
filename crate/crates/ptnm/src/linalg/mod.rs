//! Dense complex linear algebra with labeled-subsystem bookkeeping.
//!
//! Every matrix in the crate is a [`ComplexMatrix`] stored row-major. Tensor
//! factors are tracked by a [`LabeledSpace`] whose leftmost factor is the
//! most significant index, so `kron(a, b)` lives on `[a-labels..., b-labels...]`.

mod eig;
mod space;

pub use eig::{eig_hermitian, eigvalsh, expm_i, project_psd, trace_distance, trace_norm, Eigen};
pub(crate) use eig::{eigh_unchecked, eigvalsh_unchecked, trace_norm_unchecked};
pub use space::{partial_trace, permute_subsystems, swap_subsystems, LabeledSpace};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};
use thiserror::Error;

/// Shorthand for the complex scalar used everywhere.
pub type C64 = Complex64;

/// Relative tolerance accepted when a routine requires a Hermitian input.
pub const TOL_HERM: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Errors raised by the linear-algebra layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected {expected} entries for a {rows}x{cols} matrix, found {found}")]
    EntryCount {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),
    #[error("subsystem `{0}` has zero dimension")]
    ZeroDimension(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("eigendecomposition did not converge")]
    EigenFailed,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting bad counts and NaN/Inf.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::EntryCount {
                rows,
                cols,
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(k) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(LinalgError::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows of equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(LinalgError::DimensionMismatch(format!(
                "ragged rows: expected length {c}, found {}",
                bad.len()
            )));
        }
        Self::new(r, c, rows.concat())
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Diagonal matrix with real entries.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in diag.iter().enumerate() {
            m.data[i * n + i] = C64::new(x, 0.0);
        }
        m
    }

    /// The matrix unit `|i⟩⟨j|` of size `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.data[i * n + j] = ONE;
        m
    }

    /// Rank-one projector-like outer product `|v⟩⟨v|`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Errors unless the matrix is square.
    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// Errors unless both matrices share a shape.
    pub fn require_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )))
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius inner product `tr(self† other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `‖m − m†‖_F / ‖m‖_F`, zero for the zero matrix.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut diff = 0.0;
        for i in 0..n {
            for j in 0..n {
                diff += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            0.0
        } else {
            diff.sqrt() / norm
        }
    }

    /// Errors unless the matrix is square and Hermitian within [`TOL_HERM`].
    pub fn require_hermitian(&self) -> Result<()> {
        self.require_square()?;
        let deviation = self.hermitian_deviation();
        if deviation > TOL_HERM {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(())
    }

    /// `(m + m†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows;
        Self::from_fn(n, n, |i, j| {
            (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_c(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
    }

    /// Matrix product via faer.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        if self.rows * other.cols * self.cols < 512 {
            for i in 0..self.rows {
                for k in 0..self.cols {
                    let a = self.data[i * self.cols + k];
                    if a == ZERO {
                        continue;
                    }
                    let row = &other.data[k * other.cols..(k + 1) * other.cols];
                    let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                    for (d, &b) in dst.iter_mut().zip(row) {
                        *d += a * b;
                    }
                }
            }
            return out;
        }
        let lhs = faer::MatRef::from_row_major_slice(&self.data, self.rows, self.cols);
        let rhs = faer::MatRef::from_row_major_slice(&other.data, other.rows, other.cols);
        let dst = faer::MatMut::from_row_major_slice_mut(&mut out.data, self.rows, other.cols);
        faer::linalg::matmul::matmul(dst, faer::Accum::Replace, lhs, rhs, ONE, faer::Par::Seq);
        out
    }

    /// Matrix-vector product.
    pub fn apply_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "vector of length {} for {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// Largest entrywise distance to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `‖U U† − I‖_max`, infinite for non-square input.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.mul_unchecked(&self.adjoint())
            .max_abs_diff(&Self::identity(self.rows))
    }
}

/// A square matrix together with the tensor factors it acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub mat: ComplexMatrix,
    pub space: LabeledSpace,
}

impl LabeledMatrix {
    pub fn new(mat: ComplexMatrix, space: LabeledSpace) -> Result<Self> {
        let n = mat.require_square()?;
        if n != space.total_dim() {
            return Err(LinalgError::DimensionMismatch(format!(
                "matrix of size {n} on a space of dimension {}",
                space.total_dim()
            )));
        }
        Ok(Self { mat, space })
    }

    pub fn partial_trace(&self, labels: &[&str]) -> Result<Self> {
        let (mat, space) = partial_trace(&self.mat, &self.space, labels)?;
        Ok(Self { mat, space })
    }

    /// `self ⊗ other` on the concatenated space.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            mat: kron(&self.mat, &other.mat),
            space: self.space.concat(&other.space)?,
        })
    }
}

/// Kronecker product; block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca, rb, cb) = (a.rows, a.cols, b.rows, b.cols);
    let cols = ca * cb;
    let mut data = vec![ZERO; ra * rb * cols];
    for i in 0..ra {
        for j in 0..ca {
            let s = a.data[i * ca + j];
            if s == ZERO {
                continue;
            }
            for k in 0..rb {
                let dst = (i * rb + k) * cols + j * cb;
                for l in 0..cb {
                    data[dst + l] = s * b.data[k * cb + l];
                }
            }
        }
    }
    ComplexMatrix {
        rows: ra * rb,
        cols,
        data,
    }
}

/// Kronecker product of several factors, left to right.
pub fn kron_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    let mut iter = factors.iter();
    let first = iter
        .next()
        .map_or_else(|| ComplexMatrix::identity(1), |m| (*m).clone());
    iter.fold(first, |acc, m| kron(&acc, m))
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "shape mismatch in add"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "shape mismatch in sub"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(
            self.data.len(),
            rhs.data.len(),
            "shape mismatch in add_assign"
        );
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(
            self.data.len(),
            rhs.data.len(),
            "shape mismatch in sub_assign"
        );
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in mul");
        self.mul_unchecked(rhs)
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: f64) -> ComplexMatrix {
        self.scale(rhs)
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: C64) -> ComplexMatrix {
        self.scale_c(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_places_blocks() {
        let x = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let p0 = ComplexMatrix::unit(2, 0, 0);
        let k = kron(&x, &p0);
        let mut expected = ComplexMatrix::zeros(4, 4);
        expected[(2, 0)] = ONE;
        expected[(0, 2)] = ONE;
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_shapes_multiply() {
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(4, 5);
        let k = kron(&a, &b);
        assert_eq!((k.rows(), k.cols()), (8, 15));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            ComplexMatrix::new(2, 2, vec![ZERO; 3]),
            Err(LinalgError::EntryCount { .. })
        ));
        assert!(matches!(
            ComplexMatrix::new(1, 2, vec![ZERO, c(f64::NAN, 0.0)]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(ComplexMatrix::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn matmul_matches_naive_loop() {
        let a = ComplexMatrix::from_fn(9, 7, |i, j| c(i as f64 - j as f64, (i * j) as f64 * 0.1));
        let b = ComplexMatrix::from_fn(7, 5, |i, j| c((i + 2 * j) as f64, -(i as f64)));
        let p = a.matmul(&b).unwrap();
        for i in 0..9 {
            for j in 0..5 {
                let s: C64 = (0..7).map(|k| a[(i, k)] * b[(k, j)]).sum();
                assert!((p[(i, j)] - s).norm() < 1e-12);
            }
        }
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn hermitian_checks() {
        let h = ComplexMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, -1.0), c(2.0, 0.0)],
        ])
        .unwrap();
        assert!(h.require_hermitian().is_ok());
        let mut g = h.clone();
        g[(0, 1)] = c(0.0, 2.0);
        assert!(matches!(
            g.require_hermitian(),
            Err(LinalgError::NotHermitian { .. })
        ));
        assert!(g.hermitian_part().require_hermitian().is_ok());
    }
}
