//! Small dense linear algebra for symmetric positive-definite scatter matrices.
//!
//! Everything here is sized for `p` in the single digits to low tens. Quadratic
//! forms are evaluated through a forward substitution against the Cholesky
//! factor; no routine forms an explicit inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![T::one(); dim])
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from nested rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(<[T]>::to_vec).collect()
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.dim;
        let half = T::lit(0.5);
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim, x.len())?;
        Ok(self
            .data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Adds `shift` to every diagonal entry.
    pub fn shift_diagonal(&mut self, shift: T) {
        for i in 0..self.dim {
            self[(i, i)] = self[(i, i)] + shift;
        }
    }

    /// Entries of the upper triangle (diagonal included), row by row.
    pub fn upper_triangle(&self) -> Vec<T> {
        let n = self.dim;
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> T {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r1, &r2| a[r1 * n + col].abs().partial_cmp(&a[r2 * n + col].abs()).unwrap())
                .unwrap();
            let pivot = a[pivot_row * n + col];
            if pivot == T::zero() {
                return T::zero();
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                det = -det;
            }
            det = det * pivot;
            for r in (col + 1)..n {
                let factor = a[r * n + col] / pivot;
                for j in col..n {
                    a[r * n + j] = a[r * n + j] - factor * a[col * n + j];
                }
            }
        }
        det
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

#[inline]
fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Lower-triangular `L` with `m = L·Lᵀ`. Only the lower triangle of `m` is read.
pub fn cholesky<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let n = m.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        // NaN fails this comparison too
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d.to_f64_lossy() });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v = v - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / djj;
        }
    }
    Ok(l)
}

/// Symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T> {
    matrix: Matrix<T>,
    chol: Matrix<T>,
}

impl<T: Real> SpdMatrix<T> {
    /// Symmetrizes `m` and factorizes it.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        let matrix = m.symmetrized();
        let chol = cholesky(&matrix)?;
        Ok(Self { matrix, chol })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim)).expect("identity is positive definite")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.matrix
    }

    /// Lower Cholesky factor.
    pub fn cholesky(&self) -> &Matrix<T> {
        &self.chol
    }

    /// `log |m| = 2·Σ log Lᵢᵢ`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.dim()).map(|i| self.chol[(i, i)].ln()).sum::<T>() * two
    }

    /// Solves `L·y = b` in place.
    fn forward_substitute(&self, y: &mut [T]) {
        let n = self.dim();
        for i in 0..n {
            let mut v = y[i];
            for k in 0..i {
                v = v - self.chol[(i, k)] * y[k];
            }
            y[i] = v / self.chol[(i, i)];
        }
    }

    /// Solves `m·x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), b.len())?;
        let n = self.dim();
        let mut y = b.to_vec();
        self.forward_substitute(&mut y);
        for i in (0..n).rev() {
            let mut v = y[i];
            for k in (i + 1)..n {
                v = v - self.chol[(k, i)] * y[k];
            }
            y[i] = v / self.chol[(i, i)];
        }
        Ok(y)
    }

    /// `(x − μ)ᵀ m⁻¹ (x − μ)`.
    pub fn mahalanobis_sq(&self, x: &[T], mu: &[T]) -> Result<T> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), mu.len())?;
        let mut y: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
        self.forward_substitute(&mut y);
        Ok(y.iter().map(|&v| v * v).sum())
    }

    /// `L·z`, mapping standard normal draws to `N(0, m)` draws.
    pub fn scale_by_factor(&self, z: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), z.len())?;
        let n = self.dim();
        Ok((0..n).map(|i| (0..=i).map(|k| self.chol[(i, k)] * z[k]).sum()).collect())
    }
}

/// Free-function form of [`SpdMatrix::log_det`].
pub fn log_det<T: Real>(m: &SpdMatrix<T>) -> T {
    m.log_det()
}

/// Free-function form of [`SpdMatrix::mahalanobis_sq`].
pub fn mahalanobis_sq<T: Real>(x: &[T], mu: &[T], sigma: &SpdMatrix<T>) -> Result<T> {
    sigma.mahalanobis_sq(x, mu)
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Closed form for `p ≤ 2`. For larger `p` the value is bracketed by the
/// Gershgorin lower bound and the smallest diagonal entry, then bisected on
/// whether `m − t·I` admits a Cholesky factorization. The bisection returns
/// the lower end of the final bracket, so the estimate never exceeds the
/// true eigenvalue by more than rounding.
pub fn min_eigenvalue<T: Real>(m: &Matrix<T>) -> T {
    let n = m.dim();
    match n {
        1 => m[(0, 0)],
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let half = T::lit(0.5);
            let mid = (a + d) * half;
            let rad = ((a - d) * half).hypot(b);
            mid - rad
        }
        _ => {
            let mut lo = (0..n)
                .map(|i| {
                    let off: T = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
                    m[(i, i)] - off
                })
                .fold(T::infinity(), T::min);
            let mut hi = (0..n).map(|i| m[(i, i)]).fold(T::infinity(), T::min);
            let scale = lo.abs().max(hi.abs()).max(T::one());
            lo = lo - scale * T::epsilon() * T::lit(16.0);
            let shifted_ok = |t: T| {
                let mut s = m.clone();
                s.shift_diagonal(-t);
                cholesky(&s).is_ok()
            };
            for _ in 0..200 {
                let mid = (lo + hi) * T::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                if shifted_ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= scale * T::epsilon() * T::lit(4.0) {
                    break;
                }
            }
            lo
        }
    }
}

/// Symmetrizes `m` and shifts its diagonal so the smallest eigenvalue is at
/// least `floor`.
///
/// Fails only on non-finite input or a non-positive floor.
pub fn spd_repair<T: Real>(m: &Matrix<T>, floor: T) -> Result<SpdMatrix<T>> {
    if !m.is_finite() {
        return Err(Error::DegenerateData("matrix has non-finite entries".into()));
    }
    if !(floor > T::zero()) {
        return Err(Error::Domain("repair floor must be positive".into()));
    }
    let mut sym = m.symmetrized();
    let lambda_min = min_eigenvalue(&sym);
    if lambda_min < floor {
        sym.shift_diagonal(floor - lambda_min);
    }
    // Rounding can leave the last pivot a hair below zero; nudge upward.
    let mut nudge = floor;
    loop {
        match cholesky(&sym) {
            Ok(chol) => return Ok(SpdMatrix { matrix: sym, chol }),
            Err(_) => {
                sym.shift_diagonal(nudge);
                nudge = nudge * T::lit(2.0);
            }
        }
    }
}
