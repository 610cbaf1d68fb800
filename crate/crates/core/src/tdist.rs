//! Multivariate t distribution: density, Lq transform, sampler, the latent
//! mixing-variable expectations, and the ν score functions.
//!
//! All density evaluation happens in log space. Density powers `f^{1−q}` are
//! formed as `exp((1−q)·log f)`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::linalg::SpdMatrix;
use crate::scalar::Real;
use crate::special::{digamma, log_gamma};

/// Below this distance from one the Lq transform is the plain logarithm.
pub const LQ_LOG_SWITCH: f64 = 1e-12;

/// Location, scatter and degrees of freedom of a p-variate t distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MvtParams<T> {
    pub mu: Vec<T>,
    pub sigma: SpdMatrix<T>,
    pub nu: T,
}

impl<T: Real> MvtParams<T> {
    pub fn new(mu: Vec<T>, sigma: SpdMatrix<T>, nu: T) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), found: mu.len() });
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return domain("location must be finite");
        }
        check_nu(nu)?;
        Ok(Self { mu, sigma, nu })
    }

    /// Standard form: `μ = 0`, `Σ = I`.
    pub fn standard(p: usize, nu: T) -> Result<Self> {
        Self::new(vec![T::zero(); p], SpdMatrix::identity(p), nu)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Log of the normalizing constant, i.e. `log f` at `s = 0`.
    pub fn log_norm_const(&self) -> Result<T> {
        log_norm_const(self.nu, self.dim(), self.sigma.log_det())
    }

    /// Squared Mahalanobis distance of `x` from the location.
    pub fn mahalanobis_sq(&self, x: &[T]) -> Result<T> {
        self.sigma.mahalanobis_sq(x, &self.mu)
    }
}

fn check_nu<T: Real>(nu: T) -> Result<()> {
    if nu > T::zero() {
        Ok(())
    } else {
        domain(format!("degrees of freedom must be positive, got {nu}"))
    }
}

fn check_s<T: Real>(s: T) -> Result<()> {
    if s >= T::zero() {
        Ok(())
    } else {
        domain(format!("squared distance must be nonnegative, got {s}"))
    }
}

/// An n×p matrix of observations, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    p: usize,
    data: Vec<T>,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset from row-major storage.
    pub fn from_flat(p: usize, data: Vec<T>) -> Result<Self> {
        if p == 0 {
            return domain("dataset needs at least one column");
        }
        if data.is_empty() {
            return domain("dataset needs at least one observation");
        }
        if !data.len().is_multiple_of(p) {
            return Err(Error::DimensionMismatch { expected: p, found: data.len() % p });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("dataset entries must be finite");
        }
        Ok(Self { p, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(p, data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.len() / self.p
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.p)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &Dataset<T>) -> Result<()> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: other.p });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Copy with rows reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self { p: self.p, data }
    }

    /// Copy with every row mapped to `A·x + b`.
    pub fn affine(&self, a: &crate::linalg::Matrix<T>, b: &[T]) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            let y = a.mul_vec(row)?;
            data.extend(y.iter().zip(b).map(|(&u, &v)| u + v));
        }
        Self::from_flat(self.p, data)
    }

    /// Column means.
    pub fn mean(&self) -> Vec<T> {
        let n = T::from_count(self.n());
        let mut acc = vec![T::zero(); self.p];
        for row in self.rows() {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a = *a + v;
            }
        }
        acc.iter().map(|&a| a / n).collect()
    }
}

/// `log Γ((ν+p)/2) − log Γ(ν/2) − (p/2)·log(πν) − ½·log|Σ|`.
pub fn log_norm_const<T: Real>(nu: T, p: usize, log_det_sigma: T) -> Result<T> {
    check_nu(nu)?;
    let half = T::lit(0.5);
    let pf = T::from_count(p);
    Ok(log_gamma((nu + pf) * half)? - log_gamma(nu * half)?
        - pf * half * (T::PI() * nu).ln()
        - half * log_det_sigma)
}

/// Log density given the squared distance `s` and the normalizing constant.
#[inline]
pub fn log_pdf_from_s<T: Real>(s: T, nu: T, p: usize, log_const: T) -> T {
    let half = T::lit(0.5);
    log_const - (nu + T::from_count(p)) * half * (s / nu).ln_1p()
}

/// Log of the p-variate t density at `x`.
pub fn log_pdf<T: Real>(x: &[T], params: &MvtParams<T>) -> Result<T> {
    let s = params.mahalanobis_sq(x)?;
    let c = params.log_norm_const()?;
    Ok(log_pdf_from_s(s, params.nu, params.dim(), c))
}

/// The q-logarithm `L_q(u)`; the exact logarithm when `|q − 1| < 1e-12`.
///
/// `u = 0` with `q = 1` yields negative infinity.
pub fn lq_transform<T: Real>(u: T, q: T) -> Result<T> {
    if !(q > T::zero()) {
        return domain(format!("q must be positive, got {q}"));
    }
    if !(u >= T::zero()) {
        return domain(format!("L_q needs u ≥ 0, got {u}"));
    }
    let one_minus_q = T::one() - q;
    if one_minus_q.abs() < T::lit(LQ_LOG_SWITCH) {
        return Ok(u.ln());
    }
    if u == T::zero() {
        return Ok((u.powf(one_minus_q) - T::one()) / one_minus_q);
    }
    Ok(lq_of_log(u.ln(), q))
}

/// `L_q(exp(log_u))` evaluated without leaving log space where possible.
pub fn lq_of_log<T: Real>(log_u: T, q: T) -> T {
    let one_minus_q = T::one() - q;
    if one_minus_q.abs() < T::lit(LQ_LOG_SWITCH) {
        log_u
    } else {
        (one_minus_q * log_u).exp_m1() / one_minus_q
    }
}

/// Draws `n` observations through the normal/chi-squared scale mixture.
///
/// Each row is `μ + L·z / √(u/ν)` with `z` standard normal and
/// `u = 2·Gamma(ν/2)`.
pub fn sample<T: Real, R: Rng + ?Sized>(params: &MvtParams<T>, n: usize, rng: &mut R) -> Result<Dataset<T>> {
    if n == 0 {
        return domain("sample size must be at least one");
    }
    let nu = params.nu.to_f64_lossy();
    let chi2 = Gamma::new(0.5 * nu, 2.0).map_err(|e| Error::Domain(e.to_string()))?;
    let p = params.dim();
    let mut data = Vec::with_capacity(n * p);
    let mut z = vec![T::zero(); p];
    for _ in 0..n {
        for zi in z.iter_mut() {
            let draw: f64 = StandardNormal.sample(rng);
            *zi = T::lit(draw);
        }
        let u: f64 = chi2.sample(rng);
        let scale = T::lit((u / nu).sqrt().recip());
        let y = params.sigma.scale_by_factor(&z)?;
        data.extend(params.mu.iter().zip(&y).map(|(&m, &v)| m + v * scale));
    }
    Dataset::from_flat(p, data)
}

/// [`sample`] driven by a ChaCha8 generator seeded from `seed`.
pub fn sample_seeded<T: Real>(params: &MvtParams<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    sample(params, n, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// `E(U | x) = (ν+p)/(ν+s)`.
pub fn cond_expect_u<T: Real>(s: T, nu: T, p: usize) -> Result<T> {
    check_s(s)?;
    check_nu(nu)?;
    Ok((nu + T::from_count(p)) / (nu + s))
}

/// `E(log U | x) = ψ((ν+p)/2) − log((ν+s)/2)`.
pub fn cond_expect_log_u<T: Real>(s: T, nu: T, p: usize) -> Result<T> {
    check_s(s)?;
    check_nu(nu)?;
    let half = T::lit(0.5);
    Ok(digamma((nu + T::from_count(p)) * half)? - ((nu + s) * half).ln())
}

/// `∂ log f / ∂ν` for a point at squared distance `s`.
pub fn ml_score_nu<T: Real>(s: T, nu: T, p: usize) -> Result<T> {
    check_s(s)?;
    check_nu(nu)?;
    let half = T::lit(0.5);
    let pf = T::from_count(p);
    let inner = nu.ln() + T::one() + digamma((nu + pf) * half)? - digamma(nu * half)?
        - (nu + s).ln()
        - (nu + pf) / (nu + s);
    Ok(half * inner)
}

/// One summand of the Lq estimating equation for ν: the bracketed ν score
/// times `f(x)^{1−q}`.
pub fn mlq_score_nu<T: Real>(x: &[T], params: &MvtParams<T>, q: T) -> Result<T> {
    if !(q > T::zero() && q <= T::one()) {
        return domain(format!("q must lie in (0, 1], got {q}"));
    }
    let s = params.mahalanobis_sq(x)?;
    let log_f = log_pdf_from_s(s, params.nu, params.dim(), params.log_norm_const()?);
    let two = T::lit(2.0);
    Ok(two * ml_score_nu(s, params.nu, params.dim())? * ((T::one() - q) * log_f).exp())
}

/// Evaluates the ν score along `s_grid`.
///
/// Without `q` this is the likelihood score; with `q` it is the Lq summand at
/// the point `μ + √s·L·e₁`, which sits at squared distance `s`.
pub fn score_curve<T: Real>(params: &MvtParams<T>, q: Option<T>, s_grid: &[T]) -> Result<Vec<(T, T)>> {
    if s_grid.iter().any(|&s| !(s >= T::zero())) {
        return domain("score grid must be nonnegative");
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("score grid must be ascending");
    }
    let p = params.dim();
    let mut e1 = vec![T::zero(); p];
    e1[0] = T::one();
    let axis = params.sigma.scale_by_factor(&e1)?;
    s_grid
        .iter()
        .map(|&s| {
            let value = match q {
                None => ml_score_nu(s, params.nu, p)?,
                Some(q) => {
                    let r = s.sqrt();
                    let x: Vec<T> = params.mu.iter().zip(&axis).map(|(&m, &a)| m + r * a).collect();
                    mlq_score_nu(&x, params, q)?
                }
            };
            Ok((s, value))
        })
        .collect()
}
