//! Degrees-of-freedom updates.
//!
//! Both equations are solved by Brent's method on a fixed bracket. When the
//! estimating function keeps one sign over the bracket the solve clamps to
//! the endpoint with the smaller residual and reports `bracketed = false`.

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::root::{brent, BracketedRoot};
use crate::scalar::Real;
use crate::special::digamma;
use crate::tdist::{log_pdf_from_s, log_norm_const, Dataset};

use super::steps::EStepQuantities;

const NU_XTOL: f64 = 1e-10;
const NU_FTOL: f64 = 1e-10;
const NU_MAX_ITER: usize = 200;

/// `log(ν/2) − ψ(ν/2) + 1`.
fn nu_core<T: Real>(nu: T) -> Result<T> {
    let half_nu = nu * T::lit(0.5);
    Ok(half_nu.ln() - digamma(half_nu)? + T::one())
}

fn check_bracket<T: Real>(bracket: (T, T)) -> Result<()> {
    let (lo, hi) = bracket;
    if lo > T::zero() && lo < hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("invalid ν bracket ({lo}, {hi})")))
    }
}

fn log_gap<T: Real>(est: &EStepQuantities<T>) -> Result<Vec<T>> {
    let u2 = est
        .u2
        .as_ref()
        .ok_or_else(|| Error::Domain("E-step did not compute E(log U | x)".into()))?;
    if u2.len() != est.u1.len() {
        return Err(Error::DimensionMismatch { expected: est.u1.len(), found: u2.len() });
    }
    Ok(u2.iter().zip(&est.u1).map(|(&a, &b)| a - b).collect())
}

/// Likelihood ν update: root of `Σᵢ [−ψ(ν/2) + log(ν/2) + 1 + û₂ᵢ − û₁ᵢ]`.
///
/// The sum is divided by `n`, which leaves the root unchanged.
pub fn solve_nu_ml<T: Real>(est: &EStepQuantities<T>, bracket: (T, T)) -> Result<BracketedRoot<T>> {
    check_bracket(bracket)?;
    let gap = log_gap(est)?;
    if gap.is_empty() {
        return Err(Error::Domain("no observations".into()));
    }
    let mean_gap = gap.iter().copied().sum::<T>() / T::from_count(gap.len());
    if !mean_gap.is_finite() {
        return Err(Error::Domain("non-finite E-step quantities".into()));
    }
    brent(
        |nu| Ok(nu_core(nu)? + mean_gap),
        bracket.0,
        bracket.1,
        T::lit(NU_XTOL),
        T::lit(NU_FTOL),
        NU_MAX_ITER,
    )
}

/// Lq ν update: root of `Σᵢ [log(ν/2) − ψ(ν/2) + û₂ᵢ − û₁ᵢ + 1]·f(xᵢ; μ, Σ, ν)^{1−q}`.
///
/// The density weights are re-evaluated at every candidate ν and rescaled by
/// their maximum before summing; the rescaling is a common positive factor.
pub fn solve_nu_mlq<T: Real>(
    data: &Dataset<T>,
    mu: &[T],
    sigma: &SpdMatrix<T>,
    est: &EStepQuantities<T>,
    q: T,
    bracket: (T, T),
) -> Result<BracketedRoot<T>> {
    check_bracket(bracket)?;
    if !(q > T::zero() && q <= T::one()) {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    let gap = log_gap(est)?;
    if gap.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: gap.len() });
    }
    let s: Vec<T> = data.rows().map(|x| sigma.mahalanobis_sq(x, mu)).collect::<Result<_>>()?;
    let p = data.p();
    let log_det = sigma.log_det();
    let one_minus_q = T::one() - q;
    let mut log_w = vec![T::zero(); s.len()];
    let f = |nu: T| -> Result<T> {
        let c = log_norm_const(nu, p, log_det)?;
        let mut max = T::neg_infinity();
        for (lw, &si) in log_w.iter_mut().zip(&s) {
            *lw = one_minus_q * log_pdf_from_s(si, nu, p, c);
            max = max.max(*lw);
        }
        let (mut num, mut den) = (T::zero(), T::zero());
        for (&lw, &g) in log_w.iter().zip(&gap) {
            let w = (lw - max).exp();
            num = num + w * g;
            den = den + w;
        }
        Ok(nu_core(nu)? + num / den)
    };
    brent(f, bracket.0, bracket.1, T::lit(NU_XTOL), T::lit(NU_FTOL), NU_MAX_ITER)
}
