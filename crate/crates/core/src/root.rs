//! Derivative-free bracketed root finding (Brent's method).

use crate::error::{domain, Result};
use crate::scalar::Real;

/// Outcome of a bracketed solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketedRoot<T> {
    pub x: T,
    pub fx: T,
    /// False when the function had no sign change on the bracket; `x` is then
    /// whichever endpoint has the smaller `|f|`.
    pub bracketed: bool,
    pub evaluations: usize,
}

/// Finds a root of `f` on `[lo, hi]`.
///
/// Stops when `|f(x)| < ftol` or the bracket is narrower than `xtol`. Without
/// a sign change the endpoint with the smaller residual is returned and
/// `bracketed` is false.
pub fn brent<T, F>(mut f: F, lo: T, hi: T, xtol: T, ftol: T, max_iter: usize) -> Result<BracketedRoot<T>>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return domain(format!("invalid bracket [{lo}, {hi}]"));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    let mut evaluations = 2;
    if fa.is_nan() || fb.is_nan() {
        return domain("root function is NaN at a bracket endpoint");
    }
    if fa == T::zero() {
        return Ok(BracketedRoot { x: a, fx: fa, bracketed: true, evaluations });
    }
    if fb == T::zero() {
        return Ok(BracketedRoot { x: b, fx: fb, bracketed: true, evaluations });
    }
    if fa.signum() == fb.signum() {
        let (x, fx) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
        return Ok(BracketedRoot { x, fx, bracketed: false, evaluations });
    }

    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let three = T::lit(3.0);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = two * T::epsilon() * b.abs() + half * xtol;
        let m = half * (c - b);
        if m.abs() <= tol || fb.abs() < ftol {
            break;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, secant when a == c
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (two * m * s, T::one() - s)
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                (
                    s * (two * m * qa * (qa - r) - (b - a) * (r - T::one())),
                    (qa - T::one()) * (r - T::one()) * (s - T::one()),
                )
            };
            if p > T::zero() {
                q = -q;
            } else {
                p = -p;
            }
            if two * p < (three * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b = b + if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b)?;
        evaluations += 1;
        if fb.is_nan() {
            return domain("root function returned NaN");
        }
    }
    Ok(BracketedRoot { x: b, fx: fb, bracketed: true, evaluations })
}
