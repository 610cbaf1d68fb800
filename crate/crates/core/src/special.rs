//! Log-gamma and digamma for positive real arguments.
//!
//! Both use upward recurrence into the region where the asymptotic series
//! converges fast, then evaluate the series.

use crate::error::{domain, Result};
use crate::scalar::Real;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Stirling correction coefficients B₂ₖ / (2k(2k−1)), k = 1..=8.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Digamma asymptotic coefficients B₂ₖ / (2k), k = 1..=7.
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

const LGAMMA_SHIFT: f64 = 12.0;
const DIGAMMA_SHIFT: f64 = 10.0;

fn check_positive<T: Real>(x: T, name: &str) -> Result<()> {
    if x > T::zero() {
        Ok(())
    } else {
        domain(format!("{name} requires x > 0, got {x}"))
    }
}

/// `log Γ(x)` for `x > 0`.
pub fn log_gamma<T: Real>(x: T) -> Result<T> {
    check_positive(x, "log_gamma")?;
    if x.is_infinite() {
        return Ok(x);
    }
    let shift = T::lit(LGAMMA_SHIFT);
    let mut z = x;
    // Γ(x) = Γ(x + k) / (x (x+1) ⋯ (x+k−1))
    let mut prod = T::one();
    while z < shift {
        prod = prod * z;
        z = z + T::one();
    }
    let half = T::lit(0.5);
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    let mut pow = inv;
    for &c in &STIRLING {
        series = series + T::lit(c) * pow;
        pow = pow * inv2;
    }
    let stirling = (z - half) * z.ln() - z + T::lit(LN_SQRT_2PI) + series;
    Ok(stirling - prod.ln())
}

/// `ψ(x) = Γ′(x)/Γ(x)` for `x > 0`.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    check_positive(x, "digamma")?;
    if x.is_infinite() {
        return Ok(x);
    }
    let shift = T::lit(DIGAMMA_SHIFT);
    let mut z = x;
    // ψ(x) = ψ(x + 1) − 1/x
    let mut acc = T::zero();
    while z < shift {
        acc = acc - z.recip();
        z = z + T::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    let mut pow = inv2;
    for &c in &DIGAMMA_ASYMPTOTIC {
        series = series + T::lit(c) * pow;
        pow = pow * inv2;
    }
    Ok(acc + z.ln() - T::lit(0.5) * inv - series)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    /// Log-spaced grid on `[lo, hi]`.
    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0f64).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0f64).unwrap().abs() < 1e-14);
        let half = log_gamma(0.5f64).unwrap();
        assert!((half - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        assert!((half - 0.572_364_942_9).abs() < 1e-10);
        let ten = log_gamma(10.0f64).unwrap();
        assert!((ten - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_gamma_matches_factorial_sums() {
        // exact log((n−1)!) accumulated in f64
        let mut acc = 0.0f64;
        for n in 2..=170u32 {
            acc += ((n - 1) as f64).ln();
            let v = log_gamma(n as f64).unwrap();
            assert!((v - acc).abs() <= 1e-12 * acc.max(1.0), "n={n}: {v} vs {acc}");
        }
    }

    #[test]
    fn log_gamma_small_and_large() {
        // Γ(x) = Γ(x+1)/x near zero
        assert!((log_gamma(0.05f64).unwrap() - 2.968_879_201_051_731).abs() < 1e-12);
        // Stirling region, value ≈ 1.281e7 so compare relatively
        let big = log_gamma(1e6f64).unwrap();
        let expect = 12_815_504.569_147_612;
        assert!(((big - expect) / expect).abs() < 1e-14, "{big}");
    }

    #[test]
    fn log_gamma_recurrence() {
        for x in grid(0.05, 1e4, 200) {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = log_gamma(x).unwrap() + x.ln();
            assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn digamma_known_values() {
        let one = digamma(1.0f64).unwrap();
        assert!((one + EULER_GAMMA).abs() < 1e-13, "{one:e}");
        let half = digamma(0.5f64).unwrap();
        let closed = -EULER_GAMMA - 2.0 * 2f64.ln();
        assert!((half - closed).abs() < 1e-13);
        assert!((half + 1.963_510_026_0).abs() < 1e-9);
    }

    #[test]
    fn digamma_matches_harmonic_series() {
        // ψ(n) = −γ + Σ_{k=1}^{n−1} 1/k
        let mut h = 0.0f64;
        for n in 1..=2000u32 {
            let v = digamma(n as f64).unwrap();
            assert!((v - (h - EULER_GAMMA)).abs() < 1e-12, "n={n}");
            h += 1.0 / n as f64;
        }
    }

    #[test]
    fn digamma_functional_equation() {
        for x in grid(0.1, 1e4, 300) {
            let diff = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((diff - 1.0 / x).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn digamma_is_derivative_of_log_gamma() {
        for x in grid(0.1, 1e4, 120) {
            let h = 1e-5 * x.max(1.0);
            let fd = (log_gamma(x + h).unwrap() - log_gamma(x - h).unwrap()) / (2.0 * h);
            let d = digamma(x).unwrap();
            assert!((fd - d).abs() < 1e-6, "x={x}: fd={fd}, psi={d}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(log_gamma(0.0f64).is_err());
        assert!(log_gamma(-1.5f64).is_err());
        assert!(digamma(0.0f64).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn f32_path() {
        assert!((digamma(1.0f32).unwrap() + EULER_GAMMA as f32).abs() < 1e-6);
        assert!((log_gamma(10.0f32).unwrap() - 362_880f32.ln()).abs() < 1e-4);
    }
}
