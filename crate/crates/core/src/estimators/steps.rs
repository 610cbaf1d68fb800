//! E-step quantities and the two M-step updates for `(μ, Σ)`.

use crate::error::{Error, Result};
use crate::linalg::{spd_repair, Matrix, SpdMatrix};
use crate::scalar::Real;
use crate::tdist::{cond_expect_log_u, cond_expect_u, Dataset, MvtParams};

/// Per-observation conditional expectations of the mixing variable.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepQuantities<T> {
    /// `E(U | xᵢ)`.
    pub u1: Vec<T>,
    /// `E(log U | xᵢ)`; absent when ν is held fixed.
    pub u2: Option<Vec<T>>,
    /// Squared Mahalanobis distances under the current iterate.
    pub s: Vec<T>,
}

/// Which location enters the Lq scatter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatterCentering {
    /// Centre on the location of the previous iterate.
    #[default]
    Previous,
    /// Centre on the location produced in the same M-step.
    Updated,
}

pub fn mahalanobis_all<T: Real>(data: &Dataset<T>, params: &MvtParams<T>) -> Result<Vec<T>> {
    if data.p() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), found: data.p() });
    }
    data.rows().map(|x| params.mahalanobis_sq(x)).collect()
}

/// E-step with both expectations.
pub fn e_step<T: Real>(data: &Dataset<T>, params: &MvtParams<T>) -> Result<EStepQuantities<T>> {
    e_step_with(data, params, true)
}

/// E-step; `E(log U | x)` is only evaluated when `with_log` is set.
pub fn e_step_with<T: Real>(data: &Dataset<T>, params: &MvtParams<T>, with_log: bool) -> Result<EStepQuantities<T>> {
    let s = mahalanobis_all(data, params)?;
    let (nu, p) = (params.nu, params.dim());
    let u1 = s.iter().map(|&si| cond_expect_u(si, nu, p)).collect::<Result<Vec<_>>>()?;
    let u2 = if with_log {
        Some(s.iter().map(|&si| cond_expect_log_u(si, nu, p)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(EStepQuantities { u1, u2, s })
}

/// `Σ wᵢ xᵢ / Σ wᵢ`.
fn weighted_mean<T: Real>(data: &Dataset<T>, w: &[T]) -> Result<Vec<T>> {
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::DegenerateData(format!("weight total {total} is not positive")));
    }
    let mut acc = vec![T::zero(); data.p()];
    for (x, &wi) in data.rows().zip(w) {
        for (a, &v) in acc.iter_mut().zip(x) {
            *a = *a + wi * v;
        }
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

/// `Σ wᵢ (xᵢ − c)(xᵢ − c)ᵀ / denom`, repaired to be positive definite.
fn weighted_scatter<T: Real>(data: &Dataset<T>, w: &[T], centre: &[T], denom: T, floor: T) -> Result<SpdMatrix<T>> {
    let p = data.p();
    let mut m = Matrix::zeros(p);
    let mut d = vec![T::zero(); p];
    for (x, &wi) in data.rows().zip(w) {
        for ((dj, &xj), &cj) in d.iter_mut().zip(x).zip(centre) {
            *dj = xj - cj;
        }
        for i in 0..p {
            let wd = wi * d[i];
            for j in 0..=i {
                m[(i, j)] = m[(i, j)] + wd * d[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            let v = m[(i, j)] / denom;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if !m.is_finite() || !(m.trace() > T::zero()) {
        return Err(Error::DegenerateData("scatter update collapsed".into()));
    }
    spd_repair(&m, floor)
}

/// Likelihood M-step: weighted mean, then the weighted scatter about that
/// freshly updated mean, divided by `n`.
pub fn m_step_ml<T: Real>(data: &Dataset<T>, est: &EStepQuantities<T>, spd_floor: T) -> Result<(Vec<T>, SpdMatrix<T>)> {
    let mu = weighted_mean(data, &est.u1)?;
    let sigma = weighted_scatter(data, &est.u1, &mu, T::from_count(data.n()), spd_floor)?;
    Ok((mu, sigma))
}

/// Lq weights `(w_q, v)` for one observation.
///
/// With `a = (1−q)(ν+p)/2`: `w_q = (ν+p)(ν+s)^{−(1+a)}` and `v = (ν+s)^{−a}`.
pub fn mlq_weights<T: Real>(s: T, nu: T, p: usize, q: T) -> Result<(T, T)> {
    if !(s >= T::zero()) {
        return Err(Error::Domain(format!("squared distance must be nonnegative, got {s}")));
    }
    if !(nu > T::zero()) {
        return Err(Error::Domain(format!("degrees of freedom must be positive, got {nu}")));
    }
    if !(q > T::zero() && q <= T::one()) {
        return Err(Error::Domain(format!("q must lie in (0, 1], got {q}")));
    }
    let pf = T::from_count(p);
    let a = (T::one() - q) * (nu + pf) * T::lit(0.5);
    let log_base = (nu + s).ln();
    let v = (-a * log_base).exp();
    let w = (nu + pf) * (-(T::one() + a) * log_base).exp();
    Ok((w, v))
}

/// Lq M-step from precomputed distances `s` under `prev`.
pub(crate) fn m_step_mlq_from_s<T: Real>(
    data: &Dataset<T>,
    prev: &MvtParams<T>,
    s: &[T],
    q: T,
    spd_floor: T,
    centering: ScatterCentering,
) -> Result<(Vec<T>, SpdMatrix<T>)> {
    let (nu, p) = (prev.nu, prev.dim());
    let (w, v): (Vec<T>, Vec<T>) = s
        .iter()
        .map(|&si| mlq_weights(si, nu, p, q))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let mu = weighted_mean(data, &w)?;
    let v_total: T = v.iter().copied().sum();
    let centre = match centering {
        ScatterCentering::Previous => &prev.mu,
        ScatterCentering::Updated => &mu,
    };
    let sigma = weighted_scatter(data, &w, centre, v_total, spd_floor)?;
    Ok((mu, sigma))
}

/// Lq M-step: `μ = Σ w_q x / Σ w_q` and `Σ = Σ w_q (x − c)(x − c)ᵀ / Σ v`,
/// with weights evaluated under `prev`.
pub fn m_step_mlq<T: Real>(
    data: &Dataset<T>,
    prev: &MvtParams<T>,
    q: T,
    spd_floor: T,
    centering: ScatterCentering,
) -> Result<(Vec<T>, SpdMatrix<T>)> {
    let s = mahalanobis_all(data, prev)?;
    m_step_mlq_from_s(data, prev, &s, q, spd_floor, centering)
}

/// Distance between `params` and one application of the fixed-ν estimating
/// equations for `(μ, Σ)` evaluated at `params`.
///
/// `q = None` checks the likelihood equations, `Some(q)` the Lq equations.
/// Returns `‖μ' − μ‖ + ‖Σ' − Σ‖_F`; zero at an exact solution.
pub fn estimating_equation_residual<T: Real>(data: &Dataset<T>, params: &MvtParams<T>, q: Option<T>) -> Result<T> {
    let s = mahalanobis_all(data, params)?;
    let (nu, p) = (params.nu, params.dim());
    let (w, denom) = match q {
        None => {
            let w = s.iter().map(|&si| cond_expect_u(si, nu, p)).collect::<Result<Vec<_>>>()?;
            (w, T::from_count(data.n()))
        }
        Some(q) => {
            let (w, v): (Vec<T>, Vec<T>) =
                s.iter().map(|&si| mlq_weights(si, nu, p, q)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
            (w, v.into_iter().sum())
        }
    };
    let mu = weighted_mean(data, &w)?;
    let p = data.p();
    let mut sig = Matrix::<T>::zeros(p);
    for (x, &wi) in data.rows().zip(&w) {
        for i in 0..p {
            for j in 0..p {
                sig[(i, j)] = sig[(i, j)] + wi * (x[i] - params.mu[i]) * (x[j] - params.mu[j]);
            }
        }
    }
    let mu_res: T = mu.iter().zip(&params.mu).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    let mut diff = params.sigma.matrix().clone();
    for i in 0..p {
        for j in 0..p {
            diff[(i, j)] = sig[(i, j)] / denom - diff[(i, j)];
        }
    }
    Ok(mu_res + diff.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std2(nu: f64) -> MvtParams<f64> {
        MvtParams::standard(2, nu).unwrap()
    }

    #[test]
    fn e_step_single_point_at_location() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let est = e_step(&data, &std2(3.0)).unwrap();
        assert_eq!(est.s, vec![0.0]);
        assert!((est.u1[0] - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn e_step_all_rows_at_location() {
        let params = MvtParams::<f64>::new(vec![2.0, 1.0], SpdMatrix::identity(2), 4.0).unwrap();
        let data = Dataset::from_rows(&vec![vec![2.0, 1.0]; 5]).unwrap();
        let est = e_step(&data, &params).unwrap();
        assert!(est.u1.iter().all(|&u| (u - 6.0 / 4.0).abs() < 1e-15));
    }

    #[test]
    fn e_step_delegates_to_pointwise_expectations() {
        let params = std2(2.5);
        let data = Dataset::from_rows(&[vec![0.3, -1.2], vec![4.0, 2.0]]).unwrap();
        let est = e_step(&data, &params).unwrap();
        for (i, x) in data.rows().enumerate() {
            let s = params.mahalanobis_sq(x).unwrap();
            assert_eq!(est.s[i], s);
            assert_eq!(est.u1[i], cond_expect_u(s, 2.5, 2).unwrap());
            assert_eq!(est.u2.as_ref().unwrap()[i], cond_expect_log_u(s, 2.5, 2).unwrap());
            assert!(est.u2.as_ref().unwrap()[i] < est.u1[i].ln());
        }
        assert!(e_step_with(&data, &params, false).unwrap().u2.is_none());
    }

    #[test]
    fn equal_weights_give_sample_mean() {
        let data = Dataset::<f64>::from_rows(&[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]]).unwrap();
        let est = EStepQuantities { u1: vec![0.7; 3], u2: None, s: vec![0.0; 3] };
        let (mu, _) = m_step_ml(&data, &est, 1e-10).unwrap();
        assert!((mu[0] - 2.0).abs() < 1e-15 && (mu[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn outlier_gets_smallest_weight() {
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        rows.push(vec![40.0, 40.0]);
        let data = Dataset::from_rows(&rows).unwrap();
        let est = e_step(&data, &std2(3.0)).unwrap();
        let w_out = est.u1[10];
        assert!(est.u1[..10].iter().all(|&w| w > w_out));
    }

    #[test]
    fn mlq_weight_examples() {
        let (w, v) = mlq_weights(4.0f64, 3.0, 2, 1.0).unwrap();
        assert!((w - 5.0 / 7.0).abs() < 1e-15);
        assert_eq!(v, 1.0);

        // a = 0.15·5/2 = 0.375
        let (w, v) = mlq_weights(0.0, 3.0, 2, 0.85).unwrap();
        assert!((w - 5.0 * 3f64.powf(-1.375)).abs() < 1e-14);
        assert!((v - 3f64.powf(-0.375)).abs() < 1e-14);
        assert!((w - 1.1040).abs() < 2e-4 && (v - 0.6622).abs() < 2e-4);

        let mut prev = f64::INFINITY;
        for s in [0.0, 0.5, 3.0, 30.0, 3000.0] {
            let (wq, _) = mlq_weights(s, 3.0, 2, 0.85).unwrap();
            let ratio = wq / cond_expect_u(s, 3.0, 2).unwrap();
            assert!(ratio < prev);
            prev = ratio;
        }
        assert!(mlq_weights(-1.0, 3.0, 2, 0.9).is_err());
        assert!(mlq_weights(1.0, 3.0, 2, 0.0).is_err());
    }

    #[test]
    fn mlq_step_at_q_one_matches_ml_step() {
        let data = Dataset::<f64>::from_rows(&[vec![0.1, 0.4], vec![2.0, -1.0], vec![-0.7, 0.3], vec![5.0, 5.0]]).unwrap();
        let prev = MvtParams::new(vec![0.5, 0.2], SpdMatrix::identity(2), 3.0).unwrap();
        let est = e_step(&data, &prev).unwrap();
        let (mu_ml, _) = m_step_ml(&data, &est, 1e-10).unwrap();
        let (mu_q, sig_q) = m_step_mlq(&data, &prev, 1.0, 1e-10, ScatterCentering::Updated).unwrap();
        for (a, b) in mu_ml.iter().zip(&mu_q) {
            assert!((a - b).abs() < 1e-14);
        }
        // with v ≡ 1 the denominator is n and the updated centre matches the ML step
        let (_, sig_ml) = m_step_ml(&data, &est, 1e-10).unwrap();
        assert!(sig_ml.matrix().sub(sig_q.matrix()).unwrap().frobenius_norm() < 1e-14);
    }

    #[test]
    fn symmetric_pair_keeps_location() {
        let data = Dataset::from_rows(&[vec![-1.0, 2.0], vec![1.0, -2.0]]).unwrap();
        let prev = std2(3.0);
        let (mu, _) = m_step_mlq(&data, &prev, 0.8, 1e-10, ScatterCentering::Previous).unwrap();
        assert!(mu.iter().all(|v| v.abs() < 1e-15));
    }
}
