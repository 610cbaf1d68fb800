//! Likelihood (EM) and Lq-likelihood (doubly reweighted EM-type) fitting of
//! all three parameters of the multivariate t distribution.

mod nu;
mod steps;

pub use nu::{solve_nu_ml, solve_nu_mlq};
pub use steps::{
    e_step, e_step_with, estimating_equation_residual, m_step_ml, m_step_mlq, mahalanobis_all, mlq_weights,
    EStepQuantities, ScatterCentering,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_repair, Matrix};
use crate::scalar::Real;
use crate::tdist::{log_pdf_from_s, lq_of_log, Dataset, MvtParams};

/// Initial degrees of freedom when ν is estimated.
pub const INITIAL_NU: f64 = 3.0;

/// Convention used for the stopping norm, recorded with every fit.
pub const STOPPING_NORM: &str = "euclidean(mu, upper_triangle(sigma), nu)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Maximum likelihood via EM.
    Ml,
    /// Maximum Lq-likelihood via the EM-type algorithm.
    Mlq,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ml => "ml",
            Method::Mlq => "mlq",
        })
    }
}

/// Estimator controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig<T> {
    pub method: Method,
    /// Lq exponent; ignored for [`Method::Ml`].
    pub q: T,
    pub estimate_nu: bool,
    /// Degrees of freedom when `estimate_nu` is false.
    pub fixed_nu: T,
    pub epsilon: T,
    pub max_iter: usize,
    pub nu_bracket: (T, T),
    pub spd_floor: T,
    pub centering: ScatterCentering,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            method: Method::Ml,
            q: T::one(),
            estimate_nu: true,
            fixed_nu: T::lit(INITIAL_NU),
            epsilon: T::lit(1e-6),
            max_iter: 1000,
            nu_bracket: (T::lit(0.1), T::lit(200.0)),
            spd_floor: T::lit(1e-10),
            centering: ScatterCentering::Previous,
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn ml() -> Self {
        Self::default()
    }

    pub fn mlq(q: T) -> Self {
        Self { method: Method::Mlq, q, ..Self::default() }
    }

    /// Holds ν fixed at `nu`.
    pub fn with_fixed_nu(mut self, nu: T) -> Self {
        self.estimate_nu = false;
        self.fixed_nu = nu;
        self
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    /// The q actually used by the iteration: one for the likelihood.
    pub fn effective_q(&self) -> T {
        match self.method {
            Method::Ml => T::one(),
            Method::Mlq => self.q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.method == Method::Mlq && !(self.q > T::zero() && self.q <= T::one()) {
            return bad(format!("q must lie in (0, 1], got {}", self.q));
        }
        if !(self.epsilon > T::zero()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        let (lo, hi) = self.nu_bracket;
        if !(lo > T::zero() && lo < hi && hi.is_finite()) {
            return bad(format!("invalid ν bracket ({lo}, {hi})"));
        }
        if !self.estimate_nu && !(self.fixed_nu > T::zero()) {
            return bad(format!("fixed ν must be positive, got {}", self.fixed_nu));
        }
        if !(self.spd_floor > T::zero()) {
            return bad("spd_floor must be positive".into());
        }
        Ok(())
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    /// Norm of the parameter change produced by this iteration.
    pub change: T,
    /// Objective at the parameters produced by this iteration.
    pub objective: T,
    /// False if the ν update clamped to a bracket endpoint.
    pub nu_bracketed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub params: MvtParams<T>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry<T>>,
    /// Log-likelihood for ML, `Σ L_q(f(xᵢ))` for MLq.
    pub objective: T,
    pub method: Method,
    pub q: T,
}

impl<T: Real> FitResult<T> {
    /// Last parameter-change norm, or infinity before any iteration.
    pub fn final_change(&self) -> T {
        self.trace.last().map_or(T::infinity(), |t| t.change)
    }

    /// True if any ν update hit a bracket endpoint.
    pub fn nu_clamped(&self) -> bool {
        self.trace.iter().any(|t| !t.nu_bracketed)
    }
}

/// Starting values: column means, the unbiased sample covariance (repaired if
/// singular), and `ν = 3`.
pub fn init_params<T: Real>(data: &Dataset<T>, spd_floor: T) -> Result<MvtParams<T>> {
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least two observations, got {n}")));
    }
    let mu = data.mean();
    let mut cov = Matrix::<T>::zeros(p);
    for x in data.rows() {
        for i in 0..p {
            for j in 0..p {
                cov[(i, j)] = cov[(i, j)] + (x[i] - mu[i]) * (x[j] - mu[j]);
            }
        }
    }
    if cov.as_slice().iter().all(|&v| v == T::zero()) {
        return Err(Error::DegenerateData("all observations are identical".into()));
    }
    let denom = T::from_count(n - 1);
    let cov = Matrix::new(p, cov.as_slice().iter().map(|&v| v / denom).collect())?;
    let sigma = spd_repair(&cov, spd_floor)?;
    MvtParams::new(mu, sigma, T::lit(INITIAL_NU))
}

/// Observed-data objective: log-likelihood when `q = 1`, else `Σ L_q(f(xᵢ))`.
pub fn objective<T: Real>(data: &Dataset<T>, params: &MvtParams<T>, q: T) -> Result<T> {
    let c = params.log_norm_const()?;
    let (nu, p) = (params.nu, params.dim());
    let mut total = T::zero();
    for x in data.rows() {
        let log_f = log_pdf_from_s(params.mahalanobis_sq(x)?, nu, p, c);
        total = total + lq_of_log(log_f, q);
    }
    Ok(total)
}

/// Log-likelihood `Σ log f(xᵢ)`.
pub fn log_likelihood<T: Real>(data: &Dataset<T>, params: &MvtParams<T>) -> Result<T> {
    objective(data, params, T::one())
}

fn change_norm<T: Real>(old: &MvtParams<T>, new: &MvtParams<T>, with_nu: bool) -> T {
    let mut acc: T = old.mu.iter().zip(&new.mu).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let (so, sn) = (old.sigma.matrix().upper_triangle(), new.sigma.matrix().upper_triangle());
    acc = acc + so.iter().zip(&sn).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    if with_nu {
        acc = acc + (old.nu - new.nu) * (old.nu - new.nu);
    }
    acc.sqrt()
}

/// Row order used by [`fit`]: lexicographic on the coordinates.
fn canonical_order<T: Real>(data: &Dataset<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&i, &j| {
        data.row(i)
            .iter()
            .zip(data.row(j))
            .map(|(a, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Fits `(μ, Σ, ν)` by the configured method.
///
/// Rows are processed in a canonical order, so the result does not depend on
/// the order of the input. Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn fit<T: Real>(data: &Dataset<T>, config: &FitConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    let (n, p) = (data.n(), data.p());
    if n < p + 1 {
        return Err(Error::DegenerateData(format!("need at least p + 1 = {} observations, got {n}", p + 1)));
    }
    let data = data.permuted(&canonical_order(data));
    let q = config.effective_q();
    let mut params = init_params(&data, config.spd_floor)?;
    if !config.estimate_nu {
        params.nu = config.fixed_nu;
    }

    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=config.max_iter {
        let est = e_step_with(&data, &params, config.estimate_nu)?;
        let (next, nu_bracketed) = match config.method {
            Method::Ml => {
                let (mu, sigma) = m_step_ml(&data, &est, config.spd_floor)?;
                let (nu, bracketed) = if config.estimate_nu {
                    let r = solve_nu_ml(&est, config.nu_bracket)?;
                    (r.x, r.bracketed)
                } else {
                    (params.nu, true)
                };
                (MvtParams::new(mu, sigma, nu)?, bracketed)
            }
            Method::Mlq => {
                let (mu, sigma) =
                    steps::m_step_mlq_from_s(&data, &params, &est.s, q, config.spd_floor, config.centering)?;
                let (nu, bracketed) = if config.estimate_nu {
                    let r = solve_nu_mlq(&data, &params.mu, &params.sigma, &est, q, config.nu_bracket)?;
                    (r.x, r.bracketed)
                } else {
                    (params.nu, true)
                };
                (MvtParams::new(mu, sigma, nu)?, bracketed)
            }
        };
        let change = change_norm(&params, &next, config.estimate_nu);
        params = next;
        let obj = objective(&data, &params, q)?;
        trace.push(TraceEntry { iteration, change, objective: obj, nu_bracketed });
        if change < config.epsilon {
            converged = true;
            break;
        }
    }
    let objective = trace.last().map(|t| t.objective).unwrap_or(T::nan());
    Ok(FitResult {
        params,
        iterations: trace.len(),
        converged,
        trace,
        objective,
        method: config.method,
        q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpdMatrix;
    use crate::tdist::sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn case1() -> MvtParams<f64> {
        MvtParams::new(vec![2.0, 1.0], SpdMatrix::identity(2), 3.0).unwrap()
    }

    fn draw(n: usize, seed: u64) -> Dataset<f64> {
        sample(&case1(), n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn init_two_points() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let init = init_params(&data, 1e-10).unwrap();
        assert_eq!(init.mu, vec![1.0, 1.0]);
        assert_eq!(init.nu, 3.0);
        let cov = Matrix::from_rows(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        let expect = spd_repair(&cov, 1e-10).unwrap();
        assert_eq!(init.sigma.matrix(), expect.matrix());
    }

    #[test]
    fn init_rejects_degenerate() {
        let one = Dataset::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(init_params(&one, 1e-10), Err(Error::DegenerateData(_))));
        let same = Dataset::from_rows(&vec![vec![1.0, 2.0]; 4]).unwrap();
        assert!(matches!(init_params(&same, 1e-10), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn init_mean_near_truth() {
        let data = draw(20_000, 3);
        let init = init_params(&data, 1e-10).unwrap();
        // sd of the mean: sqrt(3 / 20000) ≈ 0.0122
        assert!((init.mu[0] - 2.0).abs() < 3.0 * 0.0123);
        assert!((init.mu[1] - 1.0).abs() < 3.0 * 0.0123);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::<f64>::mlq(0.0).validate().is_err());
        assert!(FitConfig::<f64>::mlq(1.2).validate().is_err());
        assert!(FitConfig::<f64>::ml().with_epsilon(0.0).validate().is_err());
        let mut c = FitConfig::<f64>::ml();
        c.nu_bracket = (5.0, 1.0);
        assert!(c.validate().is_err());
        assert!(FitConfig::<f64>::ml().with_fixed_nu(-1.0).validate().is_err());
        assert!(FitConfig::<f64>::mlq(0.85).validate().is_ok());
    }

    #[test]
    fn fit_needs_p_plus_one_rows() {
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fit(&data, &FitConfig::ml()), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn fixed_nu_stays_fixed() {
        let data = draw(300, 11);
        let r = fit(&data, &FitConfig::ml().with_fixed_nu(4.5)).unwrap();
        assert!(r.converged);
        assert_eq!(r.params.nu, 4.5);
        assert_eq!(r.trace.len(), r.iterations);
        let r = fit(&data, &FitConfig::mlq(0.9).with_fixed_nu(4.5)).unwrap();
        assert_eq!(r.params.nu, 4.5);
    }

    #[test]
    fn large_clean_sample_ml() {
        let data = draw(5000, 2024);
        let r = fit(&data, &FitConfig::ml()).unwrap();
        assert!(r.converged);
        let p = &r.params;
        assert!((p.mu[0] - 2.0).abs() < 0.05 && (p.mu[1] - 1.0).abs() < 0.05);
        let err = p.sigma.matrix().sub(&Matrix::identity(2)).unwrap().frobenius_norm();
        assert!(err < 0.1, "{err}");
        assert!((p.nu - 3.0).abs() < 0.5, "{}", p.nu);
        assert!(r.final_change() < 1e-6);
    }

    #[test]
    fn max_iter_gives_unconverged_result() {
        let data = draw(200, 5);
        let r = fit(&data, &FitConfig::mlq(0.85).with_max_iter(2)).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn ml_fixed_point_is_stable() {
        let data = draw(400, 8);
        let cfg = FitConfig::ml().with_epsilon(1e-12).with_max_iter(20_000);
        let r = fit(&data, &cfg).unwrap();
        let est = e_step(&data, &r.params).unwrap();
        let (mu, sigma) = m_step_ml(&data, &est, 1e-10).unwrap();
        let dmu: f64 = mu.iter().zip(&r.params.mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ds = sigma.matrix().sub(r.params.sigma.matrix()).unwrap().frobenius_norm();
        assert!(dmu < 1e-8 && ds < 1e-8, "{dmu} {ds}");
    }

    #[test]
    fn mlq_fixed_point_is_stable() {
        let data = draw(400, 8);
        let cfg = FitConfig::mlq(0.85).with_epsilon(1e-12).with_max_iter(20_000);
        let r = fit(&data, &cfg).unwrap();
        assert!(r.converged);
        let (mu, sigma) = m_step_mlq(&data, &r.params, 0.85, 1e-10, ScatterCentering::Previous).unwrap();
        let dmu: f64 = mu.iter().zip(&r.params.mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ds = sigma.matrix().sub(r.params.sigma.matrix()).unwrap().frobenius_norm();
        assert!(dmu < 1e-8 && ds < 1e-8, "{dmu} {ds}");
    }

    #[test]
    fn centering_variants_share_fixed_point() {
        let data = draw(300, 21);
        let mut cfg = FitConfig::mlq(0.9).with_epsilon(1e-11).with_max_iter(20_000);
        let a = fit(&data, &cfg).unwrap();
        cfg.centering = ScatterCentering::Updated;
        let b = fit(&data, &cfg).unwrap();
        assert!((a.params.nu - b.params.nu).abs() < 1e-7);
        let ds = a.params.sigma.matrix().sub(b.params.sigma.matrix()).unwrap().frobenius_norm();
        assert!(ds < 1e-7);
    }

    #[test]
    fn f32_fit_runs() {
        let data64 = draw(300, 4);
        let flat: Vec<f32> = data64.as_flat().iter().map(|&v| v as f32).collect();
        let data = Dataset::from_flat(2, flat).unwrap();
        let r = fit(&data, &FitConfig::<f32>::ml().with_epsilon(1e-4)).unwrap();
        let r64 = fit(&data64, &FitConfig::ml()).unwrap();
        assert!((r.params.nu as f64 - r64.params.nu).abs() < 1e-2);
    }
}
