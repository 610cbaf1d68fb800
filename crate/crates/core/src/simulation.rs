//! Seeded Monte Carlo harness for outlier-contamination studies.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, replicate_index)`, and results are aggregated in replicate order,
//! so a report depends only on its [`SimulationSpec`] and never on the number
//! of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, FitConfig, FitResult, Method};
use crate::linalg::{Matrix, SpdMatrix};
use crate::tdist::{log_pdf, sample, Dataset, MvtParams};

/// How the q sweep is scored; recorded in every report.
pub const SELECTION_RULE: &str = "mean(d_mu + d_sigma + |nu_hat - nu|)";

/// Description of one simulation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub true_params: MvtParams<f64>,
    pub n: usize,
    pub n_outliers: usize,
    pub n_replications: usize,
    /// Lq exponents to sweep; empty means the Lq fit is skipped.
    pub q_grid: Vec<f64>,
    /// Outlier offsets from μ, in marginal standard deviations.
    pub outlier_low: f64,
    pub outlier_high: f64,
    pub seed: u64,
    /// Template for both fits; `method` and `q` are overridden per fit.
    pub fit_config: FitConfig<f64>,
}

/// `μ = (2, 1)`, `Σ = I`, `ν = 3`.
pub fn case_one() -> MvtParams<f64> {
    MvtParams::new(vec![2.0, 1.0], SpdMatrix::identity(2), 3.0).expect("valid parameters")
}

/// `μ = (2, 1)`, `Σ = [[2, −0.5], [−0.5, 2]]`, `ν = 3`.
pub fn case_two() -> MvtParams<f64> {
    let sigma = SpdMatrix::from_rows(&[vec![2.0, -0.5], vec![-0.5, 2.0]]).expect("positive definite");
    MvtParams::new(vec![2.0, 1.0], sigma, 3.0).expect("valid parameters")
}

/// `lo, lo + step, …` up to `hi` inclusive (with a small tolerance).
pub fn q_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(lo <= hi) || !(lo > 0.0) || !(hi <= 1.0) {
        return Err(Error::InvalidConfig(format!("invalid q grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12).collect())
}

impl SimulationSpec {
    /// Defaults used throughout the desk-scale studies: five outliers offset
    /// 5–10 marginal SDs, 100 replications, q swept over 0.80..=0.98.
    pub fn new(true_params: MvtParams<f64>, n: usize) -> Self {
        Self {
            true_params,
            n,
            n_outliers: 5,
            n_replications: 100,
            q_grid: q_grid(0.80, 0.98, 0.02).expect("static grid"),
            outlier_low: 5.0,
            outlier_high: 10.0,
            seed: 1,
            fit_config: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.true_params.dim();
        if self.n < p + 1 {
            return Err(Error::InvalidConfig(format!("n must be at least p + 1 = {}", p + 1)));
        }
        if self.n_replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if !(self.outlier_low <= self.outlier_high) || !self.outlier_low.is_finite() || !self.outlier_high.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid outlier range {}:{}",
                self.outlier_low, self.outlier_high
            )));
        }
        if self.q_grid.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
            return Err(Error::InvalidConfig("q grid values must lie in (0, 1]".into()));
        }
        if self.q_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("q grid must be ascending".into()));
        }
        self.fit_config.validate()
    }

    fn stream(&self, replicate: usize, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * replicate as u64 + purpose);
        rng
    }
}

/// Clean sample for one replicate.
pub fn generate_replicate(spec: &SimulationSpec, replicate: usize) -> Result<Dataset<f64>> {
    sample(&spec.true_params, spec.n, &mut spec.stream(replicate, 0))
}

/// Appends `n_outliers` rows drawn uniformly from
/// `[μⱼ + low·√Σⱼⱼ, μⱼ + high·√Σⱼⱼ]` in each coordinate.
pub fn contaminate(data: &Dataset<f64>, spec: &SimulationSpec, replicate: usize) -> Result<Dataset<f64>> {
    let mut out = data.clone();
    if spec.n_outliers == 0 {
        return Ok(out);
    }
    let params = &spec.true_params;
    let p = params.dim();
    if data.p() != p {
        return Err(Error::DimensionMismatch { expected: p, found: data.p() });
    }
    let mut rng = spec.stream(replicate, 1);
    let mut extra = Vec::with_capacity(spec.n_outliers * p);
    for _ in 0..spec.n_outliers {
        for j in 0..p {
            let sd = params.sigma.matrix()[(j, j)].sqrt();
            let lo = params.mu[j] + spec.outlier_low * sd;
            let hi = params.mu[j] + spec.outlier_high * sd;
            let u: f64 = rng.random();
            extra.push(lo + (hi - lo) * u);
        }
    }
    out.extend(&Dataset::from_flat(p, extra)?)?;
    Ok(out)
}

/// Estimation error of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    /// `‖μ̂ − μ‖`.
    pub d_mu: f64,
    /// `‖Σ̂ − Σ‖_F`.
    pub d_sigma: f64,
    /// `(ν̂ − ν)²`.
    pub sq_err_nu: f64,
}

pub fn distance_metrics(estimate: &MvtParams<f64>, truth: &MvtParams<f64>) -> Result<Distances> {
    if estimate.dim() != truth.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), found: estimate.dim() });
    }
    let d_mu = estimate.mu.iter().zip(&truth.mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let d_sigma = estimate.sigma.matrix().sub(truth.sigma.matrix())?.frobenius_norm();
    let sq_err_nu = (estimate.nu - truth.nu).powi(2);
    Ok(Distances { d_mu, d_sigma, sq_err_nu })
}

/// One fit inside one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    pub q: f64,
    pub converged: bool,
    pub iterations: usize,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub nu: f64,
    pub distances: Option<Distances>,
    /// Set when the fit raised an error; the other fields are then empty.
    pub error: Option<String>,
}

impl ReplicateRecord {
    fn from_fit(replicate: usize, method: Method, q: f64, outcome: Result<FitResult<f64>>, truth: &MvtParams<f64>) -> Self {
        match outcome.and_then(|r| distance_metrics(&r.params, truth).map(|d| (r, d))) {
            Ok((r, d)) => Self {
                replicate,
                method,
                q,
                converged: r.converged,
                iterations: r.iterations,
                mu: r.params.mu.clone(),
                sigma: r.params.sigma.matrix().to_rows(),
                nu: r.params.nu,
                distances: Some(d),
                error: None,
            },
            Err(e) => Self {
                replicate,
                method,
                q,
                converged: false,
                iterations: 0,
                mu: Vec::new(),
                sigma: Vec::new(),
                nu: f64::NAN,
                distances: None,
                error: Some(e.to_string()),
            },
        }
    }

    /// Counted in the summaries: no error and converged.
    pub fn usable(&self) -> bool {
        self.error.is_none() && self.converged
    }
}

/// Aggregate over replicates for one method (and one q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub q: f64,
    pub n_used: usize,
    pub n_failed: usize,
    pub n_nonconverged: usize,
    pub mean_mu: Vec<f64>,
    pub mean_sigma: Vec<Vec<f64>>,
    pub mean_nu: f64,
    pub mean_d_mu: f64,
    pub mean_d_sigma: f64,
    pub mse_nu: f64,
    /// Mean of `d_mu + d_sigma + |ν̂ − ν|`, the q-selection score.
    pub mean_combined: f64,
}

fn summarize(records: &[&ReplicateRecord], method: Method, q: f64, p: usize) -> MethodSummary {
    let used: Vec<&&ReplicateRecord> = records.iter().filter(|r| r.usable()).collect();
    let n_failed = records.iter().filter(|r| r.error.is_some()).count();
    let n_nonconverged = records.iter().filter(|r| r.error.is_none() && !r.converged).count();
    let k = used.len() as f64;
    let mut mean_mu = vec![0.0; p];
    let mut mean_sigma = vec![vec![0.0; p]; p];
    let (mut nu, mut d_mu, mut d_sigma, mut mse, mut combined) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &used {
        let d = r.distances.expect("usable records carry distances");
        for j in 0..p {
            mean_mu[j] += r.mu[j] / k;
            for l in 0..p {
                mean_sigma[j][l] += r.sigma[j][l] / k;
            }
        }
        nu += r.nu / k;
        d_mu += d.d_mu / k;
        d_sigma += d.d_sigma / k;
        mse += d.sq_err_nu / k;
        combined += (d.d_mu + d.d_sigma + d.sq_err_nu.sqrt()) / k;
    }
    if used.is_empty() {
        let nan = f64::NAN;
        mean_mu.fill(nan);
        mean_sigma.iter_mut().for_each(|row| row.fill(nan));
        (nu, d_mu, d_sigma, mse, combined) = (nan, nan, nan, nan, nan);
    }
    MethodSummary {
        method,
        q,
        n_used: used.len(),
        n_failed,
        n_nonconverged,
        mean_mu,
        mean_sigma,
        mean_nu: nu,
        mean_d_mu: d_mu,
        mean_d_sigma: d_sigma,
        mse_nu: mse,
        mean_combined: combined,
    }
}

/// Outcome of [`run_simulation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub true_mu: Vec<f64>,
    pub true_sigma: Vec<Vec<f64>>,
    pub true_nu: f64,
    pub n: usize,
    pub n_outliers: usize,
    pub n_replications: usize,
    pub seed: u64,
    pub outlier_range: (f64, f64),
    pub selection_rule: String,
    pub ml: MethodSummary,
    /// Lq summary at the selected q; absent when the q grid is empty.
    pub mlq: Option<MethodSummary>,
    pub selected_q: Option<f64>,
    pub q_sweep: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl SimulationReport {
    /// Fits that raised an error, over all methods and q values.
    pub fn failure_count(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn nonconverged_count(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_none() && !r.converged).count()
    }
}

fn run_replicate(spec: &SimulationSpec, replicate: usize) -> Vec<ReplicateRecord> {
    let truth = &spec.true_params;
    let data = generate_replicate(spec, replicate).and_then(|d| contaminate(&d, spec, replicate));
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            let fail = |method, q| ReplicateRecord::from_fit(replicate, method, q, Err(e.clone()), truth);
            let mut out = vec![fail(Method::Ml, 1.0)];
            out.extend(spec.q_grid.iter().map(|&q| fail(Method::Mlq, q)));
            return out;
        }
    };
    let ml_cfg = FitConfig { method: Method::Ml, q: 1.0, ..spec.fit_config };
    let mut out = vec![ReplicateRecord::from_fit(replicate, Method::Ml, 1.0, fit(&data, &ml_cfg), truth)];
    for &q in &spec.q_grid {
        let cfg = FitConfig { method: Method::Mlq, q, ..spec.fit_config };
        out.push(ReplicateRecord::from_fit(replicate, Method::Mlq, q, fit(&data, &cfg), truth));
    }
    out
}

/// Runs every replicate on the current rayon pool and aggregates in
/// replicate order.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationReport> {
    spec.validate()?;
    let per_replicate: Vec<Vec<ReplicateRecord>> =
        (0..spec.n_replications).into_par_iter().map(|i| run_replicate(spec, i)).collect();
    let records: Vec<ReplicateRecord> = per_replicate.into_iter().flatten().collect();
    let p = spec.true_params.dim();

    let ml_records: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == Method::Ml).collect();
    let ml = summarize(&ml_records, Method::Ml, 1.0, p);
    let q_sweep: Vec<MethodSummary> = spec
        .q_grid
        .iter()
        .map(|&q| {
            let rs: Vec<&ReplicateRecord> =
                records.iter().filter(|r| r.method == Method::Mlq && r.q == q).collect();
            summarize(&rs, Method::Mlq, q, p)
        })
        .collect();
    // first minimum wins on ties; NaN scores (no usable fits) never win
    let best = q_sweep
        .iter()
        .filter(|s| s.mean_combined.is_finite())
        .fold(None::<&MethodSummary>, |best, s| match best {
            Some(b) if b.mean_combined <= s.mean_combined => Some(b),
            _ => Some(s),
        });
    let mlq = best.cloned();
    Ok(SimulationReport {
        true_mu: spec.true_params.mu.clone(),
        true_sigma: spec.true_params.sigma.matrix().to_rows(),
        true_nu: spec.true_params.nu,
        n: spec.n,
        n_outliers: spec.n_outliers,
        n_replications: spec.n_replications,
        seed: spec.seed,
        outlier_range: (spec.outlier_low, spec.outlier_high),
        selection_rule: SELECTION_RULE.to_string(),
        selected_q: mlq.as_ref().map(|s| s.q),
        ml,
        mlq,
        q_sweep,
        records,
    })
}

/// [`run_simulation`] on a dedicated pool of `jobs` threads.
pub fn run_simulation_with_jobs(spec: &SimulationSpec, jobs: usize) -> Result<SimulationReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| run_simulation(spec))
}

/// Densities of two fitted models on a rectangular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `(ys, xs)`: entry `iy * xs.len() + ix`.
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl DensityGrid {
    pub fn cell_area(&self) -> f64 {
        let dx = if self.xs.len() > 1 { self.xs[1] - self.xs[0] } else { 0.0 };
        let dy = if self.ys.len() > 1 { self.ys[1] - self.ys[0] } else { 0.0 };
        dx * dy
    }
}

/// Evaluates both densities on a `points × points` grid spanning the data's
/// bounding box padded by two marginal sample SDs on every side.
pub fn density_grid(
    data: &Dataset<f64>,
    first: &MvtParams<f64>,
    second: &MvtParams<f64>,
    points: usize,
) -> Result<DensityGrid> {
    if data.p() != 2 || first.dim() != 2 || second.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: data.p() });
    }
    if points < 2 {
        return Err(Error::InvalidConfig("grid needs at least two points per axis".into()));
    }
    let n = data.n() as f64;
    let mean = data.mean();
    let axis = |j: usize| -> Vec<f64> {
        let col = data.rows().map(|r| r[j]);
        let (lo, hi) = col.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let var = col.map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let pad = 2.0 * var.sqrt();
        let (lo, hi) = (lo - pad, hi + pad);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let mut a = Vec::with_capacity(points * points);
    let mut b = Vec::with_capacity(points * points);
    for &y in &ys {
        for &x in &xs {
            a.push(log_pdf(&[x, y], first)?.exp());
            b.push(log_pdf(&[x, y], second)?.exp());
        }
    }
    Ok(DensityGrid { xs, ys, first: a, second: b })
}

/// A single contaminated replicate fitted both ways.
#[derive(Debug, Clone)]
pub struct Showcase {
    pub data: Dataset<f64>,
    pub ml: FitResult<f64>,
    pub mlq: FitResult<f64>,
    /// `first` holds the ML density, `second` the Lq density.
    pub grid: DensityGrid,
}

/// Replicate 0 of `spec`, contaminated, fitted by ML and by Lq at `q`.
pub fn run_single_showcase(spec: &SimulationSpec, q: f64, grid_points: usize) -> Result<Showcase> {
    spec.validate()?;
    if spec.true_params.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: spec.true_params.dim() });
    }
    let data = contaminate(&generate_replicate(spec, 0)?, spec, 0)?;
    let ml = fit(&data, &FitConfig { method: Method::Ml, q: 1.0, ..spec.fit_config })?;
    let mlq = fit(&data, &FitConfig { method: Method::Mlq, q, ..spec.fit_config })?;
    let grid = density_grid(&data, &ml.params, &mlq.params, grid_points)?;
    Ok(Showcase { data, ml, mlq, grid })
}

/// `(Σ̂ − Σ)` Frobenius distance helper for callers holding raw matrices.
pub fn frobenius_distance(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SimulationSpec {
        SimulationSpec { n_replications: 4, q_grid: vec![0.85, 0.9], ..SimulationSpec::new(case_one(), 60) }
    }

    #[test]
    fn grid_parsing() {
        let g = q_grid(0.80, 0.98, 0.02).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.8);
        assert_eq!(*g.last().unwrap(), 0.98);
        assert!(q_grid(0.9, 0.8, 0.01).is_err());
        assert!(q_grid(0.8, 0.9, 0.0).is_err());
    }

    #[test]
    fn replicate_streams() {
        let spec = small_spec();
        let a = generate_replicate(&spec, 0).unwrap();
        let b = generate_replicate(&spec, 1).unwrap();
        assert_ne!(a.as_flat(), b.as_flat());
        assert_eq!(a.as_flat(), generate_replicate(&spec, 0).unwrap().as_flat());
    }

    #[test]
    fn contamination_geometry() {
        let spec = small_spec();
        let clean = generate_replicate(&spec, 2).unwrap();
        let dirty = contaminate(&clean, &spec, 2).unwrap();
        assert_eq!(dirty.n(), clean.n() + 5);
        assert_eq!(&dirty.as_flat()[..clean.as_flat().len()], clean.as_flat());
        for i in clean.n()..dirty.n() {
            let x = dirty.row(i);
            assert!((7.0..=12.0).contains(&x[0]) && (6.0..=11.0).contains(&x[1]), "{x:?}");
            assert!(spec.true_params.mahalanobis_sq(x).unwrap() > 25.0);
        }
        let none = SimulationSpec { n_outliers: 0, ..spec };
        assert_eq!(contaminate(&clean, &none, 2).unwrap(), clean);
    }

    #[test]
    fn distances() {
        let truth = case_one();
        let d = distance_metrics(&truth, &truth).unwrap();
        assert_eq!((d.d_mu, d.d_sigma, d.sq_err_nu), (0.0, 0.0, 0.0));
        let sigma = SpdMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let est = MvtParams::new(vec![5.0, 5.0], sigma, 5.0).unwrap();
        let d = distance_metrics(&est, &truth).unwrap();
        assert!((d.d_mu - 5.0).abs() < 1e-15);
        assert!((d.d_sigma - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(d.sq_err_nu, 4.0);
        let bad = MvtParams::standard(3, 3.0).unwrap();
        assert!(distance_metrics(&bad, &truth).is_err());
    }

    #[test]
    fn report_shape_and_determinism() {
        let spec = small_spec();
        let a = run_simulation_with_jobs(&spec, 1).unwrap();
        let b = run_simulation_with_jobs(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 4 * 3);
        assert_eq!(a.q_sweep.len(), 2);
        assert_eq!(a.ml.n_used + a.ml.n_failed + a.ml.n_nonconverged, 4);
        assert!(a.ml.mean_d_mu >= 0.0 && a.ml.mse_nu >= 0.0);
        let sel = a.selected_q.unwrap();
        let best = a.q_sweep.iter().map(|s| s.mean_combined).fold(f64::INFINITY, f64::min);
        assert_eq!(a.mlq.as_ref().unwrap().mean_combined, best);
        assert!(spec.q_grid.contains(&sel));
    }

    #[test]
    fn empty_grid_skips_lq() {
        let spec = SimulationSpec { q_grid: vec![], ..small_spec() };
        let r = run_simulation(&spec).unwrap();
        assert!(r.mlq.is_none() && r.selected_q.is_none());
    }

    #[test]
    fn invalid_spec() {
        let spec = SimulationSpec { n: 2, ..small_spec() };
        assert!(run_simulation(&spec).is_err());
        let spec = SimulationSpec { outlier_low: 3.0, outlier_high: 1.0, ..small_spec() };
        assert!(run_simulation(&spec).is_err());
    }

    #[test]
    fn showcase_grid() {
        let spec = SimulationSpec { true_params: MvtParams::new(vec![2.0, 1.0], SpdMatrix::identity(2), 2.0).unwrap(), ..SimulationSpec::new(case_one(), 200) };
        let sc = run_single_showcase(&spec, 0.85, 41).unwrap();
        assert_eq!(sc.data.n(), 205);
        assert_eq!(sc.grid.first.len(), 41 * 41);
        assert!(sc.grid.first.iter().chain(&sc.grid.second).all(|&v| v > 0.0));
    }
}
