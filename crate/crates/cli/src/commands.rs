use std::fs;

use anyhow::{bail, Context, Result};
use robust_t::estimators::STOPPING_NORM;
use robust_t::simulation::{
    case_one, case_two, density_grid, run_simulation, run_simulation_with_jobs, run_single_showcase, DensityGrid,
    MethodSummary, SimulationReport, SimulationSpec,
};
use robust_t::tdist::{sample_seeded, score_curve};
use robust_t::{fit, FitConfig64, FitResult64, Method, MvtParams64, ScatterCentering, SpdMatrix64};
use serde::Serialize;

use crate::io::{fmt17, parse_grid, parse_matrix, parse_range, parse_vector, read_dataset, write_csv, write_dataset, write_json};
use crate::{CenteringArg, Command, FitOpts, MethodArg, Status};

const DEFAULT_Q: f64 = 0.85;

#[derive(Serialize)]
struct FitJson<'a> {
    method: Method,
    q: f64,
    mu: &'a [f64],
    sigma: Vec<Vec<f64>>,
    nu: f64,
    iterations: usize,
    converged: bool,
    objective: f64,
    stopping_norm: &'static str,
}

impl<'a> From<&'a FitResult64> for FitJson<'a> {
    fn from(r: &'a FitResult64) -> Self {
        Self {
            method: r.method,
            q: r.q,
            mu: &r.params.mu,
            sigma: r.params.sigma.matrix().to_rows(),
            nu: r.params.nu,
            iterations: r.iterations,
            converged: r.converged,
            objective: r.objective,
            stopping_norm: STOPPING_NORM,
        }
    }
}

#[derive(Serialize)]
struct PairJson<'a> {
    ml: FitJson<'a>,
    mlq: FitJson<'a>,
}

fn status(fits: &[&FitResult64]) -> Status {
    if fits.iter().all(|f| f.converged) {
        Status::Ok
    } else {
        Status::NotConverged
    }
}

fn base_config(opts: &FitOpts) -> FitConfig64 {
    FitConfig64 {
        epsilon: opts.epsilon,
        max_iter: opts.max_iter,
        centering: match opts.centering {
            CenteringArg::Previous => ScatterCentering::Previous,
            CenteringArg::Updated => ScatterCentering::Updated,
        },
        ..FitConfig64::default()
    }
}

fn method_config(base: &FitConfig64, method: Method, q: f64) -> FitConfig64 {
    let q = if method == Method::Ml { 1.0 } else { q };
    FitConfig64 { method, q, ..*base }
}

fn require_bivariate(p: usize) -> Result<()> {
    if p != 2 {
        bail!("contours require bivariate data (found {p} columns)");
    }
    Ok(())
}

fn grid_rows(grid: &DensityGrid) -> Vec<Vec<String>> {
    let nx = grid.xs.len();
    let mut rows = Vec::with_capacity(grid.first.len());
    for (iy, &y) in grid.ys.iter().enumerate() {
        for (ix, &x) in grid.xs.iter().enumerate() {
            let k = iy * nx + ix;
            rows.push(vec![fmt17(x), fmt17(y), fmt17(grid.first[k]), fmt17(grid.second[k])]);
        }
    }
    rows
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub(crate) fn run(command: Command) -> Result<Status> {
    match command {
        Command::Fit { input, method, q, estimate_nu: _, nu, opts, output } => {
            let data = read_dataset(&input)?;
            let method = match method {
                MethodArg::Ml => Method::Ml,
                MethodArg::Mlq => Method::Mlq,
            };
            let mut config = method_config(&base_config(&opts), method, q.unwrap_or(DEFAULT_Q));
            if let Some(nu) = nu {
                config = config.with_fixed_nu(nu);
            }
            let result = fit(&data, &config)?;
            write_json(output.as_deref(), &FitJson::from(&result))?;
            Ok(status(&[&result]))
        }
        Command::Sample { n, mu, sigma, nu, seed, output } => {
            let mu = parse_vector(&mu).context("--mu")?;
            let sigma = SpdMatrix64::from_rows(&parse_matrix(&sigma).context("--sigma")?).context("--sigma")?;
            let params = MvtParams64::new(mu, sigma, nu)?;
            let data = sample_seeded(&params, n, seed)?;
            write_dataset(output.as_deref(), &data)?;
            Ok(Status::Ok)
        }
        Command::ScoreCurve { method, q, nu, p, s_min, s_max, points, output } => {
            let q = match (method, q) {
                (MethodArg::Ml, _) => None,
                (MethodArg::Mlq, Some(q)) => Some(q),
                (MethodArg::Mlq, None) => bail!("--q is required with --method mlq"),
            };
            if points < 2 {
                bail!("--points must be at least 2");
            }
            if !(s_min > 0.0 && s_max > s_min && s_max.is_finite()) {
                bail!("need 0 < s-min < s-max, got {s_min} and {s_max}");
            }
            let (lo, hi) = (s_min.ln(), s_max.ln());
            let grid: Vec<f64> = (0..points)
                .map(|k| if k + 1 == points { s_max } else { (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp() })
                .collect();
            let params = MvtParams64::standard(p, nu)?;
            let curve = score_curve(&params, q, &grid)?;
            write_csv(
                output.as_deref(),
                Some(&header(&["s", "value"])),
                curve.into_iter().map(|(s, v)| vec![fmt17(s), fmt17(v)]),
            )?;
            Ok(Status::Ok)
        }
        Command::DensityGrid { input, q, points, opts, output, fits_output } => {
            let data = read_dataset(&input)?;
            require_bivariate(data.p())?;
            let base = base_config(&opts);
            let ml = fit(&data, &method_config(&base, Method::Ml, 1.0))?;
            let mlq = fit(&data, &method_config(&base, Method::Mlq, q))?;
            let grid = density_grid(&data, &ml.params, &mlq.params, points)?;
            write_csv(output.as_deref(), Some(&header(&["x", "y", "ml_density", "mlq_density"])), grid_rows(&grid))?;
            if let Some(path) = fits_output {
                write_json(Some(&path), &PairJson { ml: (&ml).into(), mlq: (&mlq).into() })?;
            }
            Ok(status(&[&ml, &mlq]))
        }
        Command::Simulate {
            case,
            n,
            outliers,
            replications,
            full,
            seed,
            q_grid,
            outlier_range,
            opts,
            jobs,
            output,
            summary,
            raw,
        } => {
            let truth = if case == 1 { case_one() } else { case_two() };
            let (outlier_low, outlier_high) = parse_range(&outlier_range).context("--outlier-range")?;
            let spec = SimulationSpec {
                n_outliers: outliers,
                n_replications: if full { 500 } else { replications },
                q_grid: parse_grid(&q_grid).context("--q-grid")?,
                outlier_low,
                outlier_high,
                seed,
                fit_config: base_config(&opts),
                ..SimulationSpec::new(truth, n)
            };
            let report = match jobs {
                Some(j) => run_simulation_with_jobs(&spec, j)?,
                None => run_simulation(&spec)?,
            };
            write_csv(
                output.as_deref(),
                Some(&header(&["parameter", "true", "ml_mean", "ml_distance", "mlq_mean", "mlq_distance"])),
                table_rows(&report),
            )?;
            if let Some(path) = summary {
                write_json(Some(&path), &SummaryJson::from(&report))?;
            }
            if let Some(path) = raw {
                write_raw(&path, &report)?;
            }
            Ok(Status::Ok)
        }
        Command::Showcase { nu, n, outliers, outlier_range, seed, q, points, opts, output_dir } => {
            let (outlier_low, outlier_high) = parse_range(&outlier_range).context("--outlier-range")?;
            let truth = MvtParams64::new(vec![2.0, 1.0], SpdMatrix64::identity(2), nu)?;
            require_bivariate(truth.dim())?;
            let spec = SimulationSpec {
                n_outliers: outliers,
                outlier_low,
                outlier_high,
                seed,
                fit_config: base_config(&opts),
                ..SimulationSpec::new(truth, n)
            };
            let sc = run_single_showcase(&spec, q, points)?;
            fs::create_dir_all(&output_dir).with_context(|| format!("cannot create {}", output_dir.display()))?;
            write_dataset(Some(&output_dir.join("data.csv")), &sc.data)?;
            write_csv(
                Some(&output_dir.join("grid.csv")),
                Some(&header(&["x", "y", "ml_density", "mlq_density"])),
                grid_rows(&sc.grid),
            )?;
            write_json(Some(&output_dir.join("fits.json")), &PairJson { ml: (&sc.ml).into(), mlq: (&sc.mlq).into() })?;
            Ok(status(&[&sc.ml, &sc.mlq]))
        }
    }
}

/// Means and distances laid out one parameter per row; the distance column
/// repeats the block distance (μ, Σ) or holds the MSE (ν).
fn table_rows(report: &SimulationReport) -> Vec<Vec<String>> {
    let p = report.true_mu.len();
    let nan = f64::NAN;
    let blank = MethodSummary {
        mean_mu: vec![nan; p],
        mean_sigma: vec![vec![nan; p]; p],
        mean_nu: nan,
        mean_d_mu: nan,
        mean_d_sigma: nan,
        mse_nu: nan,
        mean_combined: nan,
        ..report.ml.clone()
    };
    let (ml, mlq) = (&report.ml, report.mlq.as_ref().unwrap_or(&blank));
    let mut rows = Vec::new();
    for j in 0..p {
        rows.push(vec![
            format!("mu_{}", j + 1),
            fmt17(report.true_mu[j]),
            fmt17(ml.mean_mu[j]),
            fmt17(ml.mean_d_mu),
            fmt17(mlq.mean_mu[j]),
            fmt17(mlq.mean_d_mu),
        ]);
    }
    for j in 0..p {
        for k in j..p {
            rows.push(vec![
                format!("sigma_{}{}", j + 1, k + 1),
                fmt17(report.true_sigma[j][k]),
                fmt17(ml.mean_sigma[j][k]),
                fmt17(ml.mean_d_sigma),
                fmt17(mlq.mean_sigma[j][k]),
                fmt17(mlq.mean_d_sigma),
            ]);
        }
    }
    rows.push(vec![
        "nu".into(),
        fmt17(report.true_nu),
        fmt17(ml.mean_nu),
        fmt17(ml.mse_nu),
        fmt17(mlq.mean_nu),
        fmt17(mlq.mse_nu),
    ]);
    rows
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    n: usize,
    n_outliers: usize,
    n_replications: usize,
    seed: u64,
    outlier_range: (f64, f64),
    selected_q: Option<f64>,
    selection_rule: &'a str,
    failures: usize,
    nonconverged: usize,
    ml: &'a MethodSummary,
    mlq: Option<&'a MethodSummary>,
    q_sweep: &'a [MethodSummary],
}

impl<'a> From<&'a SimulationReport> for SummaryJson<'a> {
    fn from(r: &'a SimulationReport) -> Self {
        Self {
            n: r.n,
            n_outliers: r.n_outliers,
            n_replications: r.n_replications,
            seed: r.seed,
            outlier_range: r.outlier_range,
            selected_q: r.selected_q,
            selection_rule: &r.selection_rule,
            failures: r.failure_count(),
            nonconverged: r.nonconverged_count(),
            ml: &r.ml,
            mlq: r.mlq.as_ref(),
            q_sweep: &r.q_sweep,
        }
    }
}

fn write_raw(path: &std::path::Path, report: &SimulationReport) -> Result<()> {
    let p = report.true_mu.len();
    let mut cols = header(&["replicate", "method", "q", "converged", "iterations"]);
    cols.extend((1..=p).map(|j| format!("mu_{j}")));
    for j in 1..=p {
        cols.extend((j..=p).map(|k| format!("sigma_{j}{k}")));
    }
    cols.extend(header(&["nu", "d_mu", "d_sigma", "sq_err_nu", "error"]));
    let rows = report.records.iter().map(|r| {
        let mut row = vec![
            r.replicate.to_string(),
            r.method.to_string(),
            fmt17(r.q),
            r.converged.to_string(),
            r.iterations.to_string(),
        ];
        let empty = r.mu.is_empty();
        row.extend((0..p).map(|j| if empty { String::new() } else { fmt17(r.mu[j]) }));
        for j in 0..p {
            row.extend((j..p).map(|k| if empty { String::new() } else { fmt17(r.sigma[j][k]) }));
        }
        let d = r.distances;
        row.push(if empty { String::new() } else { fmt17(r.nu) });
        row.push(d.map_or(String::new(), |d| fmt17(d.d_mu)));
        row.push(d.map_or(String::new(), |d| fmt17(d.d_sigma)));
        row.push(d.map_or(String::new(), |d| fmt17(d.sq_err_nu)));
        row.push(r.error.clone().unwrap_or_default());
        row
    });
    write_csv(Some(path), Some(&cols), rows)
}
