//! `robust-t`: fit, sample and simulate multivariate t models from the shell.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "robust-t", version, about = "Likelihood and Lq-likelihood fitting of multivariate t distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Ml,
    Mlq,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CenteringArg {
    /// Centre the scatter update at the previous location estimate.
    Previous,
    /// Centre it at the freshly updated location.
    Updated,
}

/// Iteration controls shared by every command that fits.
#[derive(Args, Debug, Clone)]
struct FitOpts {
    /// Stopping tolerance on the parameter change.
    #[arg(long, default_value = "1e-6")]
    epsilon: f64,
    #[arg(long, default_value = "1000")]
    max_iter: usize,
    /// Location used when centring the Lq scatter update.
    #[arg(long, value_enum, default_value = "previous")]
    centering: CenteringArg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a CSV of observations and print the estimates as JSON.
    Fit {
        /// Comma-separated observations, one per row.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "ml")]
        method: MethodArg,
        /// Lq exponent; defaults to 0.85 for mlq.
        #[arg(long)]
        q: Option<f64>,
        /// Estimate ν (the default).
        #[arg(long, conflicts_with = "nu")]
        estimate_nu: bool,
        /// Hold ν fixed at this value.
        #[arg(long)]
        nu: Option<f64>,
        #[command(flatten)]
        opts: FitOpts,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw a seeded sample.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "2,1", allow_hyphen_values = true)]
        mu: String,
        /// Rows separated by ';', entries by ','.
        #[arg(long, default_value = "1,0;0,1", allow_hyphen_values = true)]
        sigma: String,
        #[arg(long, default_value = "3")]
        nu: f64,
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the ν score against the squared Mahalanobis distance.
    ScoreCurve {
        #[arg(long, value_enum, default_value = "ml")]
        method: MethodArg,
        /// Required with --method mlq.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value = "3")]
        nu: f64,
        #[arg(long, default_value = "2")]
        p: usize,
        #[arg(long, default_value = "1e-2")]
        s_min: f64,
        #[arg(long, default_value = "1e8")]
        s_max: f64,
        #[arg(long, default_value = "200")]
        points: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit bivariate data both ways and tabulate both densities on a grid.
    DensityGrid {
        input: PathBuf,
        #[arg(long, default_value = "0.85")]
        q: f64,
        /// Grid points per axis.
        #[arg(long, default_value = "101")]
        points: usize,
        #[command(flatten)]
        opts: FitOpts,
        /// Grid CSV destination (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write both fits as JSON.
        #[arg(long)]
        fits_output: Option<PathBuf>,
    },
    /// Replicated contamination study; prints the summary table as CSV.
    Simulate {
        #[arg(long, default_value = "1", value_parser = clap::value_parser!(u8).range(1..=2))]
        case: u8,
        #[arg(long, default_value = "200")]
        n: usize,
        #[arg(long, default_value = "5")]
        outliers: usize,
        #[arg(long, default_value = "100", conflicts_with = "full")]
        replications: usize,
        /// Full-scale run with 500 replications.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(long, default_value = "0.80:0.98:0.02")]
        q_grid: String,
        /// Outlier offsets in marginal standard deviations.
        #[arg(long, default_value = "5:10", allow_hyphen_values = true)]
        outlier_range: String,
        #[command(flatten)]
        opts: FitOpts,
        /// Worker threads; results do not depend on this.
        #[arg(long, env = "ROBUST_T_JOBS")]
        jobs: Option<usize>,
        /// Summary table CSV (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Selected q, failure counts and the full q sweep as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// One row per replicate and fit.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// One contaminated sample fitted both ways, with data, grid and fits.
    Showcase {
        #[arg(long, default_value = "2")]
        nu: f64,
        #[arg(long, default_value = "200")]
        n: usize,
        #[arg(long, default_value = "5")]
        outliers: usize,
        #[arg(long, default_value = "5:10", allow_hyphen_values = true)]
        outlier_range: String,
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(long, default_value = "0.85")]
        q: f64,
        #[arg(long, default_value = "101")]
        points: usize,
        #[command(flatten)]
        opts: FitOpts,
        /// Receives data.csv, grid.csv and fits.json.
        #[arg(long)]
        output_dir: PathBuf,
    },
}

/// Successful runs that still report a problem through the exit status.
enum Status {
    Ok,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: iteration limit reached before convergence");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
