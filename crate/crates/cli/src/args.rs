use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "gmnds", version, about = "NDS distributions and consistency tests for Gaussian mixtures")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gaussian mixture utilities.
    #[command(subcommand)]
    Gm(GmCommand),
    /// NDS distribution parameters.
    #[command(subcommand)]
    Nds(NdsCommand),
    /// Generalized chi-square mixtures.
    #[command(subcommand)]
    Gx2(Gx2Command),
    /// Validation experiments and the consistency test.
    #[command(subcommand)]
    Test(TestCommand),
    /// Gaussian-mixture filter runs.
    #[command(subcommand)]
    Filter(FilterCommand),
}

#[derive(Subcommand, Debug)]
pub enum GmCommand {
    /// Overall mean and covariance as JSON.
    Moments {
        #[arg(long)]
        gm: PathBuf,
    },
    /// Draws as CSV.
    Sample {
        #[arg(long)]
        gm: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Moment-preserving reduction to at most `target` components.
    Condense {
        #[arg(long)]
        gm: PathBuf,
        #[arg(long)]
        target: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum NdsCommand {
    /// Generalized chi-square mixture of a mixture's NDS statistic.
    Params {
        #[arg(long)]
        gm: PathBuf,
    },
    /// Law of the summed NDS statistic of independent mixtures.
    SumParams {
        /// Repeat once per mixture.
        #[arg(long = "gm", required = true)]
        gms: Vec<PathBuf>,
        /// Keep only the heaviest components of the product mixture.
        #[arg(long)]
        top_g: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum Gx2Command {
    /// CDF at each point as CSV.
    Cdf {
        #[arg(long)]
        law: PathBuf,
        #[arg(long = "x", required = true, allow_negative_numbers = true, value_delimiter = ',')]
        xs: Vec<f64>,
        #[arg(long, default_value_t = gmnds_core::hypotest::P_VALUE_TOL)]
        tol: f64,
    },
    /// Quantile at each probability as CSV.
    Quantile {
        #[arg(long)]
        law: PathBuf,
        #[arg(long = "p", required = true, value_delimiter = ',')]
        ps: Vec<f64>,
        #[arg(long, default_value_t = gmnds_core::genchi2::QUANTILE_TOL)]
        tol: f64,
    },
    /// Draws as CSV.
    Sample {
        #[arg(long)]
        law: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
}

#[derive(Subcommand, Debug)]
pub enum TestCommand {
    /// Sampled NDS statistics of one mixture against the exact and naive laws.
    Static {
        #[arg(long)]
        gm: PathBuf,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// Also write the histogram CSV here.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Also write the exact CDF comparison CSV here.
        #[arg(long)]
        cdf: Option<PathBuf>,
    },
    /// Exceedance rate of the summed NDS statistic over its threshold.
    Sum {
        #[arg(long = "gm", required = true)]
        gms: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        top_g: Option<usize>,
    },
    /// One filter consistency test; exits with status 4 on rejection.
    Run(ExperimentArgs),
}

#[derive(Subcommand, Debug)]
pub enum FilterCommand {
    /// Ground-truth trajectory as CSV.
    Simulate {
        #[arg(long, default_value = "localization")]
        model: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Filter trace as CSV, on a simulated trajectory or recorded measurements.
    Run {
        /// Filter model: a JSON file or a shipped fixture name.
        #[arg(long, default_value = "localization")]
        model: String,
        /// Model that generates the truth; defaults to the filter model.
        #[arg(long)]
        truth: Option<String>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Filter these measurements (CSV with columns y0, y1, ...) instead of simulating.
        #[arg(long, conflicts_with = "truth")]
        measurements: Option<PathBuf>,
    },
    /// Rejection rate of repeated consistency tests.
    Calibrate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long, default_value_t = 200)]
        runs: usize,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    State,
    Measurement,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment JSON naming models and test parameters; overrides the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Filter model: a JSON file or a shipped fixture name.
    #[arg(long, default_value = "localization")]
    pub model: String,
    /// Model that generates the truth; defaults to the filter model.
    #[arg(long)]
    pub truth: Option<String>,
    #[arg(long, default_value_t = 75)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub start: usize,
    #[arg(long, default_value_t = 5)]
    pub spacing: usize,
    #[arg(long, default_value_t = 15)]
    pub count: usize,
    /// Choose the spacing from the error autocorrelation at this threshold.
    #[arg(long)]
    pub auto_threshold: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub max_lag: usize,
    #[arg(long)]
    pub top_g: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::State)]
    pub mode: Mode,
}
