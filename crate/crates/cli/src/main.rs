mod args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use args::{Cli, Command, ExperimentArgs, FilterCommand, GmCommand, Gx2Command, Mode, NdsCommand, TestCommand};
use gmnds_core::gmfilter::{
    consistency_run, run_filter, run_on_trajectory, simulate_truth, ConsistencyConfig, LinearGmModel, TestMode,
    TestSchedule,
};
use gmnds_core::harness::{calibrate_filter, validate_static, validate_sum};
use gmnds_core::nds::{gm_nds_dist, sum_nds_dist};
use gmnds_core::{Error, GaussianMixture, GenChi2, GenChi2Mixture};

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_REJECT: u8 = 4;

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INVALID,
            CliError::Core(
                Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::DegenerateCovariance(_)
                | Error::TooManyComponents { .. }
                | Error::Json(_),
            ) => EXIT_INVALID,
            CliError::Core(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(s) => f.write_str(s),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// What a command produced and whether it signals a rejection.
struct Output {
    body: String,
    reject: bool,
}

impl Output {
    fn json<T: Serialize>(value: &T) -> CliResult<Self> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
        body.push('\n');
        Ok(Self { body, reject: false })
    }

    fn csv(body: String) -> Self {
        Self { body, reject: false }
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_gm(path: &Path) -> CliResult<GaussianMixture> {
    parse(path)
}

/// A mixture file, or a single law promoted to a one-component mixture.
fn load_law(path: &Path) -> CliResult<GenChi2Mixture> {
    let text = read(path)?;
    if let Ok(m) = serde_json::from_str::<GenChi2Mixture>(&text) {
        return Ok(m);
    }
    serde_json::from_str::<GenChi2>(&text)
        .map(GenChi2Mixture::single)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// A shipped fixture name or a model JSON file, relative to `base`.
fn load_model(spec: &str, base: Option<&Path>) -> CliResult<LinearGmModel> {
    match spec {
        "localization" => Ok(LinearGmModel::localization()),
        "localization-mismatched" => Ok(LinearGmModel::localization_mismatched()),
        _ => {
            let path = match base {
                Some(dir) => dir.join(spec),
                None => PathBuf::from(spec),
            };
            Ok(LinearGmModel::from_json(&read(&path)?)?)
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_string(header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(&header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
}

fn columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

#[derive(Serialize)]
struct Moments {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

fn gm_command(cmd: GmCommand, seed: u64) -> CliResult<Output> {
    match cmd {
        GmCommand::Moments { gm } => {
            let (mean, cov) = load_gm(&gm)?.moments()?;
            let cov = cov.row_iter().map(|r| r.iter().copied().collect()).collect();
            Output::json(&Moments { mean: mean.iter().copied().collect(), cov })
        }
        GmCommand::Sample { gm, count } => {
            let gm = load_gm(&gm)?;
            let header = std::iter::once("component".to_string()).chain(columns("x", gm.dim())).collect();
            let rows = gm
                .sample_labeled(count, seed)
                .into_iter()
                .map(|(g, x)| std::iter::once(g.to_string()).chain(x.iter().map(|v| num(*v))).collect());
            Ok(Output::csv(csv_string(header, rows)?))
        }
        GmCommand::Condense { gm, target } => Output::json(&load_gm(&gm)?.condense(target)?),
    }
}

fn nds_command(cmd: NdsCommand) -> CliResult<Output> {
    match cmd {
        NdsCommand::Params { gm } => Output::json(&gm_nds_dist(&load_gm(&gm)?)?),
        NdsCommand::SumParams { gms, top_g } => {
            let gms = gms.iter().map(|p| load_gm(p)).collect::<CliResult<Vec<_>>>()?;
            Output::json(&sum_nds_dist(&gms, top_g)?)
        }
    }
}

fn gx2_command(cmd: Gx2Command, seed: u64) -> CliResult<Output> {
    match cmd {
        Gx2Command::Cdf { law, xs, tol } => {
            let law = load_law(&law)?;
            let eval = law.evaluator(tol)?;
            let rows = xs.iter().map(|&x| Ok(vec![num(x), num(eval.cdf(x)?)])).collect::<CliResult<Vec<_>>>()?;
            Ok(Output::csv(csv_string(vec!["x".into(), "cdf".into()], rows)?))
        }
        Gx2Command::Quantile { law, ps, tol } => {
            let law = load_law(&law)?;
            let rows =
                ps.iter().map(|&p| Ok(vec![num(p), num(law.quantile(p, tol)?)])).collect::<CliResult<Vec<_>>>()?;
            Ok(Output::csv(csv_string(vec!["p".into(), "quantile".into()], rows)?))
        }
        Gx2Command::Sample { law, count } => {
            let rows = load_law(&law)?.sample(count, seed).into_iter().map(|q| vec![num(q)]);
            Ok(Output::csv(csv_string(vec!["q".into()], rows)?))
        }
    }
}

/// Experiment JSON accepted by `--config`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    model: String,
    #[serde(default)]
    truth: Option<String>,
    consistency: ConsistencyConfig,
    #[serde(default)]
    runs: Option<usize>,
}

struct Experiment {
    truth: LinearGmModel,
    filter: LinearGmModel,
    config: ConsistencyConfig,
    runs: Option<usize>,
}

fn experiment(a: ExperimentArgs) -> CliResult<Experiment> {
    if let Some(path) = &a.config {
        let file: ExperimentFile = parse(path)?;
        let base = path.parent();
        let filter = load_model(&file.model, base)?;
        let truth = match &file.truth {
            Some(t) => load_model(t, base)?,
            None => filter.clone(),
        };
        return Ok(Experiment { truth, filter, config: file.consistency, runs: file.runs });
    }
    let filter = load_model(&a.model, None)?;
    let truth = match &a.truth {
        Some(t) => load_model(t, None)?,
        None => filter.clone(),
    };
    let schedule = match a.auto_threshold {
        Some(threshold) => TestSchedule::Auto { threshold, max_lag: a.max_lag, start: a.start, count: a.count },
        None => TestSchedule::Fixed { start: a.start, spacing: a.spacing, count: a.count },
    };
    let mode = match a.mode {
        Mode::State => TestMode::State,
        Mode::Measurement => TestMode::Measurement,
    };
    let config = ConsistencyConfig { steps: a.steps, alpha: a.alpha, schedule, top_g: a.top_g, mode };
    Ok(Experiment { truth, filter, config, runs: None })
}

fn test_command(cmd: TestCommand, seed: u64) -> CliResult<Output> {
    match cmd {
        TestCommand::Static { gm, samples, histogram, cdf } => {
            let v = validate_static(&load_gm(&gm)?, samples, seed)?;
            if let Some(p) = histogram {
                write(&p, &v.histogram.to_csv())?;
            }
            if let Some(p) = cdf {
                write(&p, &v.exact.to_csv())?;
            }
            Output::json(&v)
        }
        TestCommand::Sum { gms, samples, alpha, top_g } => {
            let gms = gms.iter().map(|p| load_gm(p)).collect::<CliResult<Vec<_>>>()?;
            Output::json(&validate_sum(&gms, samples, alpha, top_g, seed)?)
        }
        TestCommand::Run(a) => {
            let e = experiment(a)?;
            let outcome = consistency_run(&e.truth, &e.filter, &e.config, seed)?;
            let mut out = Output::json(&outcome)?;
            out.reject = outcome.result.reject;
            Ok(out)
        }
    }
}

fn read_measurements(path: &Path, dim: usize) -> CliResult<Vec<DVector<f64>>> {
    let text = read(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != dim {
            return Err(bad(format!("expected {dim} columns, found {}", rec.len())));
        }
        let v = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}"))))
            .collect::<CliResult<Vec<_>>>()?;
        out.push(DVector::from_vec(v));
    }
    Ok(out)
}

fn filter_command(cmd: FilterCommand, seed: u64) -> CliResult<Output> {
    match cmd {
        FilterCommand::Simulate { model, steps } => {
            let model = load_model(&model, None)?;
            let traj = simulate_truth(&model, steps, seed);
            let (n, p) = (model.state_dim(), model.meas_dim());
            let header = std::iter::once("step".to_string()).chain(columns("x", n)).chain(columns("y", p)).collect();
            let rows = traj.states.iter().enumerate().map(|(k, x)| {
                let mut row = vec![k.to_string()];
                row.extend(x.iter().map(|v| num(*v)));
                match k {
                    0 => row.extend(std::iter::repeat_n(String::new(), p)),
                    _ => row.extend(traj.measurement(k).iter().map(|v| num(*v))),
                }
                row
            });
            Ok(Output::csv(csv_string(header, rows)?))
        }
        FilterCommand::Run { model, truth, steps, measurements } => {
            let filter = load_model(&model, None)?;
            let trace = match measurements {
                Some(path) => run_filter(&filter, &read_measurements(&path, filter.meas_dim())?)?,
                None => {
                    let truth = match truth {
                        Some(t) => load_model(&t, None)?,
                        None => filter.clone(),
                    };
                    run_on_trajectory(&filter, &simulate_truth(&truth, steps, seed))?
                }
            };
            Ok(Output::csv(trace.to_csv()))
        }
        FilterCommand::Calibrate { experiment: a, runs } => {
            let e = experiment(a)?;
            let runs = e.runs.unwrap_or(runs);
            Output::json(&calibrate_filter(&e.truth, &e.filter, &e.config, runs, seed)?)
        }
    }
}

fn run(cli: Cli) -> CliResult<Output> {
    let seed = cli.seed;
    match cli.command {
        Command::Gm(c) => gm_command(c, seed),
        Command::Nds(c) => nds_command(c),
        Command::Gx2(c) => gx2_command(c, seed),
        Command::Test(c) => test_command(c, seed),
        Command::Filter(c) => filter_command(c, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_path = cli.out.clone();
    let output = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let written = match &out_path {
        Some(p) => write(p, &output.body),
        None => std::io::stdout().write_all(output.body.as_bytes()).map_err(|e| CliError::Input(e.to_string())),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    if output.reject {
        ExitCode::from(EXIT_REJECT)
    } else {
        ExitCode::SUCCESS
    }
}
