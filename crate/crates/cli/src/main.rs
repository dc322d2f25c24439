use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use ridgekr::baselines::ModelKind;
use ridgekr::io::{self, MatrixFormat};
use ridgekr::logistic::ClgOptions;
use ridgekr::sim::{classification_error, pse, run_comparison};
use ridgekr::workflow::{self, FitArtifact, FitRequest, KChoice};
use ridgekr::Error;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad flags or option combinations)
  3  unreadable or malformed input file
  4  dimension mismatch between inputs
  5  numerical or model failure (separation, no signal, rank problems, ...)
  6  invalid experiment config";

#[derive(Parser)]
#[command(name = "ridgekr", version, about = "Ridge regression with a semi-automatic choice of the ridge parameter", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear or logistic ridge model and write a JSON fit file.
    Fit(FitArgs),
    /// Predict from a fit file, optionally scoring against known responses.
    Predict(PredictArgs),
    /// Write the ridge trace over the scanned numbers of components.
    Trace(TraceArgs),
    /// Generate one dataset from an experiment config.
    Simulate(SimulateArgs),
    /// Compare methods over the replicates described by an experiment config.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Doff,
    Press,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Ws,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => MatrixFormat::Csv,
            FormatArg::Ws => MatrixFormat::Whitespace,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Continuous response (default: inferred, binary 0/1 responses are logistic).
    #[arg(long, conflicts_with = "logistic")]
    linear: bool,
    /// Binary 0/1 response.
    #[arg(long)]
    logistic: bool,
    /// Rule for the number of components r behind k_r.
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
    /// Number of components for k_r (implies --rule fixed).
    #[arg(long = "r", value_name = "N")]
    r: Option<usize>,
    /// Use this ridge parameter instead of estimating one.
    #[arg(long, value_name = "X", conflicts_with_all = ["rule", "r"])]
    k: Option<f64>,
    /// Folds for the press rule.
    #[arg(long, value_name = "N", default_value_t = 10)]
    folds: usize,
    /// Convergence threshold of the logistic solver.
    #[arg(long, value_name = "X", default_value_t = ClgOptions::default().epsilon)]
    epsilon: f64,
    /// Sweep limit of the logistic solver.
    #[arg(long, value_name = "N", default_value_t = ClgOptions::default().max_sweeps)]
    max_sweeps: usize,
    /// Seed for the fold assignment of the press rule.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Estimate k from every N-th predictor; the final fit uses all of them.
    #[arg(long, value_name = "N", default_value_t = 1)]
    stride: usize,
    /// Format of the input matrix and response files.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Predictor matrix, one row per observation.
    x: PathBuf,
    /// Response, one value per line.
    y: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output file.
    #[arg(short, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Record coefficients of the first N predictors.
    #[arg(long, value_name = "N", default_value_t = 100)]
    columns: usize,
    /// Output file.
    #[arg(short, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Fit file written by `fit`.
    fit: PathBuf,
    /// Predictor matrix with the columns used in the fit.
    x: PathBuf,
    /// Known responses; with --metrics, the PSE or classification error.
    #[arg(long, value_name = "PATH", requires = "metrics")]
    truth: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "truth")]
    metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file.
    #[arg(short, value_name = "PATH")]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Replace the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output directory.
    #[arg(short, value_name = "DIR")]
    output: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    config: PathBuf,
    /// Replace the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output file.
    #[arg(short, value_name = "PATH")]
    output: PathBuf,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::Json(_)
        | Error::Parse { .. }
        | Error::RaggedRows { .. }
        | Error::EmptyFile
        | Error::NonBinaryLabels { .. } => 3,
        Error::DimensionMismatch { .. } => 4,
        Error::Config { .. } => 6,
        Error::InvalidInput(_) => 2,
        _ => 5,
    }
}

fn request(m: &ModelArgs, y: &Array1<f64>) -> Result<FitRequest, Failure> {
    let model = if m.logistic {
        ModelKind::Logistic
    } else if m.linear || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        ModelKind::Linear
    } else {
        ModelKind::Logistic
    };
    let k = match (m.k, m.rule, m.r) {
        (Some(k), _, _) => KChoice::Given(k),
        (None, Some(RuleArg::Fixed) | None, Some(r)) => KChoice::FixedR(r),
        (None, Some(RuleArg::Fixed), None) => {
            return Err(Failure::Usage("--rule fixed needs --r".into()))
        }
        (None, Some(_), Some(_)) => {
            return Err(Failure::Usage("--r goes with --rule fixed only".into()))
        }
        (None, Some(RuleArg::Press), None) => KChoice::Press {
            folds: m.folds,
            seed: m.seed,
        },
        (None, Some(RuleArg::Doff) | None, None) => KChoice::DofF,
    };
    let mut request = FitRequest::new(model, k);
    request.clg = ClgOptions {
        epsilon: m.epsilon,
        max_sweeps: m.max_sweeps,
    };
    request.stride = m.stride;
    Ok(request)
}

fn load_inputs(m: &ModelArgs) -> Result<(Array2<f64>, Array1<f64>), Failure> {
    let x = io::load_matrix(&m.x, m.format.into())?;
    let y = io::load_vector(&m.y, m.format.into())?;
    Ok((x, y))
}

fn create(path: &Path) -> Result<File, Failure> {
    Ok(File::create(path)?)
}

fn fit(args: FitArgs) -> Result<(), Failure> {
    let (x, y) = load_inputs(&args.model)?;
    let request = request(&args.model, &y)?;
    let artifact = workflow::fit(x.view(), y.view(), &request)?;
    if let Some(clg) = &artifact.clg {
        if !clg.converged {
            eprintln!("ridgekr: warning: logistic fit stopped after {} sweeps without converging", clg.iterations);
        }
    }
    create(&args.output)?.write_all(artifact.to_json()?.as_bytes())?;
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), Failure> {
    let (x, y) = load_inputs(&args.model)?;
    let request = request(&args.model, &y)?;
    let table = workflow::trace(x.view(), y.view(), &request, args.columns)?;
    workflow::write_trace(create(&args.output)?, &table)?;
    Ok(())
}

fn predict(args: PredictArgs) -> Result<(), Failure> {
    let artifact = FitArtifact::from_json(&std::fs::read_to_string(&args.fit)?)?;
    let x = io::load_matrix(&args.x, args.format.into())?;
    let prediction = artifact.predict(x.view())?;
    let mut out = std::io::BufWriter::new(create(&args.output)?);
    match artifact.model {
        ModelKind::Linear => {
            writeln!(out, "prediction")?;
            for v in &prediction {
                writeln!(out, "{v}")?;
            }
        }
        ModelKind::Logistic => {
            writeln!(out, "probability,class")?;
            for &v in &prediction {
                writeln!(out, "{v},{}", u8::from(v > 0.5))?;
            }
        }
    }
    out.flush()?;
    if let (Some(truth), Some(metrics)) = (&args.truth, &args.metrics) {
        let y = io::load_vector(truth, args.format.into())?;
        let (name, value) = match artifact.model {
            ModelKind::Linear => ("pse", pse(y.view(), prediction.view())?),
            ModelKind::Logistic => ("ce", classification_error(y.view(), prediction.view())?),
        };
        writeln!(create(metrics)?, "metric,value\n{name},{value}")?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let config = io::load_config(&args.config)?;
    let seed = args.seed.unwrap_or(config.data.seed());
    let data = config.data.generate_with_seed(seed)?;
    io::save_dataset(&args.output, &data, args.format.into())?;
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Failure> {
    let mut config = io::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.data = config.data.with_seed(seed);
    }
    let reports = run_comparison(&config.data, &config.methods, config.replicates)?;
    for r in &reports {
        for (rep, message) in &r.failures {
            eprintln!("ridgekr: {} failed on replicate {}: {message}", r.method, rep + 1);
        }
    }
    io::write_metric_reports(create(&args.output)?, &reports)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Trace(a) => trace(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("ridgekr: error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("ridgekr: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
