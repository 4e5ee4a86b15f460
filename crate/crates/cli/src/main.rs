use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mi_workbench::{Error, ErrorClass};

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(name = "miwb", version)]
#[command(about = "Multiple imputation and self-validation for weighted KPI panels")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, env = "MIWB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill missing cells with a single or multiple imputation method
    Impute(ImputeArgs),
    /// Write a synthetic benchmark: complete, amputed and truth CSVs
    Generate(GenerateArgs),
    /// Remove cells from a dataset with a learned or constant missingness model
    Ampute(AmputeArgs),
    /// Impute, score and self-validate on a synthetic twin
    Workflow(WorkflowArgs),
    /// Score an imputation against known truth values
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Input CSV; first column is the row id
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,

    /// Token marking a missing cell (empty fields are always missing)
    #[arg(long, default_value = "")]
    missing_token: String,

    /// JSON object mapping column names to kinds (continuous, semi_continuous, categorical_encoded)
    #[arg(long, value_name = "FILE")]
    kinds: Option<PathBuf>,

    /// Non-numeric column holding a row-group label
    #[arg(long)]
    group_column: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MiceArgs {
    /// MICE settings as JSON; explicit flags override it
    #[arg(long, value_name = "FILE")]
    mice_config: Option<PathBuf>,

    /// Number of imputations
    #[arg(long)]
    m: Option<usize>,

    /// Donor pool size for PMM and LRD draws
    #[arg(long)]
    donors: Option<usize>,

    /// Gibbs sweeps per chain
    #[arg(long)]
    iterations: Option<usize>,

    /// Trees per column forest
    #[arg(long)]
    trees: Option<usize>,

    /// Minimum leaf size of the forest trees
    #[arg(long)]
    min_leaf: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ImputeMethod {
    Mean,
    Median,
    Mode,
    Knn,
    MicePoint,
    MiceMi,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Draw {
    Pmm,
    Lrd,
}

#[derive(Args, Debug)]
struct ImputeArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, value_enum)]
    method: ImputeMethod,

    /// Output CSV; mice-mi writes OUT.001.csv ... plus OUT.pooled.csv
    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "pmm")]
    draw: Draw,

    /// Neighbours for knn
    #[arg(long, default_value_t = 5)]
    k: usize,

    /// Minimum co-observed columns for a knn distance
    #[arg(long, default_value_t = 1)]
    min_overlap: usize,

    /// Interval level of the pooled summary
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[command(flatten)]
    mice: MiceArgs,

    /// Required by mice-point and mice-mi
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Synthetic spec as JSON; without it a one-factor uniform benchmark is built
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,

    #[arg(long, default_value_t = 1000)]
    rows: usize,

    #[arg(long, default_value_t = 6)]
    cols: usize,

    /// Overall MAR missing rate of the built-in benchmark
    #[arg(long, default_value_t = 0.3)]
    rate: f64,

    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AmputeModeArg {
    Resample,
    Accumulate,
}

#[derive(Args, Debug)]
struct AmputeArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Dataset whose missingness pattern is learned and reproduced
    #[arg(long, value_name = "FILE", conflicts_with = "rate", required_unless_present = "rate")]
    reference: Option<PathBuf>,

    /// Constant per-cell missingness probability instead of a learned model
    #[arg(long)]
    rate: Option<f64>,

    #[arg(long, default_value_t = 10)]
    rounds: usize,

    #[arg(long, value_enum, default_value = "resample")]
    mode: AmputeModeArg,

    #[arg(long, value_name = "FILE")]
    out: PathBuf,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ScoringArgs {
    /// Scoring hierarchy as JSON
    #[arg(long, value_name = "FILE", conflicts_with = "descriptors")]
    scoring: Option<PathBuf>,

    /// Equal-weight round-robin hierarchy with this many descriptors
    /// (one per column when neither option is given)
    #[arg(long)]
    descriptors: Option<usize>,
}

#[derive(Args, Debug)]
struct WorkflowArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    scoring: ScoringArgs,

    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    /// Draw methods to run, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pmm,lrd")]
    draw: Vec<Draw>,

    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Share of twin rows held out for validation
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,

    /// Amputation rounds on the twin
    #[arg(long, default_value_t = 10)]
    rounds: usize,

    /// Bins of the observed-vs-imputed histograms
    #[arg(long, default_value_t = 20)]
    hist_bins: usize,

    /// Missing-rate bin width of the interval-width table
    #[arg(long, default_value_t = 0.1)]
    width_bin: f64,

    /// Also write every production completion
    #[arg(long)]
    write_imputations: bool,

    #[command(flatten)]
    mice: MiceArgs,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Truth file with header row,column,value
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,

    #[command(flatten)]
    scoring: ScoringArgs,

    /// Existing completions of the input; when absent MICE runs here
    #[arg(long, value_name = "FILE", num_args = 1..)]
    imputed: Vec<PathBuf>,

    #[arg(long, value_enum, value_delimiter = ',', default_value = "pmm")]
    draw: Vec<Draw>,

    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,

    #[command(flatten)]
    mice: MiceArgs,

    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Internal => 3,
    }
}

fn run(cli: Cli) -> mi_workbench::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Impute(a) => commands::impute(a),
        Command::Generate(a) => commands::generate(a),
        Command::Ampute(a) => commands::ampute(a),
        Command::Workflow(a) => commands::workflow(a),
        Command::Evaluate(a) => commands::evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(exit_code(ErrorClass::Config));
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("miwb: {e}");
            ExitCode::from(exit_code(e.class()))
        }
        Err(_) => {
            eprintln!("miwb: internal error");
            ExitCode::from(exit_code(ErrorClass::Internal))
        }
    }
}
