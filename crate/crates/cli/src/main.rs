mod commands;
mod error;
mod io;
mod model_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "lcda", version, about = "Latent covariance discriminant analysis")]
struct Cli {
    /// Worker threads for parallel fits and evaluations.
    #[arg(long, global = true, env = "LCDA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier to a labeled CSV and write a model file.
    Fit(FitArgs),
    /// Score query rows with a fitted model.
    Predict(PredictArgs),
    /// Cross-validated or held-out accuracy of one or more classifiers.
    Evaluate(EvaluateArgs),
    /// Run a simulation experiment and write one row per trial.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Auto,
    Normal,
    Wishart,
    SingularWishart,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DfModeArg {
    N,
    #[value(name = "n-minus-1")]
    NMinus1,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lcda,
    Lda,
    Qda,
}

#[derive(Args, Clone)]
pub struct EmArgs {
    #[arg(long, value_enum, default_value = "auto")]
    pub variant: VariantArg,
    /// Degrees of freedom per class (default: n for normal, n-minus-1 for Wishart).
    #[arg(long, value_enum)]
    pub df_mode: Option<DfModeArg>,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Added to covariance diagonals after each M-step.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct FitArgs {
    /// Labeled CSV: `class_id` first, then numeric features.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "lcda")]
    pub method: MethodArg,
    /// Number of latent covariances.
    #[arg(long, conflicts_with = "select_k")]
    pub k: Option<usize>,
    /// Choose k by BIC over an inclusive range such as `1..8`.
    #[arg(long)]
    pub select_k: Option<String>,
    /// Predict with bias-adjusted covariances.
    #[arg(long)]
    pub use_adjusted: bool,
    /// Average rows sharing a class and a value of this column first.
    #[arg(long)]
    pub group_mean: Option<String>,
    #[command(flatten)]
    pub em: EmArgs,
    /// Model file to write.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query CSV with `p` feature columns and an optional leading id column.
    #[arg(long)]
    pub queries: PathBuf,
    /// Number of top log scores to report per query.
    #[arg(long, default_value_t = 1)]
    pub top: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Protocol {
    Loocv,
    Heldout,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RefitArg {
    PerFold,
    None,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "loocv")]
    pub protocol: Protocol,
    /// Comma-separated classifiers.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "lcda,lda,qda")]
    pub methods: Vec<MethodArg>,
    #[arg(long, conflicts_with = "select_k")]
    pub k: Option<usize>,
    #[arg(long)]
    pub select_k: Option<String>,
    #[arg(long)]
    pub use_adjusted: bool,
    #[arg(long, value_enum, default_value = "per-fold")]
    pub refit: RefitArg,
    /// Held-out observations per class.
    #[arg(long, default_value_t = 1)]
    pub g: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long)]
    pub group_mean: Option<String>,
    #[command(flatten)]
    pub em: EmArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ExperimentArg {
    Ari,
    Bic,
    Accuracy,
    Bias,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub experiment: Option<ExperimentArg>,
    /// TOML file with `experiment` and one or more `[[design]]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// half_p, uniform_half_p_to_2p or twice_p.
    #[arg(long, conflicts_with = "ni")]
    pub ni_mode: Option<String>,
    /// Fixed number of observations per class.
    #[arg(long)]
    pub ni: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hypercube_side: Option<f64>,
    /// Eigenvalue range as `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub eig_range: Option<Vec<f64>>,
    /// Largest k tried by the BIC experiment.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads.filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lcda: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
