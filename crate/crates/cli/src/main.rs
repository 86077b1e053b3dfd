//! `fscreen`: selective inference for regression coefficients reported only
//! after the overall F test rejects.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use report::Format;

#[derive(Debug, Parser)]
#[command(name = "fscreen", version, about = "Inference on regression coefficients after a significant overall F test")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Screen a raw dataset (first column response, remaining columns covariates), then test coefficients.
    Screen(ScreenArgs),
    /// Selective p-value from published regression summaries.
    Retro(RetroArgs),
    /// Pairwise selective p-values from a `group,n,mean,sd` CSV.
    AnovaRetro(AnovaArgs),
    /// Run a simulation experiment and write its result table as CSV.
    Simulate(SimulateArgs),
    /// Selective versus sample-splitting Fisher information on an orthonormal design.
    FisherInfo(FisherArgs),
}

#[derive(Debug, Clone, Args)]
struct McArgs {
    /// Overall F test level.
    #[arg(long, default_value_t = 0.05)]
    alpha0: f64,
    /// `known:<sigma2>`, `plugin` or `debiased`.
    #[arg(long, default_value = "debiased", value_parser = commands::parse_variance)]
    variance: fscreen::VarianceSpec,
    /// Random seed; drawn at random and echoed in the output when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = fscreen::selective::DEFAULT_DRAWS)]
    draws: u64,
    /// Fewest accepted draws that count as a usable estimate.
    #[arg(long, default_value_t = fscreen::selective::DEFAULT_MIN_ACCEPT)]
    min_accept: u64,
    /// Report inference even when the overall test does not reject.
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    /// Input CSV, or `-` for stdin.
    csv: PathBuf,
    /// Confidence level is `1 - alpha`.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// One-based covariate index to test; repeatable. Defaults to every covariate.
    #[arg(long = "coef")]
    coefs: Vec<usize>,
    /// Comma-separated one-based covariates tested jointly.
    #[arg(long, value_delimiter = ',')]
    m_cols: Vec<usize>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Debug, Args)]
struct RetroArgs {
    /// Partial F statistic for the tested block.
    #[arg(long)]
    f_m: f64,
    #[arg(long)]
    r2: f64,
    /// Residual standard error.
    #[arg(long)]
    rse: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Size of the tested block.
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Debug, Args)]
struct AnovaArgs {
    /// CSV with columns group,n,mean,sd, or `-` for stdin.
    csv: PathBuf,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment name; must agree with the config's `experiment` field when both are given.
    #[arg(long)]
    experiment: Option<String>,
    /// JSON config whose fields are those of the simulation config.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write QQ data (sorted values and plotting positions) for this column.
    #[arg(long, requires = "qq_out")]
    qq_column: Option<String>,
    #[arg(long, requires = "qq_column")]
    qq_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FisherArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha0: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5])]
    beta1: Vec<f64>,
    /// Common value of the remaining coefficients.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true,
          default_values_t = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0])]
    s: Vec<f64>,
    /// Training fractions for sample splitting.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5, 0.9])]
    rho: Vec<f64>,
    /// Monte Carlo draws per configuration.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fscreen::Error),
    #[error(transparent)]
    Sim(#[from] fscreen_simlab::SimError),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Sim(e) => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Io { .. } => "Io",
            CliError::Json(_) => "Json",
        }
    }
}

/// A successful run, possibly one that stopped at the screen.
pub enum Outcome {
    Done,
    NotRejected { f: f64, p: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Screen(a) => commands::screen(a),
        Command::Retro(a) => commands::retro(a),
        Command::AnovaRetro(a) => commands::anova_retro(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::FisherInfo(a) => commands::fisher_info(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotRejected { f, p }) => {
            eprintln!("ERROR:ScreeningNotRejected:overall F test not rejected (F = {f}, p = {p}); pass --force to report anyway");
            ExitCode::from(2)
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("ERROR:{}:{msg}", e.kind());
            ExitCode::from(if e.kind() == "ScreeningNotRejected" { 2 } else { 1 })
        }
    }
}
