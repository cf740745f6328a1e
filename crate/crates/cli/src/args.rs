use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ncoadj", version, about = "Covariate and NCO adjusted treatment effect estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point estimates, intervals and Wald tests for the requested adjustments.
    Estimate(EstimateArgs),
    /// Randomization test of the sharp null on an outcome column.
    Test(TestArgs),
    /// Pretest each NCO and recommend whether to adjust for it.
    Pretest(PretestArgs),
    /// Bias-corrected NCO-adjusted estimates over a grid of NCO effects.
    Sensitivity(SensitivityArgs),
    /// Run a Monte Carlo scenario grid from a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "A")]
    pub treatment: String,
    #[arg(long, default_value = "Y")]
    pub outcome: String,
    /// Baseline covariate columns (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Negative control outcome columns (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub ncos: Vec<String>,
    /// Design randomization probability; defaults to the observed treated fraction.
    #[arg(long)]
    pub pi: Option<f64>,
    /// Replace a column by log10(value + offset), given as `column=offset`. Repeatable.
    #[arg(long = "log10", value_name = "COLUMN=OFFSET")]
    pub log10: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Emit the table as JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    /// Directory receiving the table and `manifest.json`; stdout/stderr otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Adjust {
    None,
    Cov,
    Nco,
    #[value(name = "cov+nco")]
    #[serde(rename = "cov+nco")]
    CovNco,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PretestKindArg {
    Sharp,
    Equiv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticArg {
    DiffMeans,
    RobustT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Sharp,
    Pseudo,
    Model,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PermutationArgs {
    /// Monte Carlo permutation draws.
    #[arg(long = "B", default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Enumerate all assignments when their count is at most this cap.
    #[arg(long, default_value_t = 200_000)]
    pub exhaustive_cap: u64,
    /// Always use Monte Carlo draws.
    #[arg(long)]
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MarginArgs {
    /// Equivalence margin for the NCO effect.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Margin from the primary outcome: `sd:F` (F x SD) or `range:F` (F x range).
    #[arg(long)]
    pub epsilon_rule: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Adjustment sets to report (comma separated); defaults to all available.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub adjust: Vec<Adjust>,
    /// Replace NCOs by their pooled empirical quantiles.
    #[arg(long)]
    pub quantile_nco: bool,
    /// hc0, hc1, hc2, hc3 or neyman.
    #[arg(long, default_value = "hc3")]
    pub correction: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Target the sample average treatment effect (Lin form).
    #[arg(long)]
    pub sate: bool,
    /// Add pretest-gated rows for every adjustment set containing NCOs.
    #[arg(long, value_enum)]
    pub pretest: Option<PretestKindArg>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub margin: MarginArgs,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "sharp")]
    pub method: TestMethod,
    /// Column tested by the sharp method; defaults to the outcome.
    #[arg(long)]
    pub column: Option<String>,
    #[arg(long, value_enum, default_value = "diff-means")]
    pub statistic: StatisticArg,
    /// Predictors used by the pseudo-outcome and model-output methods.
    #[arg(long, value_enum, default_value = "none")]
    pub adjust: Adjust,
    #[arg(long)]
    pub quantile_nco: bool,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PretestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// NCO to pretest; defaults to every NCO.
    #[arg(long)]
    pub nco: Option<String>,
    #[arg(long, value_enum, default_value = "sharp")]
    pub pretest: PretestKindArg,
    #[arg(long, value_enum, default_value = "diff-means")]
    pub statistic: StatisticArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub margin: MarginArgs,
    #[command(flatten)]
    pub perm: PermutationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// NCO to adjust for; defaults to the only NCO.
    #[arg(long)]
    pub nco: Option<String>,
    /// Hypothesized average effects of treatment on the NCO (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub delta_grid: Vec<f64>,
    #[arg(long, default_value = "hc3")]
    pub correction: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for results.csv, records.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write results.json.
    #[arg(long)]
    pub json: bool,
}
