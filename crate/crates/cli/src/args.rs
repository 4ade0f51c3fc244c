use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use figp::emulator::FamilyChoice;
use figp::KernelFamily;

use crate::reproduce::Target;

#[derive(Debug, Parser)]
#[command(
    name = "figp",
    version,
    about = "Gaussian-process emulation with function-valued inputs",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Quadrature points per dimension.
    #[arg(long, global = true, value_name = "N")]
    pub grid_res: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print a JSON report instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one kernel family by maximum likelihood and save the model.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Leave-one-out error of a saved model.
    Loocv(LoocvArgs),
    /// Fit several kernel families and keep the one with the smallest LOOCV error.
    SelectKernel(SelectArgs),
    /// Sample paths over the family sin(αx) on [0, 2π].
    SamplePaths(SamplePathsArgs),
    /// MSPE decay of knot and eigenfunction designs.
    MspeDecay(MspeDecayArgs),
    /// PCA field emulator.
    #[command(subcommand)]
    Emulate(EmulateCommand),
    /// Regenerate the data behind a published table or figure.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training file (JSON).
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    #[arg(long, default_value = "linear")]
    pub kernel: KernelFamily,
    /// Where to save the model [default: <out>/model.json].
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Test input as an expression or a CSV path; repeatable.
    #[arg(long = "input", value_name = "EXPR", required = true)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct LoocvArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_name = "FILE")]
    pub train: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "linear,nonlinear")]
    pub families: Vec<KernelFamily>,
    /// Save the selected model here.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingMethod {
    /// Cholesky factor of the Gram matrix.
    Gram,
    /// Truncated Karhunen–Loève expansion (linear kernel only).
    Kl,
}

#[derive(Debug, Args)]
pub struct SamplePathsArgs {
    #[arg(long, default_value = "linear")]
    pub kernel: KernelFamily,
    #[arg(long, default_value_t = 2.5)]
    pub nu: f64,
    /// Lengthscale of the linear kernel.
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Scale of the nonlinear kernel.
    #[arg(long, default_value_t = 0.01)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub alpha_points: Option<usize>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long, value_enum, default_value = "gram")]
    pub method: SamplingMethod,
    /// Eigenpairs kept by the KL route [default: min(nodes, 100)].
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "paths.csv")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct MspeDecayArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Number of test functions.
    #[arg(long)]
    pub tests: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EmulateCommand {
    /// Reduce a field dataset by PCA and fit one GP per score.
    Fit(EmulateFitArgs),
    /// Predict fields with a saved emulator.
    Predict(EmulatePredictArgs),
    /// Write a synthetic low-rank field dataset.
    Synthetic(EmulateSyntheticArgs),
}

#[derive(Debug, Args)]
pub struct EmulateFitArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    pub dataset: PathBuf,
    /// Cumulative explained-variance threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// `auto`, `linear` or `nonlinear`; one value, or one per component.
    #[arg(long, value_delimiter = ',', value_parser = parse_family_choice)]
    pub kernel: Option<Vec<FamilyChoice>>,
    /// Where to save the emulator [default: <out>/emulator.json].
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmulatePredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Test input as an expression or a CSV path; repeatable.
    #[arg(long = "input", value_name = "EXPR", required = true)]
    pub inputs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EmulateSyntheticArgs {
    /// Pixels per side.
    #[arg(long, default_value_t = 32)]
    pub side: usize,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub target: Target,
}

pub fn parse_family_choice(s: &str) -> Result<FamilyChoice, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "auto" => Ok(FamilyChoice::Auto),
        "linear" => Ok(FamilyChoice::Linear),
        "nonlinear" => Ok(FamilyChoice::Nonlinear),
        other => Err(format!("unknown kernel `{other}` (expected auto, linear or nonlinear)")),
    }
}
