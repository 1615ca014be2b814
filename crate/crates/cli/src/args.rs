use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "fan",
    version,
    about = "Multi-channel front-end toolkit: simulate, train, evaluate"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise a labelled corpus of 7-channel WAV files.
    Simulate(SimulateArgs),
    /// Dump raw DFT features of the microphone pair for every utterance.
    Extract(ExtractArgs),
    /// Superdirective beam patterns of the microphone pair.
    Beampattern(BeampatternArgs),
    /// Finite-difference gradient check on the tiny configuration.
    Gradcheck(GradcheckArgs),
    /// Stage-wise training of one variant.
    Train(TrainArgs),
    /// Accuracy per SNR bucket and playback flag.
    Eval(EvalArgs),
    /// Per-layer parameter counts.
    Params(ParamsArgs),
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Microphone positions, one `x y z` line per mic (metres).
    #[arg(long)]
    pub geometry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus recipe in TOML; defaults to the built-in 600/150/150 recipe.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the recipe seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated channel indices; default is the diagonal pair.
    #[arg(long, value_delimiter = ',')]
    pub mics: Option<Vec<usize>>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Args)]
pub struct BeampatternArgs {
    /// CSV of power versus azimuth for every look direction and bin.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = fan_core::array::DEFAULT_DIAGONAL_LOADING)]
    pub diagonal_loading: f64,
    #[arg(long, default_value_t = fan_core::array::DEFAULT_LOOK_DIRECTIONS)]
    pub directions: usize,
    /// Azimuth step of the CSV in degrees.
    #[arg(long, default_value_t = 5.0)]
    pub step_deg: f64,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Check one variant; default checks all six.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = fan_core::train::DEFAULT_STEP)]
    pub step: f64,
    /// CSV with one row per tensor.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub variant: String,
    /// Checkpoint to write; the metric log goes next to it as `.metrics.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs per stage: one number for all stages or `s1,s2,s3`.
    #[arg(long, value_delimiter = ',')]
    pub epochs: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = fan_core::train::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = fan_core::array::DEFAULT_DIAGONAL_LOADING)]
    pub diagonal_loading: f64,
    /// Train every stage without the warm-up freeze.
    #[arg(long)]
    pub no_warmup_freeze: bool,
    #[arg(long, value_delimiter = ',')]
    pub mics: Option<Vec<usize>>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub baseline_checkpoint: Option<PathBuf>,
    /// Must match the checkpoint's variant when given.
    #[arg(long)]
    pub variant: Option<String>,
    /// Split to score.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// CSV report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// One variant; default lists all six.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
