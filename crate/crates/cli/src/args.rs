use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ganvo_core::evaluation::DepthCap;
use ganvo_core::gradcheck::Fault;

#[derive(Debug, Parser)]
#[command(name = "ganvo", version = env!("GANVO_BUILD_ID"))]
#[command(about = "Train and evaluate unsupervised monocular visual odometry models")]
#[command(
    after_help = "Set GANVO_THREADS to bound the worker threads used by convolution kernels."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train encoder, generator, discriminator and pose regressor jointly.
    Train(TrainArgs),
    /// Absolute trajectory error over 5-frame windows.
    EvalPose(EvalPoseArgs),
    /// Median-scaled depth error table.
    EvalDepth(EvalDepthArgs),
    /// Write a synthetic dataset in KITTI odometry layout.
    Synth(SynthArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::EvalPose(_) => "eval-pose",
            Command::EvalDepth(_) => "eval-depth",
            Command::Synth(_) => "synth",
            Command::Gradcheck(_) => "gradcheck",
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output directory [default: runs/<command>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice of the run
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (TOML); the toy config when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory, or "synthetic"
    #[arg(long)]
    pub data: String,
    /// Number of training steps, overriding the config
    #[arg(long)]
    pub steps: Option<u64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory, or "synthetic"
    #[arg(long)]
    pub data: String,
    /// Sequence id to evaluate; repeatable [default: the test split]
    #[arg(long = "sequence")]
    pub sequences: Vec<String>,
    /// Score the ground truth against itself instead of a model
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    /// Training config whose synthetic section describes --data synthetic
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct EvalPoseArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CapArg {
    #[value(name = "80")]
    Cap80,
    #[value(name = "50")]
    Cap50,
}

impl From<CapArg> for DepthCap {
    fn from(c: CapArg) -> Self {
        match c {
            CapArg::Cap80 => DepthCap::Cap80,
            CapArg::Cap50 => DepthCap::Cap50,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalDepthArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Maximum evaluated depth in meters
    #[arg(long, value_enum, default_value = "80")]
    pub cap: CapArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene config (TOML); overrides --scene
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene preset: toy, plane, slanted or two-plane
    #[arg(long, default_value = "plane")]
    pub scene: String,
    /// Frames per sequence, overriding the scene
    #[arg(long)]
    pub frames: Option<usize>,
    /// Number of sequences
    #[arg(long, default_value_t = 1)]
    pub sequences: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub output: Output,
    #[arg(long, hide = true, default_value = "none")]
    pub inject_fault: Fault,
}
