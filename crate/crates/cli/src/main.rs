mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Fit a face model to an image by differentiable rendering, and the
/// tools around it.
#[derive(Parser, Debug)]
#[command(name = "facefit", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON file with the numeric settings of the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory; created if missing.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides samples per pixel in the config.
    #[arg(long, global = true)]
    pub spp: Option<usize>,
    /// Single-threaded execution and no timing in the manifest, so reruns
    /// are bit-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic bundle, sampled ground truth, target image and landmarks.
    MakeFixture,
    /// Render parameters with a bundle.
    Render {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
    /// Fit the model to an image.
    Fit {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        landmarks: Option<PathBuf>,
        /// Starting parameters (with `"init": "given"` in the config).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Finite-difference check of the stage losses on a fixture.
    Gradcheck,
    /// Hybrid vs ray-only, or regularizer leakage, experiments.
    Ablation {
        #[arg(long, value_enum, default_value = "hybrid")]
        kind: commands::AblationKind,
    },
    /// Compare a prediction with ground truth: OBJ meshes (vertex error),
    /// normal images (angular error, with --normals) or images (RMSE, SSIM).
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        normals: bool,
        /// Optional PNG mask; white pixels are evaluated.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
