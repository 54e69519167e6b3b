//! gdekit: batch experiment driver for the Gaussian directional encoding
//! pipeline.
//!
//! Exit codes: 0 success, 1 internal error, 2 user/config error.

mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub internal: bool,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { message: message.into(), internal: false }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { message: message.into(), internal: true }
    }
}

impl From<gdekit_core::Error> for CliError {
    fn from(e: gdekit_core::Error) -> Self {
        CliError::user(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::user(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::internal(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "gdekit", version, about = "Gaussian directional encoding toolkit")]
struct Cli {
    /// JSON run configuration; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root random seed for all substreams.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic glossy-room dataset to a directory.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the preconvolved light field (initialization stage).
    FitLightfield {
        #[arg(long)]
        dataset: PathBuf,
        /// Output checkpoint path (OPT1 + sidecar; .gde1 blob next to it).
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration loss curve CSV.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Resume from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Full-size schedule (8k iterations of 25.6k rays).
        #[arg(long)]
        paper_scale: bool,
    },
    /// Joint training of field, Gaussians and decoder.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Initialization checkpoint from fit-lightfield.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
        /// Skip the initialization stage (random Gaussians).
        #[arg(long)]
        no_init: bool,
        /// Freeze the Gaussian parameters during training.
        #[arg(long)]
        no_gauss_opt: bool,
        /// Disable the monocular normal loss.
        #[arg(long)]
        no_mono: bool,
        /// Keep the monocular normal loss active for the whole run.
        #[arg(long)]
        no_early_stop: bool,
        /// Zero the tint path (diffuse-only ablation).
        #[arg(long)]
        diffuse_only: bool,
    },
    /// Render buffer images from a trained model.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// cameras.json (a dataset directory path also works).
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Added to the rendered roughness before encoding.
        #[arg(long, default_value_t = 0.0)]
        roughness_offset: f64,
        /// Which views to render: "test", "train", "all" or a
        /// comma-separated id list.
        #[arg(long, default_value = "test")]
        views: String,
        /// Downscale factor for the renders.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
    /// PSNR / SSIM / MAE between a render directory and ground truth.
    Eval {
        #[arg(long)]
        render: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe experiment: fit both encodings, report, render projections.
    Toy {
        #[arg(long)]
        out: PathBuf,
        /// Run the coefficient fits.
        #[arg(long)]
        fit: bool,
        /// Write the per-coefficient CSV and summary JSON.
        #[arg(long)]
        report: bool,
        /// Render stereographic projections.
        #[arg(long)]
        render: bool,
    },
    /// Finite-difference verification of the analytic gradients.
    CheckGradients {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.internal {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.room.seed = seed;
    }
    let threads = cli.threads;

    match cli.command {
        Command::GenSynthetic { out } => commands::gen_synthetic::run(&cfg, threads, &out),
        Command::FitLightfield { dataset, out, loss_csv, resume, paper_scale } => {
            commands::fit_lightfield::run(
                &cfg,
                threads,
                &dataset,
                &out,
                loss_csv.as_deref(),
                resume.as_deref(),
                paper_scale,
            )
        }
        Command::Train {
            dataset,
            init,
            out,
            no_init,
            no_gauss_opt,
            no_mono,
            no_early_stop,
            diffuse_only,
        } => commands::train::run(
            &cfg,
            threads,
            &dataset,
            init.as_deref(),
            &out,
            commands::train::Ablations {
                no_init,
                no_gauss_opt,
                no_mono,
                no_early_stop,
                diffuse_only,
            },
        ),
        Command::Render { checkpoint, cameras, out, roughness_offset, views, scale } => {
            commands::render::run(
                &cfg,
                threads,
                &checkpoint,
                &cameras,
                &out,
                roughness_offset,
                &views,
                scale,
            )
        }
        Command::Eval { render, gt, out } => {
            commands::eval::run(&cfg, threads, &render, &gt, out.as_deref())
        }
        Command::Toy { out, fit, report, render } => {
            let all = !(fit || report || render);
            commands::toy::run(&cfg, threads, &out, fit || all, report || all, render || all)
        }
        Command::CheckGradients { out } => commands::check_gradients::run(&cfg, threads, out.as_deref()),
    }
}
