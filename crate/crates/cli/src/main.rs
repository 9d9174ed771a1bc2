//! `dehaze` command-line tool.
//!
//! Subcommands: `synth` (build a synthetic hazy dataset), `train` (fit the
//! transmission network), `dehaze` (recover a single image), `eval`
//! (SSIM/MSE/PSNR reports), `bench` (wall-clock timing). Every subcommand is
//! deterministic given identical flags, inputs, and `--seed`. The
//! `DEHAZE_THREADS` environment variable caps internal parallelism.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dehaze", version, about = "Single-image dehazing toolkit")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print per-file progress details.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Trained transmission network plus classical airlight estimation.
    Net,
    /// Dark-channel-prior pipeline.
    Classical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalMethod {
    Net,
    Classical,
    /// Score the inputs against ground truth without dehazing (baseline).
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BenchMethod {
    Net,
    Classical,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a hazy patch dataset from clean images plus depth maps.
    Synth {
        /// Directory of clean RGB images (lossless rasters).
        #[arg(long)]
        input: PathBuf,
        /// Directory of depth maps named after the clean images
        /// (.txt grid, or a grayscale raster).
        #[arg(long)]
        depth: PathBuf,
        /// Output directory (patches/ and manifest.txt are created here).
        #[arg(long)]
        out: PathBuf,
        /// Scattering coefficient applied to depth normalized to [0, 1].
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Airlight: "r,g,b" for a fixed value or "jitter" for a per-image
        /// gray level drawn uniformly from [0.7, 1.0].
        #[arg(long, default_value = "0.8,0.8,0.8")]
        airlight: String,
        /// Patch side length.
        #[arg(long, default_value_t = 64)]
        patch: usize,
        /// Patches extracted per input image.
        #[arg(long, default_value_t = 20)]
        per_image: usize,
        /// Fraction of patches tagged train (the rest are val).
        #[arg(long, default_value_t = 0.8)]
        split: f64,
    },

    /// Train the transmission network on a synthesized dataset.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional CSV training curve: epoch,train_mse,val_mse.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 18)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0.002)]
        lr: f64,
    },

    /// Dehaze one image and write the recovered scene.
    Dehaze {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Required when --method net.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Optional transmission map output (grayscale raster).
        #[arg(long)]
        out_trans: Option<PathBuf>,
    },

    /// Evaluate a method with SSIM/MSE/PSNR over a set of pairs.
    Eval {
        /// Either a dataset manifest (predicted vs stored transmission) or a
        /// directory of <stem>_hazy.png / <stem>_gt.png pairs, or a text
        /// file of "hazy_path gt_path" lines.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum)]
        method: EvalMethod,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// CSV report output: path,ssim,mse,psnr.
        #[arg(long)]
        report: PathBuf,
    },

    /// Time the dehazing methods on synthetic images.
    Bench {
        #[arg(long, value_enum, default_value_t = BenchMethod::Both)]
        method: BenchMethod,
        /// Image size as WIDTHxHEIGHT.
        #[arg(long, default_value = "100x100")]
        size: String,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Number of random test images.
        #[arg(long, default_value_t = 3)]
        images: usize,
        /// Checkpoint for the net method (fresh weights when omitted).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Optional text file for the timing summary.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("DEHAZE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            input,
            depth,
            out,
            beta,
            airlight,
            patch,
            per_image,
            split,
        } => commands::synth(
            &input, &depth, &out, beta, &airlight, patch, per_image, split, cli.seed, cli.verbose,
        ),
        Command::Train {
            manifest,
            checkpoint,
            curve,
            epochs,
            batch,
            lr,
        } => commands::train(
            &manifest,
            &checkpoint,
            curve.as_deref(),
            epochs,
            batch,
            lr,
            cli.seed,
        ),
        Command::Dehaze {
            image,
            method,
            checkpoint,
            out,
            out_trans,
        } => commands::dehaze(
            &image,
            method,
            checkpoint.as_deref(),
            &out,
            out_trans.as_deref(),
        ),
        Command::Eval {
            pairs,
            method,
            checkpoint,
            report,
        } => commands::eval(&pairs, method, checkpoint.as_deref(), &report, cli.verbose),
        Command::Bench {
            method,
            size,
            repeats,
            images,
            checkpoint,
            report,
        } => commands::bench(
            method,
            &size,
            repeats,
            images,
            checkpoint.as_deref(),
            report.as_deref(),
            cli.seed,
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
