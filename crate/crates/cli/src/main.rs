//! `prep`: batch preprocessing of cervigram images.
//!
//! Exit codes: 0 success (including batches with per-image failures),
//! 2 bad arguments, 3 I/O error, 4 degenerate input.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cervprep::image::{save_image, save_mask};
use cervprep::phantom::{generate_phantom, PhantomSpec};
use cervprep::pipeline::{process_file, run_batch, PipelineError};
use cervprep::Error;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::PipelineArgs;

#[derive(Debug, Parser)]
#[command(name = "prep", version, about = "Specular-reflection removal and cervix ROI extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process a single image.
    Run {
        input: PathBuf,
        #[command(flatten)]
        args: PipelineArgs,
    },
    /// Process every .png/.ppm image in a directory.
    Batch {
        dir: PathBuf,
        #[command(flatten)]
        args: PipelineArgs,
    },
    /// Write a synthetic cervigram and its ground truth.
    Phantom {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        n_speculars: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        no_frame: bool,
    },
}

const EXIT_ARGS: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_ARGS,
        Error::Io { .. } | Error::Decode(_) | Error::Unsupported(_) => EXIT_IO,
        Error::Dimensions(_) | Error::OutOfBounds(_) | Error::Degenerate(_) => EXIT_DEGENERATE,
    }
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: exit_code(&e.source),
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = e
            .downcast_ref::<Error>()
            .map_or(EXIT_ARGS, exit_code);
        Failure {
            code,
            message: format!("{e:#}"),
        }
    }
}

fn run_one(input: &Path, args: PipelineArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let out = process_file(input, &cfg.output_dir, &cfg)?;
    let r = &out.report;
    println!(
        "{}: {} specular px, roi cluster {}, bbox ({},{})-({},{}) -> {}",
        input.display(),
        r.specular.raw_pixels,
        r.roi.cluster_index,
        r.roi.bbox.x0,
        r.roi.bbox.y0,
        r.roi.bbox.x1,
        r.roi.bbox.y1,
        cfg.output_dir.display()
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn batch(dir: &Path, args: PipelineArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let summary = run_batch(dir, &cfg)?;
    println!(
        "processed {} images: {} ok, {} failed (summary in {})",
        summary.processed,
        summary.succeeded,
        summary.failed,
        cfg.output_dir.join("summary.json").display()
    );
    for f in &summary.failures {
        eprintln!("failed: {} ({} stage): {}", f.file, f.stage, f.error);
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthFile<'a> {
    schema: u32,
    spec: &'a PhantomSpec,
    ellipse_bbox: cervprep::BBox,
    specular_pixels: usize,
    ellipse_pixels: usize,
}

fn phantom(
    seed: u64,
    out: &Path,
    n_speculars: Option<usize>,
    noise_sigma: Option<f64>,
    no_frame: bool,
) -> Result<(), Failure> {
    let mut spec = PhantomSpec::default_for_seed(seed);
    if let Some(n) = n_speculars {
        spec.n_speculars = n;
    }
    if let Some(s) = noise_sigma {
        spec.noise_sigma = s;
    }
    spec.frame = !no_frame;
    let (image, truth) = generate_phantom(&spec)?;

    let stem = format!("phantom_{seed}");
    let truth_dir = out.join(format!("{stem}_truth"));
    fs::create_dir_all(&truth_dir)
        .with_context(|| format!("creating {}", truth_dir.display()))
        .map_err(|e| Failure {
            code: EXIT_IO,
            message: format!("{e:#}"),
        })?;
    let image_path = out.join(format!("{stem}.png"));
    save_image(&image, &image_path)?;
    save_image(&truth.clean_image, truth_dir.join("clean.png"))?;
    save_mask(&truth.specular_mask, truth_dir.join("specular_mask.png"))?;
    save_mask(&truth.ellipse_mask, truth_dir.join("ellipse_mask.png"))?;
    let file = TruthFile {
        schema: cervprep::pipeline::REPORT_SCHEMA,
        spec: &spec,
        ellipse_bbox: truth.ellipse_bbox,
        specular_pixels: truth.specular_mask.count(),
        ellipse_pixels: truth.ellipse_mask.count(),
    };
    let json = serde_json::to_string_pretty(&file).expect("truth is serializable");
    let truth_path = truth_dir.join("truth.json");
    fs::write(&truth_path, json).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", truth_path.display()),
    })?;
    println!("{}", image_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { input, args } => run_one(&input, args),
        Command::Batch { dir, args } => batch(&dir, args),
        Command::Phantom {
            seed,
            out,
            n_speculars,
            noise_sigma,
            no_frame,
        } => phantom(seed, &out, n_speculars, noise_sigma, no_frame),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
