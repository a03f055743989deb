//! `camtraj` command-line driver. Each subcommand is an idempotent batch step
//! that reads a manifest or earlier stage outputs and writes its results
//! under `--out`.

pub mod config;
pub mod dataset;
pub mod error;
mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::Config;
pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "camtraj", version, about = "Camera trajectory curation and evaluation")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "camtraj-out")]
    pub out: PathBuf,
    /// Worker threads (default: logical CPUs).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Restrict to the `keep` list of a filter or balance stage output.
    #[arg(long)]
    pub select: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RayModeArg {
    Geometric,
    Literal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a manifest and every file it references.
    Ingest(ManifestArgs),
    /// Keep videos whose background flow exceeds a threshold.
    Filter {
        #[command(flatten)]
        input: ManifestArgs,
        /// Minimum mean background flow magnitude, pixels per frame.
        #[arg(long)]
        min_flow: Option<f64>,
    },
    /// Estimate metric scale per video and write calibrated trajectories.
    Calibrate {
        #[command(flatten)]
        input: ManifestArgs,
        /// Keyframes per video.
        #[arg(long)]
        keyframes: Option<usize>,
    },
    /// Segment and categorize every trajectory.
    Analyze {
        #[command(flatten)]
        input: ManifestArgs,
        /// Read `<dir>/<video_id>.txt` instead of the manifest trajectories.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Cap every trajectory category, dropping the least important videos.
    Balance {
        /// Output of `analyze`.
        #[arg(long)]
        profiles: PathBuf,
        /// Positive integer or `auto`.
        #[arg(long)]
        cap: Option<String>,
    },
    /// Write per-frame Plücker ray maps.
    Plucker {
        #[command(flatten)]
        input: ManifestArgs,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        latent_h: u32,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        latent_w: u32,
        /// Keep every `stride`-th pose.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_enum)]
        ray_mode: Option<RayModeArg>,
    },
    /// Trajectory error of an estimate against ground truth.
    EvalTraj {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Compare orientations without the alignment rotation.
        #[arg(long)]
        no_rotation_alignment: bool,
    },
    /// Mean foreground flow magnitude of one video.
    EvalMotion {
        #[arg(long)]
        flow_dir: PathBuf,
        #[arg(long)]
        mask_dir: PathBuf,
        /// Report angular magnitudes in degrees for this focal length.
        #[arg(long)]
        focal_px: Option<f64>,
    },
    /// Mean cosine similarity of consecutive clip features.
    EvalAppearance {
        /// Feature rasters in clip order.
        #[arg(long, num_args = 2.., required = true)]
        clips: Vec<PathBuf>,
    },
    /// Merge stage outputs into `report.json`.
    Report {
        /// Stage outputs to merge (default: every stage output in `--out`).
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

/// Parses `argv`, runs the command and returns the process exit code. Errors
/// are reported as one JSON line on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 };
            }
            let err = CliError::usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(outputs) => {
            for p in outputs {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns the paths it wrote.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = Config::load(cli.config.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0) as usize)
        .build()
        .map_err(|e| CliError::input(format!("worker pool: {e}")))?;
    let seed = config.effective_seed(cli.seed);
    let ctx = stages::Context { config, seed, out: cli.out.clone() };
    pool.install(|| stages::dispatch(&ctx, &cli.command))
}
