mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Moving-instance tracking for radar point clouds: simulation, training,
/// tracking and evaluation on JSON-lines scan files.
#[derive(Debug, Parser)]
#[command(name = "radar-tracker", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a canned scenario and write ground-truth scans.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the segmentation error model to a ground-truth file.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON file with corruption rates; flags below override it.
        #[arg(long)]
        rates: Option<PathBuf>,
        #[arg(long)]
        flip: Option<f64>,
        #[arg(long)]
        split: Option<f64>,
        #[arg(long)]
        merge: Option<f64>,
        #[arg(long)]
        merge_radius: Option<f64>,
        #[arg(long)]
        offset_noise: Option<f64>,
        #[arg(long)]
        ghost: Option<f64>,
        #[arg(long)]
        ghost_radius: Option<f64>,
    },
    /// Fit the offset heads and the similarity gate on a ground-truth file.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Center jitter radius used when training the similarity gate, m.
        #[arg(long)]
        center_jitter: Option<f64>,
    },
    /// Run the tracker on a segmented scan file.
    Track {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Replace the file's offsets with the checkpoint's offset heads.
        #[arg(long)]
        predict_offsets: bool,
        #[command(flatten)]
        tracker: TrackerArgs,
    },
    /// Run a reference tracker (center_doppler or kalman_iou).
    Baseline {
        #[arg(long)]
        name: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seconds per scan.
        #[arg(long, default_value_t = 0.5)]
        dt: f64,
        #[command(flatten)]
        tracker: TrackerArgs,
    },
    /// Score a prediction file against ground truth and print the metrics as JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Check every analytic gradient against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Train the gate on a scenario and compare association variants.
    Ablate {
        #[arg(long, default_value = "crossing")]
        scenario: String,
        /// Number of evaluation seeds.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append the baseline trackers to the table.
        #[arg(long)]
        baselines: bool,
        /// Print the rows as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

/// Tracker configuration: a flat JSON file, then individual overrides.
#[derive(Debug, Args)]
struct TrackerArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_d1: Option<f64>,
    #[arg(long)]
    t_d2: Option<f64>,
    #[arg(long)]
    t_c: Option<f64>,
    #[arg(long)]
    retention: Option<u32>,
    /// Disable the similarity gate.
    #[arg(long)]
    geometric: bool,
    /// Associate raw centers instead of temporal-offset predictions.
    #[arg(long)]
    no_temporal_offset: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
