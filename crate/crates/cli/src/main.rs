//! `duet`: generate synthetic interaction data, train the reaction
//! denoiser, sample and stream reactions, and evaluate generated sets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use duet_core::Error;

const AFTER_HELP: &str = "\
Windows hold h = 20 history frames and k = 40 predicted frames at 30 fps.
Settings are taken from built-in defaults, then the --config file, then flags.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.";

#[derive(Debug, Parser)]
#[command(name = "duet", version, about = "Online action-reaction motion synthesis", after_help = AFTER_HELP)]
pub struct Cli {
    /// TOML file with [gen_data], [train], [sample], [stream] and [evaluate] sections
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single-threaded execution everywhere; seeded runs become reproducible byte for byte
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic two-person dataset
    GenData(GenDataArgs),
    /// Train the denoiser with scheduled rollouts and write checkpoints and a loss curve
    Train(TrainArgs),
    /// Replay the actor of every record through the planner and write the generated set
    Sample(SampleArgs),
    /// Plan reactions live over newline-delimited JSON frames (stdin/stdout or TCP)
    Stream(StreamArgs),
    /// Compare a generated set against a reference set
    Evaluate(EvaluateArgs),
    /// Summarize a dataset directory, checkpoint or clip file
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// mirror, follow, handshake or all [default: mirror]
    #[arg(long)]
    pub scenario: Option<String>,
    /// Clips per scenario [default: 8]
    #[arg(long)]
    pub clips: Option<usize>,
    /// Frames per clip at 30 fps [default: 900]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Base seed; clip i uses seed + i [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory
    #[arg(long, env = "DUET_DATA_DIR", default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long, env = "DUET_DATA_DIR", default_value = "data")]
    pub data: PathBuf,
    /// Output directory for checkpoints, loss.csv and model.json
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    /// Optimizer steps, one per window [default: 30000]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Samples per step [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Consecutive windows per crop [default: 3]
    #[arg(long)]
    pub windows: Option<usize>,
    /// First iteration of the mixed phase [default: iters / 3]
    #[arg(long)]
    pub phase2: Option<usize>,
    /// First iteration of the rollout-only phase [default: 2 iters / 3]
    #[arg(long)]
    pub phase3: Option<usize>,
    /// Adam learning rate [default: 1e-4]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Cosine-decay the learning rate to this fraction over the run [default: 1, no decay]
    #[arg(long)]
    pub lr_final: Option<f64>,
    /// Diffusion steps T [default: 8]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Text dropout rate for guidance training [default: 0.15]
    #[arg(long)]
    pub mask_rate: Option<f64>,
    /// Foot-contact loss weight [default: 0.2]
    #[arg(long)]
    pub lambda_foot: Option<f64>,
    /// Interaction-field loss weight [default: 0.5]
    #[arg(long)]
    pub lambda_inter: Option<f64>,
    /// Prefix-continuity loss weight [default: 0.1]
    #[arg(long)]
    pub lambda_prefix: Option<f64>,
    /// Denoiser size: tiny (2 layers, 64 wide) or full (8 layers, 512 wide) [default: tiny]
    #[arg(long)]
    pub profile: Option<String>,
    /// Seed for crops, noise and rollouts [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for parameter initialization [default: 0]
    #[arg(long)]
    pub init_seed: Option<u64>,
    /// Save a checkpoint every N iterations, 0 saves only the final model [default: 0]
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct PlanArgs {
    /// Checkpoint written by `train`
    #[arg(long, default_value = "runs/train/model.json")]
    pub checkpoint: PathBuf,
    /// Sampling seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Guidance weight w [default: 5]
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Diffusion steps T used at sampling time [default: from the checkpoint, 8]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Text label conditioning every window [default: the record's label; none when streaming]
    #[arg(long)]
    pub text: Option<String>,
    /// Reactor buffer before the first window: unconditioned, rest or provided [default: unconditioned]
    #[arg(long)]
    pub warmup: Option<String>,
    /// Stop after this many 40-frame windows [default: until the actor ends]
    #[arg(long)]
    pub max_windows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Dataset whose actor clips drive the planner
    #[arg(long, env = "DUET_DATA_DIR", default_value = "data")]
    pub data: PathBuf,
    /// Output directory for the generated dataset
    #[arg(long, default_value = "runs/sample")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Serve one TCP connection on this address instead of stdin/stdout
    #[arg(long)]
    pub listen: Option<String>,
    /// Pace output at 30 fps instead of as fast as possible
    #[arg(long)]
    pub realtime: bool,
    /// Run ingest, planning and output on separate threads with queues of this capacity [default: 0, one thread]
    #[arg(long)]
    pub queue: Option<usize>,
    /// Write the run report (latency, boundary gaps) as JSON to this file
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Generated dataset directory
    #[arg(long, default_value = "runs/sample")]
    pub generated: PathBuf,
    /// Reference dataset directory
    #[arg(long, env = "DUET_DATA_DIR", default_value = "data")]
    pub reference: PathBuf,
    /// Output directory for metrics.txt and windows.csv
    #[arg(long, default_value = "runs/evaluate")]
    pub out: PathBuf,
    /// Frames per feature window [default: 40]
    #[arg(long)]
    pub window: Option<usize>,
    /// Diversity subset size S_d [default: 200]
    #[arg(long)]
    pub diversity_subset: Option<usize>,
    /// Seed for diversity subsets [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Joint sphere radius in meters [default: 0.06]
    #[arg(long)]
    pub joint_radius: Option<f64>,
    /// Voxel edge for interpenetration volume in meters [default: 0.01]
    #[arg(long)]
    pub voxel: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Dataset directory, checkpoint (.json) or clip (.mclip)
    pub path: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Validation(_) | Error::UnsupportedVersion { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
