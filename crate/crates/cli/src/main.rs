//! Command-line front end: simulate, encode, reconstruct, evaluate, fwl.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evrecon::ErrorKind;

use config::ConfigError;

#[derive(Debug, Parser)]
#[command(
    name = "evrecon",
    version,
    about = "Event-camera simulation and motion-compensated video reconstruction"
)]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON file with `seed`, `[scene]`, `[sim]` and `[run]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene and emit events, reference frames and flow.
    Simulate(SimulateArgs),
    /// Split events into groups and write one voxel grid per group.
    Encode(EncodeArgs),
    /// Run the recursive reconstruction over an event file.
    Reconstruct(ReconstructArgs),
    /// Score predicted frames and flows against references.
    Evaluate(EvaluateArgs),
    /// Forward warping loss of an event file under a flow field.
    Fwl(FwlArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Full scene description (TOML or JSON); otherwise a random scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Seconds of simulated time.
    #[arg(long)]
    duration: Option<f64>,
    /// Foreground objects of the random scene.
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long)]
    threshold_mean: Option<f64>,
    #[arg(long)]
    threshold_std: Option<f64>,
    #[arg(long)]
    neg_pos_ratio_mean: Option<f64>,
    #[arg(long)]
    neg_pos_ratio_std: Option<f64>,
    /// Pixel lowpass cutoff in Hz (0 disables the filter).
    #[arg(long)]
    cutoff_hz: Option<f64>,
    #[arg(long)]
    refractory_s: Option<f64>,
    #[arg(long)]
    leak_rate_hz: Option<f64>,
    #[arg(long)]
    shot_noise_hz: Option<f64>,
    /// Ideal pixels: fixed threshold, no filter, refractory period or noise.
    #[arg(long)]
    noiseless: bool,
    /// Event file; `.txt` selects the text form.
    #[arg(long)]
    out_events: PathBuf,
    #[arg(long)]
    out_frames_dir: Option<PathBuf>,
    #[arg(long)]
    out_flow_dir: Option<PathBuf>,
    /// Place reference frames at the end of every group of this many events.
    #[arg(long, conflicts_with = "fps")]
    n_events: Option<usize>,
    /// Reference frame rate when `--n-events` is not given.
    #[arg(long, default_value_t = 20.0)]
    fps: f64,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
    /// Events per group.
    #[arg(long)]
    n_events: Option<usize>,
    /// Scale each grid to unit peak magnitude.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlowKind {
    Zero,
    GroundTruth,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WarpArg {
    None,
    Frame,
    FrameAndCodes,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    events: PathBuf,
    /// Weight container; without one, weights unrolling classical ISTA on a
    /// seeded random dictionary are used.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    /// Events per group.
    #[arg(long)]
    n_events: Option<usize>,
    #[arg(long, value_enum)]
    flow: Option<FlowKind>,
    /// Directory of `flow_NNNNN.flo` files for the file-backed providers.
    #[arg(long)]
    flow_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    warp: Option<WarpArg>,
    #[arg(long)]
    normalize_voxels: bool,
    /// Also emit the zero frame the recursion starts from.
    #[arg(long)]
    emit_initial_frame: bool,
    /// Record wall-clock time per step in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, requires = "gt_dir")]
    pred_dir: Option<PathBuf>,
    #[arg(long, requires = "pred_dir")]
    gt_dir: Option<PathBuf>,
    #[arg(long, requires = "flow_gt_dir")]
    flow_pred_dir: Option<PathBuf>,
    #[arg(long, requires = "flow_pred_dir")]
    flow_gt_dir: Option<PathBuf>,
    /// Output path ending in `.json` or `.csv`; JSON goes to stdout otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FwlArgs {
    #[arg(long)]
    events: PathBuf,
    /// `.flo` displacement over the whole event window.
    #[arg(long)]
    flow: PathBuf,
    /// Reference time events are warped to (default: window start).
    #[arg(long)]
    t_ref: Option<f64>,
    #[arg(long)]
    out_warped: Option<PathBuf>,
    #[arg(long)]
    out_unwarped: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<evrecon::Error>() {
        return match e.kind() {
            ErrorKind::Input => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Config => 4,
        };
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 4;
    }
    2
}

/// The error chain joined by ": ", skipping causes a message already shows.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
