//! `flowcorr`: flow volumes in, trajectories and pixel-pair batches out.
//!
//! Exit codes: 0 success, 2 malformed input file, 3 failed precondition
//! (bad arguments, missing residuals, I/O), 4 numerical check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod cmd;

#[derive(Parser)]
#[command(name = "flowcorr", version, about = "Dense pixel correspondences from optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pack raw planar f32 flow into an 8-bit FlowPack file.
    EncodeFlow(EncodeFlow),
    /// Unpack a FlowPack file to raw planar f32.
    DecodeFlow(DecodeFlow),
    /// Render a synthetic scene (JSON spec) to a FlowPack file.
    Synth(Synth),
    /// Seed and track points through a FlowPack volume.
    Track(Track),
    /// Re-cut stored trajectories at a stricter threshold.
    Rethreshold(Rethreshold),
    /// Select frames to pair with an anchor.
    Sample(Sample),
    /// Build a budgeted batch of pixel pairs from trajectory files.
    Pairs(Pairs),
    /// InfoNCE loss of a PCEB embedding tensor.
    Loss(Loss),
    /// Compare the analytic InfoNCE gradient with finite differences.
    Gradcheck(Gradcheck),
    /// Span and stop-reason summary of a trajectory file.
    Stats(Stats),
    /// Mean span for a series of delta values (needs residuals).
    Sweep(Sweep),
}

#[derive(Args)]
struct EncodeFlow {
    /// Forward u, v planes per step, then backward u, v planes per step.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    frames: u32,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    /// Input holds forward flow only.
    #[arg(long)]
    forward_only: bool,
}

#[derive(Args)]
struct DecodeFlow {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct Synth {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct Track {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to the flow file's stem.
    #[arg(long)]
    video_id: Option<String>,
    /// Track to the image border only, keeping residuals for later cuts.
    #[arg(long, conflicts_with = "no_residuals")]
    permissive_residuals: bool,
    #[arg(long)]
    no_residuals: bool,
    /// Seed a regular grid with this stride instead of random points.
    #[arg(long)]
    seed_grid: Option<u32>,
    /// Frame for --seed-grid.
    #[arg(long, default_value_t = 0, requires = "seed_grid")]
    seed_frame: u32,
    #[arg(long, env = "PICO_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct Rethreshold {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    gamma: f32,
    #[arg(long)]
    delta: f32,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMode {
    Anchor,
    Random,
}

#[derive(Args)]
struct Sample {
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, value_enum, default_value = "anchor")]
    mode: SampleMode,
    /// Anchor frame; drawn from the seed when omitted.
    #[arg(long)]
    anchor_frame: Option<u32>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Pairs {
    #[arg(long, num_args = 1.., required = true)]
    trajectories: Vec<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
    /// JSON `{"a": view, "b": view}`; identity views when omitted.
    #[arg(long)]
    views: Option<PathBuf>,
    /// JSON lines; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "PICO_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct Loss {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = flowcorr::nce::DEFAULT_TEMPERATURE)]
    tau: f64,
    #[arg(long)]
    k: usize,
}

#[derive(Args)]
struct Gradcheck {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = flowcorr::nce::DEFAULT_TEMPERATURE)]
    tau: f64,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Check this many random coordinates instead of all of them.
    #[arg(long)]
    coords: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct Stats {
    trajectories: PathBuf,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    trajectories: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    deltas: Vec<f32>,
    #[arg(long, default_value_t = 0.0)]
    gamma: f32,
}

/// Flags that override a JSON run config.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON run config; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f32>,
    #[arg(long)]
    delta: Option<f32>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    scale: Option<u32>,
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long)]
    correspondence: Option<String>,
    #[arg(long)]
    stride: Option<u32>,
    #[arg(long)]
    subsample: Option<String>,
}

fn main() -> ExitCode {
    // clap exits with 2 on bad usage, which is reserved for format errors.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match cmd::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
