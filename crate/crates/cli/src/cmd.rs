use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use flowcorr::correspond::write_jsonl;
use flowcorr::flowstore::{read_flowpack, write_flowpack};
use flowcorr::nce::{finite_difference_check, info_nce_loss, read_pceb, split_embeddings};
use flowcorr::pipeline::{build_batch, select_frames, with_pool, RunConfig, ViewPair};
use flowcorr::rng::video_seed;
use flowcorr::sampler::{anchor_sample, random_sample};
use flowcorr::synth::{generate, SceneSpec};
use flowcorr::tracker::{
    grid_seeds, read_trajectories, rethreshold, seed_points, trajectory_stats, track_video, write_trajectories,
};
use flowcorr::{FlowDirection, FlowField, FlowVolume, ThresholdParams, TrajectorySet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Command, RunArgs, SampleMode};

#[derive(Debug)]
pub enum CliError {
    Core(flowcorr::Error),
    Usage(String),
    Check(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Check(m) => write!(f, "numerical check failed: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(flowcorr::Error::Format { .. }) => 2,
            CliError::Check(_) => 4,
            _ => 3,
        }
    }
}

impl From<flowcorr::Error> for CliError {
    fn from(e: flowcorr::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn parse_enum<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.replace('-', "_")))
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for --{flag}")))
}

fn load_trajectories(path: &Path) -> Result<TrajectorySet> {
    Ok(read_trajectories(open(path)?)?)
}

fn save_trajectories(set: &TrajectorySet, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_trajectories(set, &mut w)?;
    w.flush()?;
    Ok(())
}

fn save_flow(volume: &FlowVolume, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_flowpack(volume, &mut w)?;
    w.flush()?;
    Ok(())
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag {
                    cfg.$field = v;
                }
            };
        }
        set!(seed => seed);
        set!(gamma => gamma);
        set!(delta => delta);
        set!(points => points_per_video);
        set!(n => n_frames);
        set!(budget => budget);
        set!(videos => videos_per_iteration);
        set!(scale => feature_scale);
        set!(stride => grid_stride);
        if let Some(s) = &self.sampling {
            cfg.sampling = parse_enum("sampling", s)?;
        }
        if let Some(s) = &self.correspondence {
            cfg.correspondence = parse_enum("correspondence", s)?;
        }
        if let Some(s) = &self.subsample {
            cfg.subsample = parse_enum("subsample", s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_planes(r: &mut impl Read, count: usize, plane: usize) -> Result<Vec<Vec<f32>>> {
    (0..count)
        .map(|i| {
            let mut buf = vec![0f32; plane];
            r.read_f32_into::<LittleEndian>(&mut buf).map_err(|_| {
                CliError::Core(flowcorr::Error::Format {
                    offset: (i * plane * 4) as u64,
                    message: "raw flow ends before the expected plane count".into(),
                })
            })?;
            Ok(buf)
        })
        .collect()
}

fn encode_flow(a: crate::EncodeFlow) -> Result<()> {
    let plane = a.width as usize * a.height as usize;
    let steps = a.frames.saturating_sub(1) as usize;
    let directions = if a.forward_only { 1 } else { 2 };
    let expected = (plane * 2 * steps * directions * 4) as u64;
    let actual = fs::metadata(&a.input)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.input.display())))?
        .len();
    if actual != expected {
        return Err(flowcorr::Error::Format {
            offset: actual.min(expected),
            message: format!("raw flow is {actual} bytes, expected {expected}"),
        }
        .into());
    }
    let mut r = open(&a.input)?;
    let mut fields = |dir: FlowDirection| -> Result<Vec<FlowField>> {
        let planes = read_planes(&mut r, 2 * steps, plane)?;
        let mut it = planes.into_iter();
        (0..steps)
            .map(|_| {
                let mut plane = || it.next().unwrap().into_iter().map(f64::from).collect();
                let (u, v) = (plane(), plane());
                Ok(FlowField::new(a.width, a.height, u, v, dir)?)
            })
            .collect()
    };
    let forward = fields(FlowDirection::Forward)?;
    let backward = if a.forward_only { Vec::new() } else { fields(FlowDirection::Backward)? };
    let volume = FlowVolume::new(a.frames, a.width, a.height, forward, backward)?;
    save_flow(&volume, &a.output)
}

fn decode_flow(a: crate::DecodeFlow) -> Result<()> {
    let volume = read_flowpack(open(&a.input)?)?;
    let mut w = create(&a.output)?;
    for f in volume.forward_fields().iter().chain(volume.backward_fields()) {
        for &x in f.u().iter().chain(f.v()) {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn track(a: crate::Track) -> Result<()> {
    let cfg = a.run.resolve()?;
    let volume = read_flowpack(open(&a.flow)?)?;
    let video_id = a.video_id.clone().unwrap_or_else(|| {
        a.flow
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let rng_seed = video_seed(cfg.seed, &video_id);
    let seeds = match a.seed_grid {
        Some(stride) => {
            if stride == 0 {
                return Err(CliError::Usage("--seed-grid must be at least 1".into()));
            }
            grid_seeds(a.seed_frame, stride, volume.width(), volume.height())
        }
        None => seed_points(&volume, cfg.points_per_video, rng_seed)?,
    };
    let params = if a.permissive_residuals {
        ThresholdParams::PERMISSIVE
    } else {
        cfg.params()?
    };
    let set = with_pool(a.threads, || {
        track_video(video_id, &volume, &seeds, rng_seed, params, !a.no_residuals)
    })??;
    save_trajectories(&set, &a.output)
}

fn rethreshold_cmd(a: crate::Rethreshold) -> Result<()> {
    let set = load_trajectories(&a.input)?;
    let cut = rethreshold(&set, ThresholdParams::new(a.gamma, a.delta)?)?;
    save_trajectories(&cut, &a.output)
}

#[derive(Serialize)]
struct RandomPlan {
    anchor: Option<u32>,
    frames: Vec<u32>,
    n: usize,
}

fn sample(a: crate::Sample) -> Result<()> {
    let set = load_trajectories(&a.trajectories)?;
    match a.mode {
        SampleMode::Anchor => {
            let anchor = match a.anchor_frame {
                Some(f) => f,
                None => {
                    let cfg = RunConfig {
                        seed: a.seed,
                        n_frames: a.n.max(1),
                        ..RunConfig::default()
                    };
                    select_frames(&set, &cfg)?.0
                }
            };
            print_json(&anchor_sample(&set, anchor, a.n)?)
        }
        SampleMode::Random => print_json(&RandomPlan {
            anchor: None,
            frames: random_sample(&set, a.n, a.seed)?,
            n: a.n,
        }),
    }
}

fn pairs(a: crate::Pairs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let sets = a
        .trajectories
        .iter()
        .map(|p| load_trajectories(p))
        .collect::<Result<Vec<_>>>()?;
    let views: Option<ViewPair> = a.views.as_deref().map(read_json).transpose()?;
    let batch = with_pool(a.threads, || build_batch(&sets, &cfg, views))??;
    match &a.output {
        Some(p) => {
            let mut w = create(p)?;
            write_jsonl(&batch, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_jsonl(&batch, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn load_batch(path: &Path, k: usize, tau: f64) -> Result<flowcorr::EmbeddingBatch> {
    Ok(split_embeddings(&read_pceb(open(path)?)?, k, tau)?)
}

fn loss(a: crate::Loss) -> Result<()> {
    let batch = load_batch(&a.embeddings, a.k, a.tau)?;
    println!("{}", info_nce_loss(&batch)?);
    Ok(())
}

fn gradcheck(a: crate::Gradcheck) -> Result<()> {
    let batch = load_batch(&a.embeddings, a.k, a.tau)?;
    let report = finite_difference_check(&batch, a.step, a.coords, a.seed)?;
    print_json(&report)?;
    if !(report.max_rel_err < a.tolerance) {
        return Err(CliError::Check(format!(
            "relative error {} >= {}",
            report.max_rel_err, a.tolerance
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    gamma: f32,
    delta: f32,
    count: u64,
    mean_span: f64,
    consistency_stops: u64,
}

fn sweep(a: crate::Sweep) -> Result<()> {
    let set = load_trajectories(&a.trajectories)?;
    let rows = a
        .deltas
        .iter()
        .map(|&d| {
            let s = trajectory_stats(&rethreshold(&set, ThresholdParams::new(a.gamma, d)?)?);
            Ok(SweepRow {
                gamma: a.gamma,
                delta: d,
                count: s.count,
                mean_span: s.mean_span,
                consistency_stops: s.stop_reasons.consistency,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    print_json(&rows)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::EncodeFlow(a) => encode_flow(a),
        Command::DecodeFlow(a) => decode_flow(a),
        Command::Synth(a) => {
            let spec: SceneSpec = read_json(&a.scene)?;
            save_flow(&generate(&spec)?, &a.output)
        }
        Command::Track(a) => track(a),
        Command::Rethreshold(a) => rethreshold_cmd(a),
        Command::Sample(a) => sample(a),
        Command::Pairs(a) => pairs(a),
        Command::Loss(a) => loss(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Stats(a) => print_json(&trajectory_stats(&load_trajectories(&a.trajectories)?)),
        Command::Sweep(a) => sweep(a),
    }
}
