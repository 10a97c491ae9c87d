//! End-to-end wiring: flow volumes to trajectory sets to a capped pair batch.
//!
//! Per-video work runs on a rayon pool and is merged by video id, so the
//! output depends only on inputs and [`RunConfig`], never on the pool size.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspond::{
    apply_view, assemble_batch, pairs_from_trajectories, static_pairs, BatchConfig, CorrespondenceBatch, PixelPair,
    SubsampleMode, VideoPairs, ViewGeometry,
};
use crate::error::{Error, Result};
use crate::flowstore::FlowVolume;
use crate::rng::{domain_stream, video_seed, Domain};
use crate::sampler::{anchor_sample, random_frames};
use crate::tracker::{seed_points, track_video, ThresholdParams, TrajectorySet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Anchor,
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correspondence {
    #[default]
    Tracked,
    /// Same pixel on both frames, on a grid of `grid_stride`.
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub gamma: f32,
    pub delta: f32,
    pub points_per_video: usize,
    /// Frames paired with the anchor (the anchor itself not included).
    pub n_frames: usize,
    pub budget: usize,
    pub videos_per_iteration: usize,
    pub feature_scale: u32,
    pub sampling: Sampling,
    pub correspondence: Correspondence,
    /// Grid stride for static correspondences; 0 means `feature_scale`.
    pub grid_stride: u32,
    pub subsample: SubsampleMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ThresholdParams::default();
        Self {
            seed: 0,
            gamma: p.gamma,
            delta: p.delta,
            points_per_video: 1000,
            n_frames: 1,
            budget: 65536,
            videos_per_iteration: 256,
            feature_scale: 4,
            sampling: Sampling::Anchor,
            correspondence: Correspondence::Tracked,
            grid_stride: 0,
            subsample: SubsampleMode::Uniform,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("points_per_video", self.points_per_video),
            ("n_frames", self.n_frames),
            ("budget", self.budget),
            ("videos_per_iteration", self.videos_per_iteration),
            ("feature_scale", self.feature_scale as usize),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        self.params().map(|_| ())
    }

    pub fn params(&self) -> Result<ThresholdParams> {
        ThresholdParams::new(self.gamma, self.delta)
    }

    fn stride(&self) -> u32 {
        if self.grid_stride == 0 {
            self.feature_scale
        } else {
            self.grid_stride
        }
    }
}

/// Crop/flip geometry for the two views of every frame pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    pub a: ViewGeometry,
    pub b: ViewGeometry,
}

/// Run `f` on a pool of `threads` workers (rayon's default when `None`).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Seed `points_per_video` points per video and track them.
pub fn track_videos(
    videos: &[(String, FlowVolume)],
    cfg: &RunConfig,
    store_residuals: bool,
) -> Result<Vec<TrajectorySet>> {
    cfg.validate()?;
    let params = cfg.params()?;
    let mut sets = videos
        .par_iter()
        .map(|(id, vol)| {
            let s = video_seed(cfg.seed, id);
            let seeds = seed_points(vol, cfg.points_per_video, s)?;
            track_video(id.clone(), vol, &seeds, s, params, store_residuals)
        })
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(sets)
}

/// Anchor frame and the frames paired with it, for one video.
pub fn select_frames(set: &TrajectorySet, cfg: &RunConfig) -> Result<(u32, Vec<u32>)> {
    let s = video_seed(cfg.seed, &set.video_id);
    match cfg.sampling {
        Sampling::Anchor => {
            let anchor = domain_stream(s, Domain::Anchor, 0).gen_range(0..set.num_frames.max(1));
            let plan = anchor_sample(set, anchor, cfg.n_frames)?;
            Ok((anchor, plan.selected_frames))
        }
        Sampling::Random => {
            let frames = random_frames(set.num_frames, cfg.n_frames + 1, s, 0)?;
            Ok((frames[0], frames[1..].to_vec()))
        }
    }
}

fn video_pairs(set: &TrajectorySet, cfg: &RunConfig, views: &ViewPair) -> Result<VideoPairs> {
    views.a.validate(set.width, set.height)?;
    views.b.validate(set.width, set.height)?;
    let (anchor, frames) = select_frames(set, cfg)?;
    let mut pairs: Vec<PixelPair> = Vec::new();
    for f in frames {
        let raw = match cfg.correspondence {
            Correspondence::Tracked => pairs_from_trajectories(set, anchor, f),
            Correspondence::Static => static_pairs(anchor, f, cfg.stride(), set.width, set.height),
        };
        pairs.extend(apply_view(&raw, &views.a, &views.b));
    }
    Ok(VideoPairs {
        video_id: set.video_id.clone(),
        pairs,
    })
}

/// Pick up to `videos_per_iteration` videos, pair frames in each, and cap
/// the merged pairs at the budget.
///
/// Without `views`, every video must share one frame size and the identity
/// view is used.
pub fn build_batch(sets: &[TrajectorySet], cfg: &RunConfig, views: Option<ViewPair>) -> Result<CorrespondenceBatch> {
    cfg.validate()?;
    let views = match views {
        Some(v) => v,
        None => {
            let (w, h) = sets.first().map_or((1, 1), |s| (s.width, s.height));
            if let Some(s) = sets.iter().find(|s| (s.width, s.height) != (w, h)) {
                return Err(Error::Shape(format!(
                    "video {} is {}x{}, expected {w}x{h}; pass explicit views",
                    s.video_id, s.width, s.height
                )));
            }
            let id = ViewGeometry::identity(w, h);
            ViewPair { a: id, b: id }
        }
    };

    let mut order: Vec<&TrajectorySet> = sets.iter().collect();
    order.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    if order.len() > cfg.videos_per_iteration {
        let mut rng = domain_stream(cfg.seed, Domain::Videos, 0);
        let mut picks = index::sample(&mut rng, order.len(), cfg.videos_per_iteration).into_vec();
        picks.sort_unstable();
        order = picks.into_iter().map(|i| order[i]).collect();
    }

    let per_video = order
        .par_iter()
        .map(|s| video_pairs(s, cfg, &views))
        .collect::<Result<Vec<_>>>()?;

    assemble_batch(
        per_video,
        &BatchConfig {
            budget: cfg.budget,
            seed: cfg.seed,
            scale: cfg.feature_scale,
            view_size_a: views.a.out_size,
            view_size_b: views.b.out_size,
            mode: cfg.subsample,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspond::write_jsonl;
    use crate::synth::{generate, Motion, SceneSpec};

    fn videos() -> Vec<(String, FlowVolume)> {
        let spec = |u: f64| SceneSpec {
            motion: Motion::Constant { u, v: 0.25 },
            size: [40, 32],
            frames: 8,
            backward: Default::default(),
        };
        vec![
            ("b".to_string(), generate(&spec(0.5)).unwrap()),
            ("a".to_string(), generate(&spec(-0.75)).unwrap()),
        ]
    }

    fn cfg() -> RunConfig {
        RunConfig {
            seed: 11,
            points_per_video: 200,
            budget: 150,
            ..Default::default()
        }
    }

    fn run(threads: usize) -> Vec<u8> {
        with_pool(Some(threads), || {
            let sets = track_videos(&videos(), &cfg(), false).unwrap();
            let batch = build_batch(&sets, &cfg(), None).unwrap();
            let mut out = Vec::new();
            write_jsonl(&batch, &mut out).unwrap();
            out
        })
        .unwrap()
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.gamma, c.delta), (0.0, 4.0));
        assert_eq!((c.points_per_video, c.budget, c.videos_per_iteration, c.feature_scale), (1000, 65536, 256, 4));
        let parsed: RunConfig = serde_json::from_str(r#"{"delta": 8, "sampling": "random"}"#).unwrap();
        assert_eq!(parsed.delta, 8.0);
        assert_eq!(parsed.sampling, Sampling::Random);
        assert_eq!(parsed.budget, 65536);
        assert!(serde_json::from_str::<RunConfig>(r#"{"dleta": 8}"#).is_err());
        assert!(RunConfig { n_frames: 0, ..c }.validate().is_err());
    }

    #[test]
    fn deterministic_across_pools() {
        let one = run(1);
        assert!(!one.is_empty());
        assert_eq!(one, run(1));
        assert_eq!(one, run(4));
    }

    #[test]
    fn random_sampling_needs_enough_frames() {
        let sets = track_videos(&videos(), &cfg(), false).unwrap();
        let c = RunConfig {
            sampling: Sampling::Random,
            n_frames: 8,
            ..cfg()
        };
        assert!(matches!(build_batch(&sets, &c, None), Err(Error::InsufficientFrames { .. })));
        let c = RunConfig { n_frames: 3, ..c };
        let batch = build_batch(&sets, &c, None).unwrap();
        assert!(batch.len() <= 150);
    }

    #[test]
    fn video_cap() {
        let sets = track_videos(&videos(), &cfg(), false).unwrap();
        let c = RunConfig {
            videos_per_iteration: 1,
            budget: 65536,
            ..cfg()
        };
        let batch = build_batch(&sets, &c, None).unwrap();
        let ids: std::collections::BTreeSet<_> = batch.entries.iter().map(|e| e.video_id.as_str()).collect();
        assert!(ids.len() <= 1);
    }
}
