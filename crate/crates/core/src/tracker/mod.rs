//! Point tracking through a flow volume with forward-backward consistency
//! termination.
//!
//! Each seed is advected forward one frame at a time by the bilinearly
//! sampled forward flow. After every step the backward flow is sampled at
//! the advected position and the pair `(a, b)` is recorded, where
//! `a = |w + w_hat|^2` and `b = |w|^2 + |w_hat|^2`. The step is kept iff
//! `a < gamma * b + delta`.

mod pctr;
mod seed;
mod stats;

pub use pctr::{read_trajectories, write_trajectories, PCTR_MAGIC, PCTR_VERSION};
pub use seed::{grid_points, grid_seeds, seed_points, Seed};
pub use stats::{trajectory_stats, StopCounts, TrajectoryStats};

use half::f16;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowstore::FlowVolume;

/// Occlusion threshold: a step survives iff `a < gamma * b + delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub gamma: f32,
    pub delta: f32,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self { gamma: 0.0, delta: 4.0 }
    }
}

impl ThresholdParams {
    /// Sentinel that only stops on image exit or video end. Sets built with
    /// it (and residuals) can be re-thresholded to any parameters.
    pub const PERMISSIVE: ThresholdParams = ThresholdParams {
        gamma: 0.0,
        delta: f32::MAX,
    };

    pub fn new(gamma: f32, delta: f32) -> Result<Self> {
        let p = Self { gamma, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.delta.is_finite() && self.gamma >= 0.0 && self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold needs finite gamma >= 0 and delta >= 0, got ({}, {})",
                self.gamma, self.delta
            )));
        }
        Ok(())
    }

    pub fn is_permissive(&self) -> bool {
        self.delta == f32::MAX
    }

    /// Strict consistency test.
    #[inline]
    pub fn accepts(&self, a: f64, b: f64) -> bool {
        a < self.gamma as f64 * b + self.delta as f64
    }

    /// True when every step kept under `self` is also kept under `other`.
    pub fn at_most_as_permissive_as(&self, other: &ThresholdParams) -> bool {
        other.is_permissive() || (self.gamma <= other.gamma && self.delta <= other.delta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum StopReason {
    Consistency = 0,
    OutOfBounds = 1,
    EndOfVideo = 2,
}

impl TryFrom<u8> for StopReason {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        match v {
            0 => Ok(StopReason::Consistency),
            1 => Ok(StopReason::OutOfBounds),
            2 => Ok(StopReason::EndOfVideo),
            other => Err(other),
        }
    }
}

/// Per-step consistency terms `(a, b)` in half precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub a: f16,
    pub b: f16,
}

impl Residual {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            a: f16::from_f64(a),
            b: f16::from_f64(b),
        }
    }
}

/// One point track over the contiguous frame span `[start_frame, end_frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start_frame: u32,
    pub points: Vec<[f32; 2]>,
    /// One entry per kept step, or `None` when residuals were not stored.
    pub residuals: Option<Vec<Residual>>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn len(&self) -> u32 {
        self.points.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn end_frame(&self) -> u32 {
        self.start_frame + self.len() - 1
    }

    pub fn is_active(&self, frame: u32) -> bool {
        self.start_frame <= frame && frame <= self.end_frame()
    }

    pub fn point_at(&self, frame: u32) -> Option<[f32; 2]> {
        if !self.is_active(frame) {
            return None;
        }
        Some(self.points[(frame - self.start_frame) as usize])
    }

    /// Index of the first stored step rejected by `params`, if any.
    fn first_rejected(&self, params: &ThresholdParams) -> Option<usize> {
        self.residuals
            .as_ref()?
            .iter()
            .position(|r| !params.accepts(r.a.to_f64(), r.b.to_f64()))
    }
}

/// All trajectories of one video plus the settings that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
    pub seed: u64,
    pub params: ThresholdParams,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn has_residuals(&self) -> bool {
        self.trajectories.iter().all(|t| t.residuals.is_some())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn check_point(volume: &FlowVolume, x: f64, y: f64) -> Result<()> {
    if volume.contains(x, y) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            x,
            y,
            width: volume.width(),
            height: volume.height(),
        })
    }
}

fn check_step_frame(volume: &FlowVolume, frame: u32) -> Result<()> {
    if frame + 1 >= volume.num_frames() {
        return Err(Error::FrameOutOfRange {
            frame,
            num_frames: volume.num_frames(),
        });
    }
    Ok(())
}

/// Move `point` from frame `t` to `t+1` by the forward flow sampled there.
pub fn advect(volume: &FlowVolume, t: u32, point: (f64, f64)) -> Result<(f64, f64)> {
    check_step_frame(volume, t)?;
    check_point(volume, point.0, point.1)?;
    let (u, v) = volume.forward(t).expect("checked frame").sample_unchecked(point.0, point.1);
    Ok((point.0 + u, point.1 + v))
}

/// Forward-backward residual `(a, b)` for one step from `point` at frame `t`.
///
/// Fails with `OutOfBounds` when the advected point leaves the image.
pub fn consistency_residual(volume: &FlowVolume, t: u32, point: (f64, f64)) -> Result<(f64, f64)> {
    check_step_frame(volume, t)?;
    check_point(volume, point.0, point.1)?;
    if !volume.has_backward() {
        return Err(Error::InvalidFlow("volume has no backward flow".into()));
    }
    match step(volume, t, point) {
        Step::Landed { a, b, .. } => Ok((a, b)),
        Step::Exited { to } => Err(Error::OutOfBounds {
            x: to.0,
            y: to.1,
            width: volume.width(),
            height: volume.height(),
        }),
    }
}

enum Step {
    Landed { to: (f64, f64), a: f64, b: f64 },
    Exited { to: (f64, f64) },
}

#[inline]
fn step(volume: &FlowVolume, t: u32, p: (f64, f64)) -> Step {
    let (u, v) = volume.forward_fields()[t as usize].sample_unchecked(p.0, p.1);
    let to = (p.0 + u, p.1 + v);
    if !volume.contains(to.0, to.1) {
        return Step::Exited { to };
    }
    let (bu, bv) = volume.backward_fields()[t as usize].sample_unchecked(to.0, to.1);
    let (su, sv) = (u + bu, v + bv);
    Step::Landed {
        to,
        a: su * su + sv * sv,
        b: u * u + v * v + bu * bu + bv * bv,
    }
}

fn track_one(volume: &FlowVolume, seed: Seed, params: &ThresholdParams, store_residuals: bool) -> Trajectory {
    let last = volume.num_frames() - 1;
    let mut points = vec![[seed.x, seed.y]];
    let mut residuals = store_residuals.then(Vec::new);
    let mut p = (seed.x as f64, seed.y as f64);
    let mut t = seed.frame;
    let stop_reason = loop {
        if t >= last {
            break StopReason::EndOfVideo;
        }
        match step(volume, t, p) {
            Step::Exited { .. } => break StopReason::OutOfBounds,
            Step::Landed { to, a, b } => {
                if !params.accepts(a, b) {
                    break StopReason::Consistency;
                }
                points.push([to.0 as f32, to.1 as f32]);
                if let Some(r) = residuals.as_mut() {
                    r.push(Residual::new(a, b));
                }
                p = to;
                t += 1;
            }
        }
    };
    Trajectory {
        start_frame: seed.frame,
        points,
        residuals,
        stop_reason,
    }
}

/// Grow every seed forward until occlusion, image exit, or the last frame.
///
/// Seeds are processed in parallel on the current rayon pool; output order
/// follows seed order, so results do not depend on the pool size.
pub fn track(
    volume: &FlowVolume,
    seeds: &[Seed],
    params: ThresholdParams,
    store_residuals: bool,
) -> Result<Vec<Trajectory>> {
    if volume.num_frames() < 2 {
        return Err(Error::DegenerateVideo(volume.num_frames()));
    }
    if !volume.has_backward() {
        return Err(Error::InvalidFlow("tracking needs backward flow".into()));
    }
    params.validate()?;
    for s in seeds {
        if s.frame >= volume.num_frames() {
            return Err(Error::FrameOutOfRange {
                frame: s.frame,
                num_frames: volume.num_frames(),
            });
        }
        check_point(volume, s.x as f64, s.y as f64)?;
    }
    Ok(seeds
        .par_iter()
        .map(|&s| track_one(volume, s, &params, store_residuals))
        .collect())
}

/// [`track`] packaged with its provenance.
pub fn track_video(
    video_id: impl Into<String>,
    volume: &FlowVolume,
    seeds: &[Seed],
    rng_seed: u64,
    params: ThresholdParams,
    store_residuals: bool,
) -> Result<TrajectorySet> {
    Ok(TrajectorySet {
        video_id: video_id.into(),
        width: volume.width(),
        height: volume.height(),
        num_frames: volume.num_frames(),
        seed: rng_seed,
        params,
        trajectories: track(volume, seeds, params, store_residuals)?,
    })
}

/// Truncate every trajectory at its first stored step rejected by `new_params`.
///
/// The set must carry residuals and must have been built with parameters at
/// least as permissive as `new_params` (or with [`ThresholdParams::PERMISSIVE`]).
pub fn rethreshold(set: &TrajectorySet, new_params: ThresholdParams) -> Result<TrajectorySet> {
    new_params.validate()?;
    if !set.has_residuals() {
        return Err(Error::MissingResiduals);
    }
    if !new_params.at_most_as_permissive_as(&set.params) {
        return Err(Error::Permissiveness {
            old_gamma: set.params.gamma,
            old_delta: set.params.delta,
            new_gamma: new_params.gamma,
            new_delta: new_params.delta,
        });
    }
    if new_params == set.params {
        return Ok(set.clone());
    }
    let trajectories = set
        .trajectories
        .iter()
        .map(|t| match t.first_rejected(&new_params) {
            None => t.clone(),
            Some(i) => Trajectory {
                start_frame: t.start_frame,
                points: t.points[..=i].to_vec(),
                residuals: t.residuals.as_ref().map(|r| r[..i].to_vec()),
                stop_reason: StopReason::Consistency,
            },
        })
        .collect();
    Ok(TrajectorySet {
        params: new_params,
        trajectories,
        ..set.clone()
    })
}
