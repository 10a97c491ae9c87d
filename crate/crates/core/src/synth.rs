//! Synthetic flow volumes with closed-form motion, used as ground truth for
//! tracking, sampling, and correspondence tests.
//!
//! Every scene is a per-frame motion map `M_t`. The forward field at lattice
//! point `p` is `M_t(p) - p` and the exact-inverse backward field at `q` is
//! `M_t^{-1}(q) - q`. Translations, rotations and zooms give affine fields,
//! which bilinear sampling reproduces exactly. The occluder scene and
//! corrupted backward regions are piecewise constant; near their edges the
//! sampled field blends, and the oracles report such locations as
//! ambiguous instead of guessing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowstore::{FlowDirection, FlowField, FlowVolume};
use crate::rng::{domain_stream, Domain};
use crate::tracker::{Seed, StopReason, ThresholdParams};

/// Axis-aligned closed rectangle `[x, x+w] x [y, y+h]` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Inside,
    Outside,
    Edge,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.w && p[1] >= self.y && p[1] <= self.y + self.h
    }

    fn shifted(&self, by: [f64; 2]) -> Rect {
        Rect {
            x: self.x + by[0],
            y: self.y + by[1],
            ..*self
        }
    }

    /// Inside/outside as seen by bilinear sampling of the lattice indicator.
    /// Points within one pixel of the boundary are `Edge`.
    fn side(&self, p: [f64; 2]) -> Side {
        let (x1, y1) = (self.x + self.w, self.y + self.h);
        if p[0] >= self.x + 1.0 && p[0] <= x1 - 1.0 && p[1] >= self.y + 1.0 && p[1] <= y1 - 1.0 {
            Side::Inside
        } else if p[0] < self.x - 1.0 || p[0] > x1 + 1.0 || p[1] < self.y - 1.0 || p[1] > y1 + 1.0 {
            Side::Outside
        } else {
            Side::Edge
        }
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w >= 0.0 && self.h >= 0.0
    }
}

/// Per-frame motion of the scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Motion {
    Zero,
    Constant { u: f64, v: f64 },
    Rotation { center: [f64; 2], degrees_per_frame: f64 },
    Zoom { center: [f64; 2], scale_per_frame: f64 },
    /// A rectangle (at frame 0) moving by `velocity` per frame over a
    /// static background.
    Occluder { rect: Rect, velocity: [f64; 2] },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BackwardMode {
    #[default]
    ExactInverse,
    /// Inside `region` the backward flow is replaced by `vector`, for the
    /// backward fields of steps `steps[0]..=steps[1]` (all steps if absent).
    Corrupted {
        region: Rect,
        vector: [f64; 2],
        #[serde(default)]
        steps: Option<[u32; 2]>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub motion: Motion,
    /// `[width, height]`
    pub size: [u32; 2],
    pub frames: u32,
    #[serde(default)]
    pub backward: BackwardMode,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("scene: {m}")));
        if self.frames < 2 {
            return Err(Error::DegenerateVideo(self.frames));
        }
        if self.size[0] == 0 || self.size[1] == 0 {
            return bad("empty image size");
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self.motion {
            Motion::Zero => true,
            Motion::Constant { u, v } => finite(&[u, v]),
            Motion::Rotation { center, degrees_per_frame } => finite(&[center[0], center[1], degrees_per_frame]),
            Motion::Zoom { center, scale_per_frame } => {
                finite(&[center[0], center[1], scale_per_frame]) && scale_per_frame > 0.0
            }
            Motion::Occluder { rect, velocity } => rect.is_finite() && finite(&velocity),
        };
        if !ok {
            return bad("non-finite or invalid motion parameters");
        }
        if let BackwardMode::Corrupted { region, vector, .. } = self.backward {
            if !region.is_finite() || !finite(&vector) {
                return bad("non-finite corruption parameters");
            }
        }
        Ok(())
    }

    fn rotation(deg: f64) -> [[f64; 2]; 2] {
        let (s, c) = deg.to_radians().sin_cos();
        [[c, -s], [s, c]]
    }

    /// `M_t(p)`: where the scene point at `p` on frame `t` is on frame `t+1`.
    pub fn motion_map(&self, t: u32, p: [f64; 2]) -> [f64; 2] {
        match self.motion {
            Motion::Zero => p,
            Motion::Constant { u, v } => [p[0] + u, p[1] + v],
            Motion::Rotation { center, degrees_per_frame } => rotate_about(center, Self::rotation(degrees_per_frame), p),
            Motion::Zoom { center, scale_per_frame: s } => {
                [center[0] + s * (p[0] - center[0]), center[1] + s * (p[1] - center[1])]
            }
            Motion::Occluder { rect, velocity } => {
                if rect.shifted([velocity[0] * t as f64, velocity[1] * t as f64]).contains(p) {
                    [p[0] + velocity[0], p[1] + velocity[1]]
                } else {
                    p
                }
            }
        }
    }

    /// Exact inverse of [`Self::motion_map`] for the visible surface at `q`
    /// on frame `t+1`.
    pub fn inverse_map(&self, t: u32, q: [f64; 2]) -> [f64; 2] {
        match self.motion {
            Motion::Zero => q,
            Motion::Constant { u, v } => [q[0] - u, q[1] - v],
            Motion::Rotation { center, degrees_per_frame } => rotate_about(center, Self::rotation(-degrees_per_frame), q),
            Motion::Zoom { center, scale_per_frame: s } => {
                [center[0] + (q[0] - center[0]) / s, center[1] + (q[1] - center[1]) / s]
            }
            Motion::Occluder { rect, velocity } => {
                let k = (t + 1) as f64;
                if rect.shifted([velocity[0] * k, velocity[1] * k]).contains(q) {
                    [q[0] - velocity[0], q[1] - velocity[1]]
                } else {
                    q
                }
            }
        }
    }

    fn corruption(&self, t: u32) -> Option<(Rect, [f64; 2])> {
        match self.backward {
            BackwardMode::ExactInverse => None,
            BackwardMode::Corrupted { region, vector, steps } => match steps {
                Some([a, b]) if t < a || t > b => None,
                _ => Some((region, vector)),
            },
        }
    }

    fn forward_at(&self, t: u32, p: [f64; 2]) -> [f64; 2] {
        let m = self.motion_map(t, p);
        [m[0] - p[0], m[1] - p[1]]
    }

    fn backward_at(&self, t: u32, q: [f64; 2]) -> [f64; 2] {
        if let Some((region, vector)) = self.corruption(t) {
            if region.contains(q) {
                return vector;
            }
        }
        let m = self.inverse_map(t, q);
        [m[0] - q[0], m[1] - q[1]]
    }

    /// Forward field for step `t` and whether the piecewise parts of the
    /// scene put `p` on an edge.
    fn forward_side(&self, t: u32, p: [f64; 2]) -> Side {
        match self.motion {
            Motion::Occluder { rect, velocity } => {
                rect.shifted([velocity[0] * t as f64, velocity[1] * t as f64]).side(p)
            }
            _ => Side::Inside,
        }
    }

    fn backward_side(&self, t: u32, q: [f64; 2]) -> Side {
        if let Some((region, _)) = self.corruption(t) {
            if region.side(q) == Side::Edge {
                return Side::Edge;
            }
        }
        match self.motion {
            Motion::Occluder { rect, velocity } => {
                let k = (t + 1) as f64;
                rect.shifted([velocity[0] * k, velocity[1] * k]).side(q)
            }
            _ => Side::Inside,
        }
    }
}

fn rotate_about(c: [f64; 2], r: [[f64; 2]; 2], p: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    [c[0] + r[0][0] * dx + r[0][1] * dy, c[1] + r[1][0] * dx + r[1][1] * dy]
}

/// Sample the scene's forward and backward fields on the pixel lattice.
pub fn generate(spec: &SceneSpec) -> Result<FlowVolume> {
    spec.validate()?;
    let [w, h] = spec.size;
    let steps = spec.frames - 1;
    let mut forward = Vec::with_capacity(steps as usize);
    let mut backward = Vec::with_capacity(steps as usize);
    for t in 0..steps {
        forward.push(FlowField::from_fn(w, h, FlowDirection::Forward, |x, y| {
            let f = spec.forward_at(t, [x, y]);
            (f[0], f[1])
        })?);
        backward.push(FlowField::from_fn(w, h, FlowDirection::Backward, |x, y| {
            let b = spec.backward_at(t, [x, y]);
            (b[0], b[1])
        })?);
    }
    FlowVolume::new(spec.frames, w, h, forward, backward)
}

/// Closed-form positions of the scene point starting at `seed`, for
/// `steps` frames after `seed.frame` (no occlusion or bounds logic).
pub fn ground_truth_track(spec: &SceneSpec, seed: Seed, steps: u32) -> Vec<[f64; 2]> {
    let p = [seed.x as f64, seed.y as f64];
    (0..=steps)
        .map(|k| {
            let kf = k as f64;
            match spec.motion {
                Motion::Zero => p,
                Motion::Constant { u, v } => [p[0] + kf * u, p[1] + kf * v],
                Motion::Rotation { center, degrees_per_frame } => {
                    rotate_about(center, SceneSpec::rotation(kf * degrees_per_frame), p)
                }
                Motion::Zoom { center, scale_per_frame } => {
                    let s = scale_per_frame.powi(k as i32);
                    [center[0] + s * (p[0] - center[0]), center[1] + s * (p[1] - center[1])]
                }
                Motion::Occluder { rect, velocity } => {
                    let t0 = seed.frame as f64;
                    if rect.shifted([velocity[0] * t0, velocity[1] * t0]).contains(p) {
                        [p[0] + kf * velocity[0], p[1] + kf * velocity[1]]
                    } else {
                        p
                    }
                }
            }
        })
        .collect()
}

/// Number of frames, starting at `seed.frame`, during which the scene point
/// seeded there stays visible. Only background points under an occluder
/// ever disappear; past that frame flow no longer describes the point.
pub fn visible_frames(spec: &SceneSpec, seed: Seed) -> u32 {
    let total = spec.frames - seed.frame;
    let Motion::Occluder { rect, velocity } = spec.motion else {
        return total;
    };
    let p = [seed.x as f64, seed.y as f64];
    let at = |t: u32| rect.shifted([velocity[0] * t as f64, velocity[1] * t as f64]);
    if at(seed.frame).contains(p) {
        return total;
    }
    (1..total).find(|&k| at(seed.frame + k).contains(p)).unwrap_or(total)
}

/// Outcome predicted by evaluating the consistency test on the continuous
/// motion field along the advected path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExpectedStop {
    /// Tracking keeps frames `seed.frame..=end_frame` and stops for `reason`.
    Determined { end_frame: u32, reason: StopReason },
    /// The step from `frame` touches a flow discontinuity, an image edge,
    /// or the threshold boundary (within the guard band), so sampling
    /// precision decides the outcome.
    Ambiguous { frame: u32 },
}

/// Default guard band on `a - (gamma * b + delta)`, in px².
pub const THRESHOLD_GUARD: f64 = 1e-2;
/// Guard band on distance to the image border, in px.
pub const BOUNDS_GUARD: f64 = 1e-4;

pub fn expected_stop(spec: &SceneSpec, seed: Seed, params: ThresholdParams) -> ExpectedStop {
    expected_stop_with_guard(spec, seed, params, THRESHOLD_GUARD)
}

pub fn expected_stop_with_guard(spec: &SceneSpec, seed: Seed, params: ThresholdParams, guard: f64) -> ExpectedStop {
    let (xmax, ymax) = ((spec.size[0] - 1) as f64, (spec.size[1] - 1) as f64);
    let last = spec.frames - 1;
    let mut p = [seed.x as f64, seed.y as f64];
    let mut t = seed.frame;
    while t < last {
        if spec.forward_side(t, p) == Side::Edge {
            return ExpectedStop::Ambiguous { frame: t };
        }
        let w = spec.forward_at(t, p);
        let q = [p[0] + w[0], p[1] + w[1]];
        let margin = q[0].min(q[1]).min(xmax - q[0]).min(ymax - q[1]);
        if margin.abs() < BOUNDS_GUARD {
            return ExpectedStop::Ambiguous { frame: t };
        }
        if margin < 0.0 {
            return ExpectedStop::Determined {
                end_frame: t,
                reason: StopReason::OutOfBounds,
            };
        }
        if spec.backward_side(t, q) == Side::Edge {
            return ExpectedStop::Ambiguous { frame: t };
        }
        let wb = spec.backward_at(t, q);
        let (su, sv) = (w[0] + wb[0], w[1] + wb[1]);
        let a = su * su + sv * sv;
        let b = w[0] * w[0] + w[1] * w[1] + wb[0] * wb[0] + wb[1] * wb[1];
        let bound = params.gamma as f64 * b + params.delta as f64;
        if (a - bound).abs() < guard {
            return ExpectedStop::Ambiguous { frame: t };
        }
        if a >= bound {
            return ExpectedStop::Determined {
                end_frame: t,
                reason: StopReason::Consistency,
            };
        }
        p = q;
        t += 1;
    }
    ExpectedStop::Determined {
        end_frame: last,
        reason: StopReason::EndOfVideo,
    }
}

/// A random scene for fuzzing: any motion kind, 16..=64 px sides, 3..=16
/// frames, and a corrupted backward region half of the time.
pub fn random_scene(seed: u64) -> SceneSpec {
    let mut rng = domain_stream(seed, Domain::Scenes, 0);
    let (w, h) = (rng.gen_range(16u32..=64), rng.gen_range(16u32..=64));
    let (wf, hf) = (w as f64, h as f64);
    let rect = |rng: &mut rand_chacha::ChaCha8Rng| Rect {
        x: rng.gen_range(-wf / 2.0..wf),
        y: rng.gen_range(-hf / 2.0..hf),
        w: rng.gen_range(4.0..wf / 2.0),
        h: rng.gen_range(4.0..hf / 2.0),
    };
    let center = [rng.gen_range(0.0..wf), rng.gen_range(0.0..hf)];
    let motion = match rng.gen_range(0..5) {
        0 => Motion::Zero,
        1 => Motion::Constant {
            u: rng.gen_range(-3.0..3.0),
            v: rng.gen_range(-3.0..3.0),
        },
        2 => Motion::Rotation {
            center,
            degrees_per_frame: rng.gen_range(-5.0..5.0),
        },
        3 => Motion::Zoom {
            center,
            scale_per_frame: rng.gen_range(0.95..1.05),
        },
        _ => Motion::Occluder {
            rect: rect(&mut rng),
            velocity: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        },
    };
    let frames = rng.gen_range(3u32..=16);
    let backward = if rng.gen_bool(0.5) {
        BackwardMode::ExactInverse
    } else {
        let steps = if rng.gen_bool(0.5) {
            let a = rng.gen_range(0..frames - 1);
            Some([a, rng.gen_range(a..frames - 1)])
        } else {
            None
        };
        BackwardMode::Corrupted {
            region: rect(&mut rng),
            vector: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
            steps,
        }
    };
    SceneSpec {
        motion,
        size: [w, h],
        frames,
        backward,
    }
}
