//! Pixel correspondences between frames: tracked and static pair builders,
//! crop/flip view geometry, feature-grid indexing, and budgeted batching.

mod batch;
mod view;

pub use batch::{
    assemble_batch, write_jsonl, BatchConfig, BatchEntry, CorrespondenceBatch, SubsampleMode, VideoPairs,
};
pub use view::{apply_view, CropRect, ViewGeometry};

use crate::tracker::{grid_points, TrajectorySet};

/// A positive pair: the same scene point seen in two frames (or views).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelPair {
    pub frame_a: u32,
    pub frame_b: u32,
    pub pa: [f32; 2],
    pub pb: [f32; 2],
    /// Trajectory index, or grid-cell index for static pairs.
    pub track_id: u32,
}

/// One pair per trajectory alive on both frames, at its tracked positions.
pub fn pairs_from_trajectories(set: &TrajectorySet, frame_a: u32, frame_b: u32) -> Vec<PixelPair> {
    set.trajectories
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            Some(PixelPair {
                frame_a,
                frame_b,
                pa: t.point_at(frame_a)?,
                pb: t.point_at(frame_b)?,
                track_id: i as u32,
            })
        })
        .collect()
}

/// Identity correspondence on a regular grid (the zero-flow baseline).
/// With `frame_a == frame_b` this is the single-frame baseline.
pub fn static_pairs(frame_a: u32, frame_b: u32, grid_stride: u32, width: u32, height: u32) -> Vec<PixelPair> {
    grid_points(grid_stride, width, height)
        .into_iter()
        .enumerate()
        .map(|(i, p)| PixelPair {
            frame_a,
            frame_b,
            pa: p,
            pb: p,
            track_id: i as u32,
        })
        .collect()
}

/// Feature-grid cell `[row, col]` of a point in a `size = (W', H')` view.
#[inline]
pub fn feature_cell(p: [f32; 2], scale: u32, size: (u32, u32)) -> [u32; 2] {
    let scale = scale.max(1);
    let rows = size.1.div_ceil(scale).max(1);
    let cols = size.0.div_ceil(scale).max(1);
    let idx = |v: f32, n: u32| ((v.max(0.0) / scale as f32).floor() as u32).min(n - 1);
    [idx(p[1], rows), idx(p[0], cols)]
}

/// Map each pair's endpoints onto the feature grid (floor, then clamp).
pub fn to_feature_indices(
    pairs: &[PixelPair],
    scale: u32,
    size_a: (u32, u32),
    size_b: (u32, u32),
) -> Vec<[[u32; 2]; 2]> {
    pairs
        .iter()
        .map(|p| [feature_cell(p.pa, scale, size_a), feature_cell(p.pb, scale, size_b)])
        .collect()
}
