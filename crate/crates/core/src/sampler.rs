//! Frame selection: anchor sampling and the uniform random-frame baseline.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain_stream, Domain};
use crate::tracker::TrajectorySet;

/// Frames chosen to pair with an anchor frame.
///
/// `selected_frames` is ordered by descending endpoint count; ties go to the
/// frame further from the anchor, then to the lower index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPlan {
    #[serde(rename = "anchor")]
    pub anchor_frame: u32,
    #[serde(rename = "frames")]
    pub selected_frames: Vec<u32>,
    /// Furthest-endpoint histogram over non-anchor frames.
    #[serde(rename = "counts")]
    pub endpoint_counts: BTreeMap<u32, u32>,
    #[serde(rename = "n")]
    pub n_requested: usize,
}

fn check_frame(set: &TrajectorySet, frame: u32) -> Result<()> {
    if frame >= set.num_frames {
        return Err(Error::FrameOutOfRange {
            frame,
            num_frames: set.num_frames,
        });
    }
    Ok(())
}

/// Indices of trajectories whose span contains `frame`.
pub fn active_trajectories(set: &TrajectorySet, frame: u32) -> Result<Vec<usize>> {
    check_frame(set, frame)?;
    Ok(set
        .trajectories
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_active(frame))
        .map(|(i, _)| i)
        .collect())
}

/// Endpoint of `[start, end]` furthest from `anchor`; the later one on ties.
#[inline]
pub fn furthest_endpoint(start: u32, end: u32, anchor: u32) -> u32 {
    if anchor - start > end - anchor {
        start
    } else {
        end
    }
}

/// Pick up to `n` frames where the trajectories active on `anchor` end
/// furthest away from it.
pub fn anchor_sample(set: &TrajectorySet, anchor: u32, n: usize) -> Result<AnchorPlan> {
    check_frame(set, anchor)?;
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for t in set.trajectories.iter().filter(|t| t.is_active(anchor)) {
        let f = furthest_endpoint(t.start_frame, t.end_frame(), anchor);
        if f != anchor {
            *counts.entry(f).or_default() += 1;
        }
    }
    let mut ranked: Vec<(u32, u32)> = counts.iter().map(|(&f, &c)| (f, c)).collect();
    ranked.sort_by(|&(fa, ca), &(fb, cb)| {
        cb.cmp(&ca)
            .then_with(|| fb.abs_diff(anchor).cmp(&fa.abs_diff(anchor)))
            .then_with(|| fa.cmp(&fb))
    });
    Ok(AnchorPlan {
        anchor_frame: anchor,
        selected_frames: ranked.into_iter().take(n).map(|(f, _)| f).collect(),
        endpoint_counts: counts,
        n_requested: n,
    })
}

/// `n` distinct frames drawn uniformly without replacement, in draw order.
pub fn random_sample(set: &TrajectorySet, n: usize, rng_seed: u64) -> Result<Vec<u32>> {
    random_frames(set.num_frames, n, rng_seed, 0)
}

/// [`random_sample`] on a bare frame count, using sub-stream `stream`.
pub fn random_frames(num_frames: u32, n: usize, rng_seed: u64, stream: u64) -> Result<Vec<u32>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, asked for {n}")));
    }
    if n > num_frames as usize {
        return Err(Error::InsufficientFrames {
            requested: n,
            available: num_frames as usize,
        });
    }
    let mut rng = domain_stream(rng_seed, Domain::RandomFrames, stream);
    Ok(index::sample(&mut rng, num_frames as usize, n)
        .into_iter()
        .map(|i| i as u32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{StopReason, ThresholdParams, Trajectory};

    pub(crate) fn spans(num_frames: u32, spans: &[(u32, u32)]) -> TrajectorySet {
        TrajectorySet {
            video_id: "spans".into(),
            width: 8,
            height: 8,
            num_frames,
            seed: 0,
            params: ThresholdParams::default(),
            trajectories: spans
                .iter()
                .map(|&(s, e)| Trajectory {
                    start_frame: s,
                    points: vec![[0.0, 0.0]; (e - s + 1) as usize],
                    residuals: None,
                    stop_reason: StopReason::EndOfVideo,
                })
                .collect(),
        }
    }

    #[test]
    fn active_sets() {
        let s = spans(8, &[(0, 5), (2, 5), (0, 3)]);
        assert_eq!(active_trajectories(&s, 2).unwrap(), vec![0, 1, 2]);
        assert_eq!(active_trajectories(&s, 4).unwrap(), vec![0, 1]);
        assert!(active_trajectories(&s, 7).unwrap().is_empty());
        assert!(active_trajectories(&s, 8).is_err());
    }

    #[test]
    fn three_span_example() {
        let s = spans(6, &[(0, 5), (2, 5), (0, 3)]);
        let p = anchor_sample(&s, 2, 1).unwrap();
        assert_eq!(p.selected_frames, vec![5]);
        assert_eq!(p.endpoint_counts, BTreeMap::from([(0, 1), (5, 2)]));
        assert_eq!(anchor_sample(&s, 2, 2).unwrap().selected_frames, vec![5, 0]);
        assert_eq!(anchor_sample(&s, 2, 10).unwrap().selected_frames, vec![5, 0]);
    }

    #[test]
    fn degenerate_span_gives_empty_plan() {
        let s = spans(6, &[(3, 3)]);
        let p = anchor_sample(&s, 3, 4).unwrap();
        assert!(p.selected_frames.is_empty());
        assert!(p.endpoint_counts.is_empty());
    }

    #[test]
    fn ties() {
        // Anchor mid-span picks the later endpoint.
        assert_eq!(furthest_endpoint(2, 6, 4), 6);
        // Equal counts: frame 9 is further from anchor 5 than frame 2.
        let s = spans(10, &[(2, 5), (5, 9)]);
        assert_eq!(anchor_sample(&s, 5, 2).unwrap().selected_frames, vec![9, 2]);
        // Equal counts and distance: lower index first.
        let s = spans(10, &[(1, 5), (5, 9)]);
        assert_eq!(anchor_sample(&s, 5, 2).unwrap().selected_frames, vec![1, 9]);
    }

    #[test]
    fn plan_json_shape() {
        let s = spans(6, &[(0, 5), (2, 5), (0, 3)]);
        let json = serde_json::to_value(anchor_sample(&s, 2, 1).unwrap()).unwrap();
        assert_eq!(json["anchor"], 2);
        assert_eq!(json["frames"], serde_json::json!([5]));
        assert_eq!(json["counts"]["5"], 2);
    }

    #[test]
    fn random_frames_contract() {
        let s = spans(12, &[]);
        let all = random_sample(&s, 12, 3).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..12).collect::<Vec<_>>());
        assert_eq!(random_sample(&s, 4, 9).unwrap(), random_sample(&s, 4, 9).unwrap());
        assert!(matches!(random_sample(&s, 13, 0), Err(Error::InsufficientFrames { .. })));
        assert!(random_sample(&s, 1, 0).is_err());
    }

    #[test]
    fn random_frames_are_uniform() {
        let (frames, n, draws) = (10u32, 3usize, 100_000u64);
        let mut counts = vec![0u64; frames as usize];
        for d in 0..draws {
            for f in random_frames(frames, n, 17, d).unwrap() {
                counts[f as usize] += 1;
            }
        }
        let p = n as f64 / frames as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "{c} vs {mean}");
        }
    }
}
