use std::collections::BTreeMap;

use serde::Serialize;

use super::{StopReason, TrajectorySet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StopCounts {
    pub consistency: u64,
    pub out_of_bounds: u64,
    pub end_of_video: u64,
}

/// Summary of a trajectory set. Spans count frames, so a lone seed has span 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub count: u64,
    pub span_histogram: BTreeMap<u32, u64>,
    pub stop_reasons: StopCounts,
    pub mean_span: f64,
}

pub fn trajectory_stats(set: &TrajectorySet) -> TrajectoryStats {
    let mut stats = TrajectoryStats::default();
    let mut total = 0u64;
    for t in &set.trajectories {
        stats.count += 1;
        total += t.len() as u64;
        *stats.span_histogram.entry(t.len()).or_default() += 1;
        match t.stop_reason {
            StopReason::Consistency => stats.stop_reasons.consistency += 1,
            StopReason::OutOfBounds => stats.stop_reasons.out_of_bounds += 1,
            StopReason::EndOfVideo => stats.stop_reasons.end_of_video += 1,
        }
    }
    if stats.count > 0 {
        stats.mean_span = total as f64 / stats.count as f64;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::{ThresholdParams, Trajectory};

    #[test]
    fn empty_set() {
        let set = TrajectorySet {
            video_id: String::new(),
            width: 1,
            height: 1,
            num_frames: 2,
            seed: 0,
            params: ThresholdParams::default(),
            trajectories: vec![],
        };
        let s = trajectory_stats(&set);
        assert_eq!(s, TrajectoryStats::default());
    }

    #[test]
    fn counts_and_mean() {
        let t = |len: usize, reason| Trajectory {
            start_frame: 0,
            points: vec![[0.0, 0.0]; len],
            residuals: None,
            stop_reason: reason,
        };
        let set = TrajectorySet {
            video_id: String::new(),
            width: 1,
            height: 1,
            num_frames: 9,
            seed: 0,
            params: ThresholdParams::default(),
            trajectories: vec![
                t(1, StopReason::Consistency),
                t(4, StopReason::OutOfBounds),
                t(4, StopReason::EndOfVideo),
            ],
        };
        let s = trajectory_stats(&set);
        assert_eq!(s.count, 3);
        assert_eq!(s.span_histogram.values().sum::<u64>(), 3);
        assert_eq!(s.span_histogram[&4], 2);
        assert_eq!(s.mean_span, 3.0);
        assert_eq!(s.stop_reasons.consistency, 1);
    }
}
