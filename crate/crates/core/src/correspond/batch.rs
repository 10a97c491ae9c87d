use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{feature_cell, PixelPair};
use crate::error::{Error, Result};
use crate::rng::{domain_stream, Domain};

/// Candidate pairs from one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPairs {
    pub video_id: String,
    pub pairs: Vec<PixelPair>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleMode {
    /// Uniform without replacement over all candidates.
    #[default]
    Uniform,
    /// Even split of the budget across videos, each sampled independently.
    /// Unused quota is not redistributed.
    PerVideo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchConfig {
    pub budget: usize,
    pub seed: u64,
    /// Feature stride.
    pub scale: u32,
    pub view_size_a: (u32, u32),
    pub view_size_b: (u32, u32),
    pub mode: SubsampleMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchEntry {
    pub video_id: String,
    pub pair: PixelPair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceBatch {
    pub entries: Vec<BatchEntry>,
    /// `[[row_a, col_a], [row_b, col_b]]` per entry.
    pub feature_indices: Vec<[[u32; 2]; 2]>,
    pub budget: usize,
    pub scale: u32,
}

impl CorrespondenceBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Merge per-video pairs (ordered by video id) and cap them at the budget.
pub fn assemble_batch(mut videos: Vec<VideoPairs>, cfg: &BatchConfig) -> Result<CorrespondenceBatch> {
    if cfg.budget == 0 {
        return Err(Error::InvalidArgument("pair budget must be at least 1".into()));
    }
    if cfg.scale == 0 {
        return Err(Error::InvalidArgument("feature scale must be at least 1".into()));
    }
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let kept: Vec<(usize, usize)> = match cfg.mode {
        SubsampleMode::Uniform => {
            let flat: Vec<(usize, usize)> = videos
                .iter()
                .enumerate()
                .flat_map(|(v, vp)| (0..vp.pairs.len()).map(move |i| (v, i)))
                .collect();
            if flat.len() <= cfg.budget {
                flat
            } else {
                let mut rng = domain_stream(cfg.seed, Domain::Batch, 0);
                let mut picks = index::sample(&mut rng, flat.len(), cfg.budget).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| flat[i]).collect()
            }
        }
        SubsampleMode::PerVideo => {
            let nv = videos.len().max(1);
            let (base, extra) = (cfg.budget / nv, cfg.budget % nv);
            let mut out = Vec::new();
            for (v, vp) in videos.iter().enumerate() {
                let quota = base + usize::from(v < extra);
                let n = vp.pairs.len();
                if n <= quota {
                    out.extend((0..n).map(|i| (v, i)));
                } else {
                    let mut rng = domain_stream(cfg.seed, Domain::Batch, 1 + v as u64);
                    let mut picks = index::sample(&mut rng, n, quota).into_vec();
                    picks.sort_unstable();
                    out.extend(picks.into_iter().map(|i| (v, i)));
                }
            }
            out
        }
    };

    let entries: Vec<BatchEntry> = kept
        .into_iter()
        .map(|(v, i)| BatchEntry {
            video_id: videos[v].video_id.clone(),
            pair: videos[v].pairs[i],
        })
        .collect();
    let feature_indices = entries
        .iter()
        .map(|e| {
            [
                feature_cell(e.pair.pa, cfg.scale, cfg.view_size_a),
                feature_cell(e.pair.pb, cfg.scale, cfg.view_size_b),
            ]
        })
        .collect();
    Ok(CorrespondenceBatch {
        entries,
        feature_indices,
        budget: cfg.budget,
        scale: cfg.scale,
    })
}

#[derive(Serialize)]
struct JsonPair<'a> {
    vid: &'a str,
    fa: u32,
    fb: u32,
    pa: [f32; 2],
    pb: [f32; 2],
    ia: [u32; 2],
    ib: [u32; 2],
}

/// One JSON object per line: `{"vid", "fa", "fb", "pa", "pb", "ia", "ib"}`.
pub fn write_jsonl<W: Write>(batch: &CorrespondenceBatch, sink: &mut W) -> Result<()> {
    for (e, [ia, ib]) in batch.entries.iter().zip(&batch.feature_indices) {
        let line = JsonPair {
            vid: &e.video_id,
            fa: e.pair.frame_a,
            fb: e.pair.frame_b,
            pa: e.pair.pa,
            pb: e.pair.pb,
            ia: *ia,
            ib: *ib,
        };
        serde_json::to_writer(&mut *sink, &line).map_err(std::io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}
