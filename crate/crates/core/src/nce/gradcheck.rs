use rand::seq::index;
use serde::Serialize;

use super::{info_nce_grad, info_nce_loss, EmbeddingBatch, Negatives};
use crate::error::Result;
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max |numeric|` over the checked coordinates.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

#[derive(Clone, Copy)]
enum Slot {
    Query(usize, usize),
    Positive(usize, usize),
    Negative(usize),
}

fn slot_value(batch: &mut EmbeddingBatch, slot: Slot) -> &mut f64 {
    match slot {
        Slot::Query(i, k) => &mut batch.queries_mut()[[i, k]],
        Slot::Positive(i, k) => &mut batch.positives_mut()[[i, k]],
        Slot::Negative(flat) => match batch.negatives_mut() {
            Negatives::Shared(a) => &mut a.as_slice_mut().expect("standard layout")[flat],
            Negatives::PerQuery(a) => &mut a.as_slice_mut().expect("standard layout")[flat],
        },
    }
}

/// Compare [`info_nce_grad`] with central differences of [`info_nce_loss`].
///
/// With `max_coords`, a seeded random subset of input coordinates is checked.
pub fn finite_difference_check(
    batch: &EmbeddingBatch,
    step: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport> {
    let grads = info_nce_grad(batch)?;
    let (m, d) = batch.queries().dim();
    let mut slots: Vec<(Slot, f64)> = Vec::new();
    for i in 0..m {
        for k in 0..d {
            slots.push((Slot::Query(i, k), grads.queries[[i, k]]));
            slots.push((Slot::Positive(i, k), grads.positives[[i, k]]));
        }
    }
    let neg_grads: Vec<f64> = match &grads.negatives {
        Negatives::Shared(a) => a.iter().copied().collect(),
        Negatives::PerQuery(a) => a.iter().copied().collect(),
    };
    slots.extend(neg_grads.into_iter().enumerate().map(|(f, g)| (Slot::Negative(f), g)));

    let chosen: Vec<usize> = match max_coords {
        Some(n) if n < slots.len() => {
            let mut rng = stream(seed, 0x6772_6164, 0);
            index::sample(&mut rng, slots.len(), n).into_vec()
        }
        _ => (0..slots.len()).collect(),
    };

    let mut work = batch.clone();
    let (mut max_diff, mut max_num) = (0.0f64, 0.0f64);
    for &c in &chosen {
        let (slot, analytic) = slots[c];
        let orig = *slot_value(&mut work, slot);
        *slot_value(&mut work, slot) = orig + step;
        let up = info_nce_loss(&work)?;
        *slot_value(&mut work, slot) = orig - step;
        let down = info_nce_loss(&work)?;
        *slot_value(&mut work, slot) = orig;
        let numeric = (up - down) / (2.0 * step);
        max_diff = max_diff.max((analytic - numeric).abs());
        max_num = max_num.max(numeric.abs());
    }
    Ok(GradCheckReport {
        max_rel_err: if max_num > 0.0 { max_diff / max_num } else { max_diff },
        max_abs_err: max_diff,
        checked: chosen.len(),
    })
}
