//! Seeded random streams.
//!
//! Every stochastic operation draws from ChaCha8 (`rand_chacha`), keyed by
//! `seed_from_u64(seed)`. Independent sub-streams (one per seeded point, per
//! video, ...) are selected with the ChaCha stream counter, so a draw never
//! depends on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains keep unrelated consumers of one seed apart.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub(crate) enum Domain {
    SeedPoints = 0,
    RandomFrames = 1,
    Batch = 2,
    Anchor = 3,
    Videos = 4,
    Scenes = 5,
}

/// Generator for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain_id: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub(crate) fn domain_stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    stream(seed, domain as u64, index)
}

/// Per-video seed: `seed` mixed with the FNV-1a hash of the video id, so a
/// video's draws do not depend on which other videos share the run.
pub fn video_seed(seed: u64, video_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in video_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}
