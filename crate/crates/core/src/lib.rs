//! Dense pixel correspondences from precomputed optical flow.
//!
//! The pipeline turns a video's forward/backward flow into positive pixel
//! pairs for dense contrastive learning:
//!
//! 1. [`flowstore`]: 8-bit flow storage (FlowPack) and bilinear sampling.
//! 2. [`tracker`]: seed points uniformly in space and time and advect them
//!    until the forward-backward consistency test fails.
//! 3. [`sampler`]: choose frames to pair with an anchor frame.
//! 4. [`correspond`]: pair tracked points across frames and views, map them
//!    to feature-grid cells, and cap the batch.
//! 5. [`nce`]: evaluate the InfoNCE loss and its gradient on embeddings.
//!
//! [`synth`] builds flow volumes with closed-form ground truth, and
//! [`pipeline`] wires the stages together deterministically.

mod binio;
pub mod correspond;
pub mod error;
pub mod flowstore;
pub mod nce;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod tracker;

pub use correspond::{CorrespondenceBatch, PixelPair, ViewGeometry};
pub use error::{Error, Result};
pub use flowstore::{FlowDirection, FlowField, FlowVolume};
pub use nce::{EmbeddingBatch, Negatives, ProjectionHead};
pub use sampler::AnchorPlan;
pub use tracker::{Seed, StopReason, ThresholdParams, Trajectory, TrajectorySet};
