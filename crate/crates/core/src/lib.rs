//! Skew-aware tooling for crowd counting pipelines.
//!
//! Crowd counting datasets have heavy-tailed count distributions: many images
//! with a handful of people and a sparse tail reaching into the thousands.
//! This crate works on plain count and point files and provides:
//!
//! - [`binning`]: MAP-optimal partitioning of the count range into contiguous
//!   bins under a geometric prior, with a cross-validated search for the prior
//!   parameter.
//! - [`sampling`]: balanced per-epoch minibatch schedules (round-robin or
//!   random-bin) drawn from those bins.
//! - [`loss`]: the bin-aware loss kernel and its combination with a model loss.
//! - [`metrics`]: per-bin and pooled error statistics, TPER curves and GAME.
//!
//! Nothing here touches image pixels or a neural-network framework.

pub mod binning;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
mod numeric;
pub mod sampling;

pub use data::{
    Bin, BinMeta, BinSpec, CountHistogram, CountRecord, Format, PointAnnotatedRecord,
    PredictionRecord,
};
pub use error::{BinningError, DataError, MetricsError, SamplingError};
