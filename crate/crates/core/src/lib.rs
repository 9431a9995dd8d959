//! Two-stage object insertion: a stage-1 compositor places the object in a
//! box, a box-prompted segmenter recovers its footprint, and a stage-2
//! refiner redraws it inside that footprint while the background outside it
//! is kept bit-exact.
//!
//! Pixels are `u8`. Resampling and similarity metrics are generic over
//! [`Scalar`] (`f32`/`f64`); counting metrics are exact [`Fraction`]s.

pub mod backends;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod masking;
pub mod pipeline;
pub mod scalar;

pub use backends::{BackendProfile, Backends, ProfileTable};
pub use error::{Error, Result};
pub use imaging::{BinaryMask, Channels, PlacementBox, RasterImage};
pub use masking::ComponentPolicy;
pub use pipeline::{Action, ArtifactStore, CompositionJob, JobState, Mode, Pipeline};
pub use scalar::{Fraction, Scalar};

/// Metric report with `f64` scores, as written by the batch runner.
pub type MetricReport = evaluation::MetricReport<f64>;
pub type MetricReportF32 = evaluation::MetricReport<f32>;
