//! Stage backends: the compositor (stage 1), the bbox-prompted segmenter,
//! and the refiner (stage 2), each with wire and offline implementations.

pub mod keying;
pub mod mock;
mod profile;
pub mod segmenters;
pub mod wire;

use std::sync::Arc;

pub use mock::{MockCompositor, MockRefiner};
pub use profile::{
    BackendProfile, CompositorSelector, ProfileTable, RefinerSelector, SegmenterSelector,
    DEFAULT_MAX_SIDE, DEFAULT_TIMEOUT_S, MIN_MAX_SIDE,
};
pub use segmenters::{HeuristicSegmenter, OracleSegmenter};
pub use wire::{WireClient, WireMetadata};

use crate::error::Result;
use crate::imaging::{BinaryMask, PlacementBox, RasterImage};

pub struct ComposeRequest<'a> {
    pub masked_background: &'a RasterImage,
    pub box_mask: &'a BinaryMask,
    pub placement: &'a PlacementBox,
    pub reference: &'a RasterImage,
    pub seed: u64,
}

/// Stage-1 result; `sidecar` is the ground-truth footprint when the backend knows it.
#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub image: RasterImage,
    pub sidecar: Option<BinaryMask>,
}

pub struct SegmentRequest<'a> {
    pub image: &'a RasterImage,
    pub placement: &'a PlacementBox,
    /// Sidecar alpha recorded for the job, if any.
    pub sidecar: Option<&'a BinaryMask>,
    pub seed: u64,
}

pub struct RefineRequest<'a> {
    pub masked_background: &'a RasterImage,
    pub foreground_mask: &'a BinaryMask,
    pub placement: &'a PlacementBox,
    pub reference: &'a RasterImage,
    pub seed: u64,
}

pub trait Compositor: Send + Sync {
    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Stage1Output>;
}

/// Returns the raw (unrefined) foreground mask for the box prompt.
pub trait Segmenter: Send + Sync {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<BinaryMask>;
}

pub trait Refiner: Send + Sync {
    fn refine(&self, req: &RefineRequest<'_>) -> Result<RasterImage>;
}

/// One backend per stage.
#[derive(Clone)]
pub struct Backends {
    pub compositor: Arc<dyn Compositor>,
    pub segmenter: Arc<dyn Segmenter>,
    pub refiner: Arc<dyn Refiner>,
}

impl Backends {
    pub fn from_profile(profile: &BackendProfile) -> Result<Self> {
        profile.validate()?;
        let timeout = profile.timeout();
        let wire = |ep: &str, stage| WireClient::new(ep, stage, timeout, profile.max_side);
        let compositor: Arc<dyn Compositor> = match &profile.compositor {
            CompositorSelector::Mock => Arc::new(MockCompositor),
            CompositorSelector::Wire { endpoint } => Arc::new(wire(endpoint, "compose")?),
        };
        let segmenter: Arc<dyn Segmenter> = match &profile.segmenter {
            SegmenterSelector::Oracle => Arc::new(OracleSegmenter),
            SegmenterSelector::Heuristic { threshold } => Arc::new(HeuristicSegmenter {
                threshold: *threshold,
            }),
            SegmenterSelector::Wire { endpoint } => Arc::new(wire(endpoint, "segment")?),
        };
        let refiner: Arc<dyn Refiner> = match &profile.refiner {
            RefinerSelector::Mock => Arc::new(MockRefiner),
            RefinerSelector::Wire { endpoint } => Arc::new(wire(endpoint, "refine")?),
        };
        Ok(Self {
            compositor,
            segmenter,
            refiner,
        })
    }
}

/// Resolves a job's profile into concrete backends.
pub trait BackendFactory: Send + Sync {
    fn backends(&self, profile: &BackendProfile) -> Result<Backends>;
}

/// Builds backends straight from the profile selectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileBackends;

impl BackendFactory for ProfileBackends {
    fn backends(&self, profile: &BackendProfile) -> Result<Backends> {
        Backends::from_profile(profile)
    }
}
