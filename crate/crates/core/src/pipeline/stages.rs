//! Stage computations without persistence.

use crate::backends::{Backends, ComposeRequest, RefineRequest, SegmentRequest};
use crate::error::Result;
use crate::imaging::{BinaryMask, PlacementBox, RasterImage};
use crate::masking::{composite_preserving_background, erase, rasterize_box, refine_mask, ComponentPolicy};

#[derive(Debug, Clone)]
pub struct Stage1Result {
    pub box_mask: BinaryMask,
    pub masked_background: RasterImage,
    pub composite: RasterImage,
    pub sidecar: Option<BinaryMask>,
}

/// Box mask, erasure, then the stage-1 compositor.
pub fn authenticity_stage(
    backends: &Backends,
    background: &RasterImage,
    placement: &PlacementBox,
    reference: &RasterImage,
    seed: u64,
) -> Result<Stage1Result> {
    let box_mask = rasterize_box(placement, background.width(), background.height())?;
    let masked_background = erase(background, &box_mask)?;
    let out = backends.compositor.compose(&ComposeRequest {
        masked_background: &masked_background,
        box_mask: &box_mask,
        placement,
        reference,
        seed,
    })?;
    out.image.ensure_same_frame(background)?;
    Ok(Stage1Result {
        box_mask,
        masked_background,
        composite: out.image,
        sidecar: out.sidecar,
    })
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub raw: BinaryMask,
    pub mask: BinaryMask,
    pub masked_background: RasterImage,
}

/// Box-prompted segmentation of the stage-1 composite, refinement, and
/// re-erasure of the original background with the tighter mask.
#[allow(clippy::too_many_arguments)]
pub fn mask_stage(
    backends: &Backends,
    background: &RasterImage,
    composite: &RasterImage,
    placement: &PlacementBox,
    sidecar: Option<&BinaryMask>,
    seed: u64,
    margin: u32,
    policy: ComponentPolicy,
) -> Result<SegmentationResult> {
    let raw = backends.segmenter.segment(&SegmentRequest {
        image: composite,
        placement,
        sidecar,
        seed,
    })?;
    raw.ensure_dims(background.width(), background.height())?;
    let mask = refine_mask(&raw, placement, margin, policy)?;
    let masked_background = erase(background, &mask)?;
    Ok(SegmentationResult {
        raw,
        mask,
        masked_background,
    })
}

/// Stage-2 fill followed by the enforced background composite.
pub fn fidelity_stage(
    backends: &Backends,
    background: &RasterImage,
    masked_background: &RasterImage,
    mask: &BinaryMask,
    placement: &PlacementBox,
    reference: &RasterImage,
    seed: u64,
) -> Result<RasterImage> {
    let candidate = backends.refiner.refine(&RefineRequest {
        masked_background,
        foreground_mask: mask,
        placement,
        reference,
        seed,
    })?;
    candidate.ensure_same_frame(background)?;
    composite_preserving_background(&candidate, background, mask)
}

/// Results of all three stages for one reference, kept in memory.
#[derive(Debug, Clone)]
pub struct InMemoryRun {
    pub stage1: Stage1Result,
    pub segmentation: SegmentationResult,
    pub composite: RasterImage,
}

#[allow(clippy::too_many_arguments)]
pub fn run_in_memory(
    backends: &Backends,
    background: &RasterImage,
    placement: &PlacementBox,
    reference: &RasterImage,
    seed: u64,
    margin: u32,
    policy: ComponentPolicy,
) -> Result<InMemoryRun> {
    let stage1 = authenticity_stage(backends, background, placement, reference, seed)?;
    let segmentation = mask_stage(
        backends,
        background,
        &stage1.composite,
        placement,
        stage1.sidecar.as_ref(),
        seed,
        margin,
        policy,
    )?;
    let composite = fidelity_stage(
        backends,
        background,
        &segmentation.masked_background,
        &segmentation.mask,
        placement,
        reference,
        seed,
    )?;
    Ok(InMemoryRun {
        stage1,
        segmentation,
        composite,
    })
}
