//! Box rasterisation, erasure, mask refinement and background-preserving
//! compositing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    connected_components, dilate, fill_holes, BinaryMask, Connectivity, PlacementBox, RasterImage,
};

/// Which components of the clipped segmenter output survive refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentPolicy {
    #[default]
    LargestComponent,
    Union,
}

pub const DEFAULT_MARGIN: u32 = 8;

/// Mask that is 1 exactly inside `b`.
pub fn rasterize_box(b: &PlacementBox, width: u32, height: u32) -> Result<BinaryMask> {
    b.validate_within(width, height)?;
    BinaryMask::from_fn(width, height, |x, y| b.contains(x, y))
}

fn ensure_same(img: &RasterImage, mask: &BinaryMask) -> Result<()> {
    mask.ensure_dims(img.width(), img.height())
}

/// Zeroes every channel (alpha included) where `mask` is set.
pub fn erase(img: &RasterImage, mask: &BinaryMask) -> Result<RasterImage> {
    ensure_same(img, mask)?;
    let c = img.channels().count();
    let mut out = img.as_bytes().to_vec();
    for (px, &bit) in out.chunks_exact_mut(c).zip(mask.bits()) {
        if bit == 1 {
            px.fill(0);
        }
    }
    RasterImage::new(img.width(), img.height(), img.channels(), out)
}

/// `candidate` where `mask` is set, `background` everywhere else.
///
/// The output takes the background's channel layout; an RGB candidate pasted
/// into an RGBA background gets opaque alpha.
pub fn composite_preserving_background(
    candidate: &RasterImage,
    background: &RasterImage,
    mask: &BinaryMask,
) -> Result<RasterImage> {
    ensure_same(background, mask)?;
    if candidate.dimensions() != background.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: background.dimensions(),
            actual: candidate.dimensions(),
        });
    }
    let candidate = match background.channels() {
        crate::imaging::Channels::Rgb => candidate.to_rgb(),
        crate::imaging::Channels::Rgba => candidate.to_rgba(),
    };
    let c = background.channels().count();
    let mut out = background.as_bytes().to_vec();
    for ((dst, src), &bit) in out
        .chunks_exact_mut(c)
        .zip(candidate.as_bytes().chunks_exact(c))
        .zip(mask.bits())
    {
        if bit == 1 {
            dst.copy_from_slice(src);
        }
    }
    RasterImage::new(background.width(), background.height(), background.channels(), out)
}

/// Clips a raw segmenter mask to the margin-dilated box, keeps the selected
/// 8-connected components and fills interior holes.
pub fn refine_mask(
    raw: &BinaryMask,
    b: &PlacementBox,
    margin: u32,
    policy: ComponentPolicy,
) -> Result<BinaryMask> {
    let (w, h) = raw.dimensions();
    let limit = dilate(&rasterize_box(b, w, h)?, margin);
    let clipped = raw.intersection(&limit)?;
    let kept = match policy {
        ComponentPolicy::Union => clipped,
        ComponentPolicy::LargestComponent => {
            let cc = connected_components(&clipped, Connectivity::Eight);
            match cc.largest() {
                Some(c) => cc.mask_of(c.label),
                None => clipped,
            }
        }
    };
    if kept.is_empty() {
        return Err(Error::EmptyMask {
            raw_popcount: raw.popcount(),
        });
    }
    // holes are enclosed by the kept set, which already lies inside `limit`
    Ok(fill_holes(&kept))
}
