use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Channels, RasterImage};

/// A pixel is keyed out as white backdrop when every RGB channel is at least this.
pub const WHITE_KEY_THRESHOLD: u8 = 250;
/// RGBA references: alpha at or above this counts as foreground.
pub const ALPHA_THRESHOLD: u8 = 128;

/// Foreground silhouette of a reference image.
///
/// RGBA images use their alpha channel; RGB images are keyed against white.
pub fn reference_alpha(reference: &RasterImage) -> BinaryMask {
    let (w, h) = reference.dimensions();
    let bits = match reference.channels() {
        Channels::Rgba => reference
            .as_bytes()
            .chunks_exact(4)
            .map(|p| (p[3] >= ALPHA_THRESHOLD) as u8)
            .collect(),
        Channels::Rgb => reference
            .as_bytes()
            .chunks_exact(3)
            .map(|p| (!p.iter().all(|&v| v >= WHITE_KEY_THRESHOLD)) as u8)
            .collect(),
    };
    BinaryMask::new(w, h, bits).expect("dimensions come from the image")
}

/// Reference foreground cropped to its silhouette's bounding rectangle.
#[derive(Debug, Clone)]
pub struct Cutout {
    /// RGB pixels of the crop (keyed-out pixels included).
    pub rgb: RasterImage,
    pub alpha: BinaryMask,
}

pub fn cutout(reference: &RasterImage) -> Result<Cutout> {
    let alpha = reference_alpha(reference);
    let rect = alpha.bounding_box().ok_or(Error::EmptyReference)?;
    let rgb = reference.to_rgb().crop(rect.x, rect.y, rect.w, rect.h)?;
    let alpha = BinaryMask::from_fn(rect.w, rect.h, |x, y| alpha.get(rect.x + x, rect.y + y))?;
    Ok(Cutout { rgb, alpha })
}
