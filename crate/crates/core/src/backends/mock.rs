//! Deterministic procedural stand-ins for the generative backends.
//!
//! The stage-1 mock produces a plausible-but-lossy composite (hallucinated
//! box fill, 90% aspect fit, blurred foreground); the stage-2 mock pastes a
//! sharp copy of the reference over the supplied mask.

use super::keying::{cutout, Cutout};
use super::{ComposeRequest, Compositor, RefineRequest, Refiner, Stage1Output};
use crate::error::{Error, Result};
use crate::imaging::{resample, BinaryMask, Filter, PlacementBox, RasterImage};

/// Stage-1 foreground occupies this fraction of the box (per side), in tenths.
pub const FIT_TENTHS: u32 = 9;
/// Box-blur radius applied to the stage-1 foreground.
pub const STAGE1_BLUR_RADIUS: u32 = 2;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockCompositor;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockRefiner;

/// Fills the box interior by linear interpolation between the pixels just
/// outside each box edge, averaging the horizontal and vertical estimates.
pub fn fill_box_from_border(img: &RasterImage, b: &PlacementBox) -> Result<RasterImage> {
    b.validate_within(img.width(), img.height())?;
    let (w, h) = img.dimensions();
    let c = img.channels().count();
    let mut out = img.as_bytes().to_vec();

    let left = (b.x > 0).then(|| b.x - 1);
    let right = (b.right() < w).then(|| b.right());
    let top = (b.y > 0).then(|| b.y - 1);
    let bottom = (b.bottom() < h).then(|| b.bottom());

    let lerp = |a: Option<&[u8]>, z: Option<&[u8]>, t: f64, ch: usize| -> Option<f64> {
        match (a, z) {
            (Some(a), Some(z)) => Some(a[ch] as f64 * (1.0 - t) + z[ch] as f64 * t),
            (Some(a), None) => Some(a[ch] as f64),
            (None, Some(z)) => Some(z[ch] as f64),
            (None, None) => None,
        }
    };

    for py in b.y..b.bottom() {
        let ty = (py - b.y + 1) as f64 / (b.h + 1) as f64;
        for px in b.x..b.right() {
            let tx = (px - b.x + 1) as f64 / (b.w + 1) as f64;
            let l = left.map(|x| img.pixel(x, py));
            let r = right.map(|x| img.pixel(x, py));
            let t = top.map(|y| img.pixel(px, y));
            let bo = bottom.map(|y| img.pixel(px, y));
            let o = (py as usize * w as usize + px as usize) * c;
            for ch in 0..c {
                let hz = lerp(l, r, tx, ch);
                let vt = lerp(t, bo, ty, ch);
                let v = match (hz, vt) {
                    (Some(a), Some(b)) => (a + b) / 2.0,
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => 128.0,
                };
                out[o + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RasterImage::new(w, h, img.channels(), out)
}

/// Largest `(w, h)` with the cutout's aspect ratio inside `avail_w x avail_h`.
pub(crate) fn aspect_fit(src_w: u32, src_h: u32, avail_w: u32, avail_h: u32) -> (u32, u32) {
    let (sw, sh, aw, ah) = (src_w as u64, src_h as u64, avail_w as u64, avail_h as u64);
    if sw * ah >= sh * aw {
        let fh = ((sh * aw * 2 + sw) / (2 * sw)).clamp(1, ah);
        (avail_w, fh as u32)
    } else {
        let fw = ((sw * ah * 2 + sh) / (2 * sh)).clamp(1, aw);
        (fw as u32, avail_h)
    }
}

/// Smallest `(w, h)` with the cutout's aspect ratio covering `rect_w x rect_h`.
pub(crate) fn aspect_fill(src_w: u32, src_h: u32, rect_w: u32, rect_h: u32) -> (u32, u32) {
    let (sw, sh, rw, rh) = (src_w as u64, src_h as u64, rect_w as u64, rect_h as u64);
    if rw * sh >= rh * sw {
        let fh = (sh * rw).div_ceil(sw).max(rh);
        (rect_w, fh as u32)
    } else {
        let fw = (sw * rh).div_ceil(sh).max(rw);
        (fw as u32, rect_h)
    }
}

/// Box blur restricted to `alpha`: each foreground pixel becomes the mean of
/// the foreground pixels within Chebyshev distance `radius`.
pub(crate) fn masked_box_blur(rgb: &RasterImage, alpha: &BinaryMask, radius: u32) -> RasterImage {
    let (w, h) = rgb.dimensions();
    let r = radius as i64;
    RasterImage::from_fn(w, h, rgb.channels(), |x, y| {
        if !alpha.get(x, y) {
            let p = rgb.pixel(x, y);
            return [p[0], p[1], p[2], 0];
        }
        let mut sum = [0u64; 3];
        let mut n = 0u64;
        for yy in (y as i64 - r).max(0)..=(y as i64 + r).min(h as i64 - 1) {
            for xx in (x as i64 - r).max(0)..=(x as i64 + r).min(w as i64 - 1) {
                if alpha.get(xx as u32, yy as u32) {
                    let p = rgb.pixel(xx as u32, yy as u32);
                    for ch in 0..3 {
                        sum[ch] += p[ch] as u64;
                    }
                    n += 1;
                }
            }
        }
        let avg = |s: u64| ((s * 2 + n) / (2 * n)) as u8;
        [avg(sum[0]), avg(sum[1]), avg(sum[2]), 0]
    })
    .expect("same dimensions as input")
}

/// Writes `rgb` into `canvas` at `(ox, oy)` wherever `alpha` is set.
fn paste(
    canvas: &RasterImage,
    rgb: &RasterImage,
    alpha: &BinaryMask,
    ox: u32,
    oy: u32,
) -> Result<RasterImage> {
    let c = canvas.channels().count();
    let mut out = canvas.as_bytes().to_vec();
    for y in 0..rgb.height() {
        for x in 0..rgb.width() {
            if !alpha.get(x, y) {
                continue;
            }
            let o = canvas.offset(ox + x, oy + y);
            out[o..o + 3].copy_from_slice(&rgb.pixel(x, y)[..3]);
            if c == 4 {
                out[o + 3] = 255;
            }
        }
    }
    RasterImage::new(canvas.width(), canvas.height(), canvas.channels(), out)
}

impl MockCompositor {
    /// Placement of the fitted foreground inside `b`: `(x, y, w, h)`.
    pub fn footprint_rect(cut: &Cutout, b: &PlacementBox) -> PlacementBox {
        let avail_w = (b.w * FIT_TENTHS / 10).max(1);
        let avail_h = (b.h * FIT_TENTHS / 10).max(1);
        let (fw, fh) = aspect_fit(cut.rgb.width(), cut.rgb.height(), avail_w, avail_h);
        PlacementBox {
            x: b.x + (b.w - fw) / 2,
            y: b.y + (b.h - fh) / 2,
            w: fw,
            h: fh,
        }
    }
}

impl Compositor for MockCompositor {
    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Stage1Output> {
        let bg = req.masked_background;
        req.box_mask.ensure_dims(bg.width(), bg.height())?;
        let b = req.placement;

        let canvas = fill_box_from_border(bg, b)?;
        let cut = cutout(req.reference)?;
        let fp = Self::footprint_rect(&cut, b);
        let rgb = resample(&cut.rgb, fp.w, fp.h, Filter::Bilinear)?;
        let alpha = crate::imaging::resample_mask(&cut.alpha, fp.w, fp.h)?;
        if alpha.is_empty() {
            return Err(Error::EmptyReference);
        }
        let blurred = masked_box_blur(&rgb, &alpha, STAGE1_BLUR_RADIUS);
        let image = paste(&canvas, &blurred, &alpha, fp.x, fp.y)?;
        let sidecar = BinaryMask::from_fn(bg.width(), bg.height(), |x, y| {
            fp.contains(x, y) && alpha.get(x - fp.x, y - fp.y)
        })?;
        Ok(Stage1Output {
            image,
            sidecar: Some(sidecar),
        })
    }
}

impl Refiner for MockRefiner {
    fn refine(&self, req: &RefineRequest<'_>) -> Result<RasterImage> {
        let bg = req.masked_background;
        let mask = req.foreground_mask;
        mask.ensure_dims(bg.width(), bg.height())?;
        let rect = mask
            .bounding_box()
            .ok_or_else(|| Error::invalid("foreground mask is empty"))?;
        let cut = cutout(req.reference)?;
        let (sw, sh) = aspect_fill(cut.rgb.width(), cut.rgb.height(), rect.w, rect.h);
        let scaled = resample(&cut.rgb, sw, sh, Filter::Nearest)?;
        let (ox, oy) = ((sw - rect.w) / 2, (sh - rect.h) / 2);
        let patch = scaled.crop(ox, oy, rect.w, rect.h)?;
        let local = BinaryMask::from_fn(rect.w, rect.h, |x, y| mask.get(rect.x + x, rect.y + y))?;
        paste(bg, &patch, &local, rect.x, rect.y)
    }
}
