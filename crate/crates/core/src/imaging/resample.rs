use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use super::raster::RasterImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    Nearest,
    #[default]
    Bilinear,
}

/// Source index sampled by nearest-neighbour for destination index `d`.
#[inline]
fn nearest_index(d: u32, src: u32, dst: u32) -> u32 {
    // floor((d + 0.5) * src / dst) in integer arithmetic
    (((2 * d as u64 + 1) * src as u64) / (2 * dst as u64)).min(src as u64 - 1) as u32
}

/// Pixel-centre aligned bilinear taps: (i0, i1, weight of i1).
#[inline]
fn bilinear_taps<S: Scalar>(d: u32, src: u32, dst: u32) -> (u32, u32, S) {
    let half = S::of(0.5);
    let pos = (S::of_u64(d as u64) + half) * S::of_u64(src as u64) / S::of_u64(dst as u64) - half;
    let max = S::of_u64(src as u64 - 1);
    let pos = pos.max(S::zero()).min(max);
    let i0 = pos.floor();
    let t = pos - i0;
    let i0 = i0.to_u32().unwrap_or(0);
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, t)
}

/// Resizes `img` to `new_w x new_h` with `S` as the interpolation scalar.
pub fn resample_with<S: Scalar>(
    img: &RasterImage,
    new_w: u32,
    new_h: u32,
    filter: Filter,
) -> Result<RasterImage> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid(format!(
            "resample target must be positive, got {new_w}x{new_h}"
        )));
    }
    let (w, h) = img.dimensions();
    let c = img.channels().count();
    let mut out = Vec::with_capacity(new_w as usize * new_h as usize * c);
    match filter {
        Filter::Nearest => {
            let xs: Vec<u32> = (0..new_w).map(|d| nearest_index(d, w, new_w)).collect();
            for dy in 0..new_h {
                let sy = nearest_index(dy, h, new_h);
                for &sx in &xs {
                    out.extend_from_slice(img.pixel(sx, sy));
                }
            }
        }
        Filter::Bilinear => {
            let xs: Vec<(u32, u32, S)> = (0..new_w).map(|d| bilinear_taps(d, w, new_w)).collect();
            let one = S::one();
            let max = S::of(255.0);
            for dy in 0..new_h {
                let (y0, y1, ty) = bilinear_taps::<S>(dy, h, new_h);
                for &(x0, x1, tx) in &xs {
                    let (p00, p10) = (img.pixel(x0, y0), img.pixel(x1, y0));
                    let (p01, p11) = (img.pixel(x0, y1), img.pixel(x1, y1));
                    for ch in 0..c {
                        let s = |v: u8| S::of_u64(v as u64);
                        let top = s(p00[ch]) * (one - tx) + s(p10[ch]) * tx;
                        let bot = s(p01[ch]) * (one - tx) + s(p11[ch]) * tx;
                        let v = (top * (one - ty) + bot * ty).round().max(S::zero()).min(max);
                        out.push(v.to_u8().unwrap_or(0));
                    }
                }
            }
        }
    }
    RasterImage::new(new_w, new_h, img.channels(), out)
}

/// Resizes `img`; bilinear weights are computed in `f32`.
pub fn resample(img: &RasterImage, new_w: u32, new_h: u32, filter: Filter) -> Result<RasterImage> {
    resample_with::<f32>(img, new_w, new_h, filter)
}

/// Nearest-neighbour resize of a mask (keeps it binary).
pub fn resample_mask(mask: &BinaryMask, new_w: u32, new_h: u32) -> Result<BinaryMask> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid("resample target must be positive"));
    }
    let (w, h) = mask.dimensions();
    let xs: Vec<u32> = (0..new_w).map(|d| nearest_index(d, w, new_w)).collect();
    let mut bits = Vec::with_capacity(new_w as usize * new_h as usize);
    for dy in 0..new_h {
        let sy = nearest_index(dy, h, new_h);
        bits.extend(xs.iter().map(|&sx| mask.get(sx, sy) as u8));
    }
    Ok(BinaryMask::from_bits_unchecked(new_w, new_h, bits))
}
