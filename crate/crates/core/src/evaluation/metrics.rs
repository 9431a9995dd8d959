//! Composition quality metrics.
//!
//! Counting metrics are exact [`Fraction`]s; similarity metrics are generic
//! over the float [`Scalar`].

use crate::backends::keying::{cutout, reference_alpha};
use crate::error::{Error, Result};
use crate::imaging::{resample_with, BinaryMask, Channels, Filter, PlacementBox, RasterImage};
use crate::scalar::{fraction_to, Fraction, Scalar};

pub const HIST_BINS: usize = 32;
pub const SSIM_PATCH: u32 = 64;
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Absolute differences outside a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BgPreservation {
    pub max_abs: u8,
    pub sum_abs: u64,
    /// Pixels x channels compared.
    pub samples: u64,
}

impl BgPreservation {
    pub fn mean_exact(&self) -> Fraction {
        Fraction::new(self.sum_abs, self.samples)
    }

    pub fn mean<S: Scalar>(&self) -> S {
        fraction_to(self.mean_exact())
    }
}

/// Channel-wise `|ins - bg|` over the 0-set of `mask`.
///
/// Alpha participates only when both images carry it.
pub fn bg_preservation(ins: &RasterImage, bg: &RasterImage, mask: &BinaryMask) -> Result<BgPreservation> {
    ins.ensure_same_frame(bg)?;
    mask.ensure_dims(bg.width(), bg.height())?;
    let channels = if ins.channels() == bg.channels() {
        bg.channels().count()
    } else {
        3
    };
    let (mut max_abs, mut sum_abs, mut samples) = (0u8, 0u64, 0u64);
    for y in 0..bg.height() {
        for x in 0..bg.width() {
            if mask.get(x, y) {
                continue;
            }
            let (a, b) = (ins.pixel(x, y), bg.pixel(x, y));
            for c in 0..channels {
                let d = a[c].abs_diff(b[c]);
                max_abs = max_abs.max(d);
                sum_abs += d as u64;
            }
            samples += channels as u64;
        }
    }
    if samples == 0 {
        return Err(Error::UndefinedMetric(
            "background preservation needs at least one unmasked pixel".into(),
        ));
    }
    Ok(BgPreservation {
        max_abs,
        sum_abs,
        samples,
    })
}

/// `|mask ∩ box| / |mask|`.
pub fn bbox_adherence(mask: &BinaryMask, b: &PlacementBox) -> Result<Fraction> {
    let total = mask.popcount();
    if total == 0 {
        return Err(Error::UndefinedMetric("bbox adherence of an empty mask".into()));
    }
    Ok(Fraction::new(mask.count_within(b), total))
}

/// `|a ∩ b| / |a ∪ b|`, 1 when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<Fraction> {
    b.ensure_dims(a.width(), a.height())?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x & y) as u64;
        union += (x | y) as u64;
    }
    if union == 0 {
        return Ok(Fraction::from_integer(1));
    }
    Ok(Fraction::new(inter, union))
}

fn channel_histograms(pixels: impl Iterator<Item = [u8; 3]>) -> ([[u64; HIST_BINS]; 3], u64) {
    let mut hist = [[0u64; HIST_BINS]; 3];
    let mut n = 0;
    for p in pixels {
        for c in 0..3 {
            hist[c][p[c] as usize * HIST_BINS / 256] += 1;
        }
        n += 1;
    }
    (hist, n)
}

fn masked_rgb<'a>(img: &'a RasterImage, mask: &'a BinaryMask) -> impl Iterator<Item = [u8; 3]> + 'a {
    (0..img.height())
        .flat_map(move |y| (0..img.width()).map(move |x| (x, y)))
        .filter(move |&(x, y)| mask.get(x, y))
        .map(move |(x, y)| img.rgb(x, y))
}

/// Mean over RGB of the normalised 32-bin histogram intersection between the
/// reference foreground and the composed pixels under `mask`.
pub fn fidelity_hist<S: Scalar>(
    reference: &RasterImage,
    composed: &RasterImage,
    mask: &BinaryMask,
) -> Result<S> {
    mask.ensure_dims(composed.width(), composed.height())?;
    let alpha = reference_alpha(reference);
    let (ref_hist, ref_n) = channel_histograms(masked_rgb(reference, &alpha));
    let (cmp_hist, cmp_n) = channel_histograms(masked_rgb(composed, mask));
    if ref_n == 0 {
        return Err(Error::UndefinedMetric("reference has no foreground pixels".into()));
    }
    if cmp_n == 0 {
        return Err(Error::UndefinedMetric("composed mask region is empty".into()));
    }
    let (rn, cn) = (S::of_u64(ref_n), S::of_u64(cmp_n));
    let mut total = S::zero();
    for c in 0..3 {
        for bin in 0..HIST_BINS {
            let a = S::of_u64(ref_hist[c][bin]) / rn;
            let b = S::of_u64(cmp_hist[c][bin]) / cn;
            total = total + a.min(b);
        }
    }
    Ok((total / S::of(3.0)).max(S::zero()).min(S::one()))
}

/// BT.601 luma of an RGB(A) image as a flat scalar buffer.
pub fn luma<S: Scalar>(img: &RasterImage) -> Vec<S> {
    let (wr, wg, wb) = (S::of(0.299), S::of(0.587), S::of(0.114));
    img.as_bytes()
        .chunks_exact(img.channels().count())
        .map(|p| wr * S::of_u64(p[0] as u64) + wg * S::of_u64(p[1] as u64) + wb * S::of_u64(p[2] as u64))
        .collect()
}

/// Mean SSIM over all `window x window` windows (stride 1, uniform weights),
/// dynamic range 255.
pub fn ssim_gray<S: Scalar>(a: &[S], b: &[S], width: usize, height: usize, window: usize) -> Result<S> {
    if a.len() != width * height || b.len() != a.len() {
        return Err(Error::invalid("ssim buffers do not match dimensions"));
    }
    if window == 0 || window > width || window > height {
        return Err(Error::UndefinedMetric(format!(
            "ssim window {window} does not fit {width}x{height}"
        )));
    }
    let range = S::of(255.0);
    let c1 = (S::of(SSIM_K1) * range).powi(2);
    let c2 = (S::of(SSIM_K2) * range).powi(2);
    let two = S::of(2.0);
    let n = S::of_u64((window * window) as u64);
    let mut total = S::zero();
    let mut count = 0u64;
    for y0 in 0..=height - window {
        for x0 in 0..=width - window {
            let (mut sa, mut sb) = (S::zero(), S::zero());
            for y in y0..y0 + window {
                for x in x0..x0 + window {
                    sa = sa + a[y * width + x];
                    sb = sb + b[y * width + x];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut va, mut vb, mut cov) = (S::zero(), S::zero(), S::zero());
            for y in y0..y0 + window {
                for x in x0..x0 + window {
                    let da = a[y * width + x] - ma;
                    let db = b[y * width + x] - mb;
                    va = va + da * da;
                    vb = vb + db * db;
                    cov = cov + da * db;
                }
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            let num = (two * ma * mb + c1) * (two * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total = total + num / den;
            count += 1;
        }
    }
    Ok(total / S::of_u64(count))
}

fn ssim_patch<S: Scalar>(img: &RasterImage) -> Result<Vec<S>> {
    let rgb = if img.channels() == Channels::Rgba { img.to_rgb() } else { img.clone() };
    Ok(luma(&resample_with::<S>(&rgb, SSIM_PATCH, SSIM_PATCH, Filter::Bilinear)?))
}

/// Grayscale SSIM between the reference cut-out and the tight crop of the
/// composed mask region, both resampled to a 64x64 patch; clamped to [0, 1].
pub fn fidelity_ssim<S: Scalar>(
    reference: &RasterImage,
    composed: &RasterImage,
    mask: &BinaryMask,
) -> Result<S> {
    mask.ensure_dims(composed.width(), composed.height())?;
    let rect = mask
        .bounding_box()
        .ok_or_else(|| Error::UndefinedMetric("composed mask region is empty".into()))?;
    let cut = cutout(reference).map_err(|_| Error::UndefinedMetric("reference has no foreground pixels".into()))?;
    if rect.area() < 2 || cut.rgb.width() as u64 * cut.rgb.height() as u64 <= 1 {
        return Err(Error::UndefinedMetric("single-pixel region".into()));
    }
    let region = composed.crop(rect.x, rect.y, rect.w, rect.h)?;
    let a = ssim_patch::<S>(&cut.rgb)?;
    let b = ssim_patch::<S>(&region)?;
    let p = SSIM_PATCH as usize;
    Ok(ssim_gray(&a, &b, p, p, SSIM_WINDOW)?.max(S::zero()).min(S::one()))
}
