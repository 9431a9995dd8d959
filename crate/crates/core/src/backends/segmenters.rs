use std::collections::HashSet;

use super::{SegmentRequest, Segmenter};
use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

pub const DEFAULT_HEURISTIC_THRESHOLD: f64 = 30.0;
/// Width of the ring just outside the box sampled as background.
pub const BAND_WIDTH: u32 = 2;

/// Returns the sidecar alpha recorded by the stage-1 mock for this job.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSegmenter;

impl Segmenter for OracleSegmenter {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<BinaryMask> {
        let sidecar = req.sidecar.ok_or(Error::MissingOracle)?;
        sidecar.ensure_dims(req.image.width(), req.image.height())?;
        Ok(sidecar.clone())
    }
}

/// Offline fallback: marks box pixels whose colour is farther than
/// `threshold` (Euclidean RGB) from every colour in the band around the box.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicSegmenter {
    pub threshold: f64,
}

impl Default for HeuristicSegmenter {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_HEURISTIC_THRESHOLD,
        }
    }
}

impl Segmenter for HeuristicSegmenter {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<BinaryMask> {
        let img = req.image;
        let b = req.placement;
        let (w, h) = img.dimensions();
        b.validate_within(w, h)?;

        let x0 = b.x.saturating_sub(BAND_WIDTH);
        let y0 = b.y.saturating_sub(BAND_WIDTH);
        let x1 = (b.right() + BAND_WIDTH).min(w);
        let y1 = (b.bottom() + BAND_WIDTH).min(h);
        let mut band: HashSet<[u8; 3]> = HashSet::new();
        for y in y0..y1 {
            for x in x0..x1 {
                if !b.contains(x, y) {
                    band.insert(img.rgb(x, y));
                }
            }
        }
        let band: Vec<[i32; 3]> = band
            .into_iter()
            .map(|c| [c[0] as i32, c[1] as i32, c[2] as i32])
            .collect();
        let limit = self.threshold * self.threshold;

        BinaryMask::from_fn(w, h, |x, y| {
            if band.is_empty() || !b.contains(x, y) {
                return false;
            }
            let p = img.rgb(x, y);
            let p = [p[0] as i32, p[1] as i32, p[2] as i32];
            band.iter().all(|c| {
                let d: i32 = (0..3).map(|i| (p[i] - c[i]) * (p[i] - c[i])).sum();
                d as f64 > limit
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Channels, PlacementBox, RasterImage};

    #[test]
    fn oracle_requires_sidecar() {
        let img = RasterImage::filled(4, 4, Channels::Rgb, &[0, 0, 0]).unwrap();
        let b = PlacementBox::new(0, 0, 2, 2).unwrap();
        let req = SegmentRequest { image: &img, placement: &b, sidecar: None, seed: 0 };
        assert!(matches!(OracleSegmenter.segment(&req), Err(Error::MissingOracle)));
        let m = BinaryMask::from_fn(4, 4, |x, y| x == y).unwrap();
        let req = SegmentRequest { sidecar: Some(&m), ..req };
        assert_eq!(OracleSegmenter.segment(&req).unwrap(), m);
    }

    #[test]
    fn red_block_in_gray_frame() {
        // 12x12 box at (10,10) in 32x32 gray; red 6x6 block centred in the box
        let img = RasterImage::from_fn(32, 32, Channels::Rgb, |x, y| {
            if (13..19).contains(&x) && (13..19).contains(&y) {
                [220, 20, 20, 0]
            } else {
                [128, 128, 128, 0]
            }
        })
        .unwrap();
        let b = PlacementBox::new(10, 10, 12, 12).unwrap();
        let req = SegmentRequest { image: &img, placement: &b, sidecar: None, seed: 0 };
        let got = HeuristicSegmenter { threshold: 30.0 }.segment(&req).unwrap();
        // per-pixel distance-threshold oracle: red vs gray distance >> 30
        let expect = BinaryMask::from_fn(32, 32, |x, y| (13..19).contains(&x) && (13..19).contains(&y)).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn no_contrast_gives_empty_mask() {
        let img = RasterImage::filled(20, 20, Channels::Rgb, &[40, 80, 120]).unwrap();
        let b = PlacementBox::new(5, 5, 8, 8).unwrap();
        let req = SegmentRequest { image: &img, placement: &b, sidecar: None, seed: 0 };
        assert!(HeuristicSegmenter::default().segment(&req).unwrap().is_empty());
    }
}
