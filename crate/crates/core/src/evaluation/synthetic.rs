//! Seeded synthetic benchmark suites.
//!
//! Each sample is a smooth background, a box, and textured object cut-outs
//! on a white field (no channel reaches the white key, so the silhouette is
//! exactly the drawn shape). Shapes are convex, so the footprint is a single
//! hole-free component. The `high_contrast` category pairs a uniform muted
//! background with warm saturated objects.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{write_manifest, SampleManifest};
use crate::backends::{ComposeRequest, Compositor, MockCompositor};
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Channels, PlacementBox, RasterImage};
use crate::masking::{erase, rasterize_box};

pub const HIGH_CONTRAST: &str = "high_contrast";
pub const TEXTURED: &str = "textured";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteSpec {
    pub count: usize,
    /// The first `high_contrast` samples use the high-contrast category.
    pub high_contrast: usize,
    pub references: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            count: 20,
            high_contrast: 10,
            references: 1,
            width: 64,
            height: 64,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub category: String,
    pub background: RasterImage,
    pub placement: PlacementBox,
    pub references: Vec<RasterImage>,
}

impl SyntheticSample {
    /// The footprint the mock compositor paints for reference `i`.
    pub fn expected_footprint(&self, i: usize) -> Result<BinaryMask> {
        let box_mask = rasterize_box(&self.placement, self.background.width(), self.background.height())?;
        let masked = erase(&self.background, &box_mask)?;
        let out = MockCompositor.compose(&ComposeRequest {
            masked_background: &masked,
            box_mask: &box_mask,
            placement: &self.placement,
            reference: &self.references[i],
            seed: 0,
        })?;
        out.sidecar
            .ok_or_else(|| Error::invalid("mock compositor produced no footprint"))
    }
}

fn rgb(rng: &mut ChaCha8Rng, lo: u8, hi: u8) -> [u8; 3] {
    [rng.random_range(lo..=hi), rng.random_range(lo..=hi), rng.random_range(lo..=hi)]
}

fn background(rng: &mut ChaCha8Rng, w: u32, h: u32, high_contrast: bool) -> RasterImage {
    if high_contrast {
        let c = rgb(rng, 60, 110);
        return RasterImage::filled(w, h, Channels::Rgb, &c).expect("valid size");
    }
    let (a, b) = (rgb(rng, 20, 230), rgb(rng, 20, 230));
    let horizontal = rng.random_bool(0.5);
    RasterImage::from_fn(w, h, Channels::Rgb, |x, y| {
        let (t, n) = if horizontal { (x, w.max(2) - 1) } else { (y, h.max(2) - 1) };
        let mix = |i: usize| ((a[i] as u32 * (n - t.min(n)) + b[i] as u32 * t.min(n)) / n) as u8;
        [mix(0), mix(1), mix(2), 255]
    })
    .expect("valid size")
}

fn palette(rng: &mut ChaCha8Rng, high_contrast: bool) -> [[u8; 3]; 2] {
    if high_contrast {
        let warm = |rng: &mut ChaCha8Rng| {
            [rng.random_range(190..=240), rng.random_range(20..=200), rng.random_range(0..=50)]
        };
        [warm(rng), warm(rng)]
    } else {
        [rgb(rng, 0, 240), rgb(rng, 0, 240)]
    }
}

fn reference(rng: &mut ChaCha8Rng, high_contrast: bool) -> RasterImage {
    let (w, h) = (rng.random_range(20..=40u32), rng.random_range(20..=40u32));
    let colors = palette(rng, high_contrast);
    let period = rng.random_range(2..=4u32);
    let striped = rng.random_bool(0.5);
    let ellipse = rng.random_bool(0.5);
    let inset = 2;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (rx, ry) = (cx - inset as f64 + 0.5, cy - inset as f64 + 0.5);
    RasterImage::from_fn(w, h, Channels::Rgb, |x, y| {
        let inside = if ellipse {
            let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
            dx * dx + dy * dy <= 1.0
        } else {
            x >= inset && y >= inset && x < w - inset && y < h - inset
        };
        if !inside {
            return [255, 255, 255, 255];
        }
        let phase = if striped { x / period } else { x / period + y / period };
        let c = colors[(phase % 2) as usize];
        [c[0], c[1], c[2], 255]
    })
    .expect("valid size")
}

fn placement(rng: &mut ChaCha8Rng, w: u32, h: u32) -> PlacementBox {
    let pad = 3;
    let side = |rng: &mut ChaCha8Rng, n: u32| rng.random_range(n.min(20).min(n - 2 * pad)..=(n - 2 * pad).min(36));
    let (bw, bh) = (side(rng, w), side(rng, h));
    let x = rng.random_range(pad..=w - pad - bw);
    let y = rng.random_range(pad..=h - pad - bh);
    PlacementBox::new(x, y, bw, bh).expect("nonzero box")
}

/// Deterministic for a given configuration.
pub fn generate(cfg: &SuiteSpec) -> Result<Vec<SyntheticSample>> {
    if cfg.width < 16 || cfg.height < 16 {
        return Err(Error::invalid("synthetic frames must be at least 16x16"));
    }
    if cfg.references == 0 {
        return Err(Error::invalid("at least one reference per sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.count)
        .map(|i| {
            let hc = i < cfg.high_contrast;
            let background = background(&mut rng, cfg.width, cfg.height, hc);
            let placement = placement(&mut rng, cfg.width, cfg.height);
            let references = (0..cfg.references).map(|_| reference(&mut rng, hc)).collect();
            SyntheticSample {
                sample_id: format!("syn{i:04}"),
                category: if hc { HIGH_CONTRAST } else { TEXTURED }.to_string(),
                background,
                placement,
                references,
            }
        })
        .collect())
}

/// Writes PNGs, ground-truth footprints and `manifest.json` under `dir`;
/// returns the manifest path.
pub fn write_suite(dir: impl AsRef<Path>, samples: &[SyntheticSample]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let bg = images.join(format!("{}_bg.png", s.sample_id));
        s.background.save_png(&bg)?;
        let mut refs = Vec::new();
        for (i, r) in s.references.iter().enumerate() {
            let p = images.join(format!("{}_ref{i}.png", s.sample_id));
            r.save_png(&p)?;
            refs.push(p);
        }
        let gt = images.join(format!("{}_gt.png", s.sample_id));
        s.expected_footprint(0)?.save_png(&gt)?;
        records.push(SampleManifest {
            sample_id: s.sample_id.clone(),
            background_path: bg,
            placement: s.placement,
            reference_paths: refs,
            category: s.category.clone(),
            gt_alpha_path: Some(gt),
        });
    }
    let manifest = dir.join("manifest.json");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
