//! Side-by-side strips: background with the box outlined, the references,
//! the stage-1 composite and the final insertion.

use crate::error::Result;
use crate::imaging::{resample, Channels, Filter, PlacementBox, RasterImage};

const GAP: u32 = 4;
const PAPER: [u8; 3] = [255, 255, 255];
const OUTLINE: [u8; 3] = [255, 0, 0];

fn outlined(bg: &RasterImage, b: &PlacementBox) -> RasterImage {
    let bg = bg.to_rgb();
    RasterImage::from_fn(bg.width(), bg.height(), Channels::Rgb, |x, y| {
        let on_edge = b.contains(x, y) && (x == b.x || y == b.y || x + 1 == b.right() || y + 1 == b.bottom());
        let c = if on_edge { OUTLINE } else { bg.rgb(x, y) };
        [c[0], c[1], c[2], 255]
    })
    .expect("same size as background")
}

/// Panels are scaled to the background height and laid out left to right.
pub fn render(
    background: &RasterImage,
    placement: &PlacementBox,
    references: &[RasterImage],
    stage1: Option<&RasterImage>,
    result: Option<&RasterImage>,
) -> Result<RasterImage> {
    let h = background.height();
    let mut panels = vec![outlined(background, placement)];
    for r in references {
        let w = ((r.width() as u64 * h as u64) / r.height() as u64).max(1) as u32;
        panels.push(resample(&r.to_rgb(), w, h, Filter::Bilinear)?);
    }
    for img in [stage1, result].into_iter().flatten() {
        panels.push(img.to_rgb());
    }
    let width = panels.iter().map(|p| p.width()).sum::<u32>() + GAP * (panels.len() as u32 - 1);
    let mut bytes = vec![0u8; width as usize * h as usize * 3];
    for px in bytes.chunks_exact_mut(3) {
        px.copy_from_slice(&PAPER);
    }
    let mut x0 = 0;
    for p in &panels {
        for y in 0..p.height().min(h) {
            for x in 0..p.width() {
                let i = (y as usize * width as usize + (x0 + x) as usize) * 3;
                bytes[i..i + 3].copy_from_slice(&p.rgb(x, y));
            }
        }
        x0 += p.width() + GAP;
    }
    RasterImage::new(width, h, Channels::Rgb, bytes)
}
