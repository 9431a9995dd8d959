#![allow(dead_code)]

use insertkit::imaging::{Channels, PlacementBox, RasterImage};

/// 64x64 diagonal gradient with no zero pixels.
pub fn background() -> RasterImage {
    RasterImage::from_fn(64, 64, Channels::Rgb, |x, y| {
        [40 + (x * 2) as u8, 60 + (y * 2) as u8, 90 + ((x + y) / 2) as u8, 255]
    })
    .unwrap()
}

pub fn placement() -> PlacementBox {
    PlacementBox::new(22, 22, 20, 20).unwrap()
}

/// Striped ellipse on white.
pub fn reference() -> RasterImage {
    RasterImage::from_fn(24, 24, Channels::Rgb, |x, y| {
        let (dx, dy) = (x as f64 - 11.5, y as f64 - 11.5);
        if dx * dx + dy * dy > 110.0 {
            return [255, 255, 255, 255];
        }
        if (x / 2) % 2 == 0 {
            [220, 40, 30, 255]
        } else {
            [30, 50, 200, 255]
        }
    })
    .unwrap()
}

pub fn solid_reference(c: [u8; 3]) -> RasterImage {
    RasterImage::filled(10, 10, Channels::Rgb, &c).unwrap()
}
