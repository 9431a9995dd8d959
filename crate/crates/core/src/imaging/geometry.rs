use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Axis-aligned placement box covering the half-open pixel range
/// `[x, x+w) x [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlacementBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PlacementBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!(
                "box must have positive size, got {w}x{h}"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Whole-frame box.
    pub fn full(width: u32, height: u32) -> Result<Self> {
        Self::new(0, 0, width, height)
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    #[inline]
    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64
    }

    /// Checks the box against a concrete frame.
    pub fn validate_within(&self, width: u32, height: u32) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "box {self} exceeds {width}x{height} frame"
            )))
        }
    }

    /// Scales the box into a frame resized by `(sx, sy)`, clamped to `(width, height)`.
    pub fn scaled(&self, sx: f64, sy: f64, width: u32, height: u32) -> PlacementBox {
        let x0 = ((self.x as f64 * sx).floor() as u32).min(width - 1);
        let y0 = ((self.y as f64 * sy).floor() as u32).min(height - 1);
        let x1 = ((self.right() as f64 * sx).ceil() as u32).clamp(x0 + 1, width);
        let y1 = ((self.bottom() as f64 * sy).ceil() as u32).clamp(y0 + 1, height);
        PlacementBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl fmt::Display for PlacementBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl FromStr for PlacementBox {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::invalid(format!(
                "box must be x,y,w,h (got {s:?})"
            )));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::invalid(format!("box component {p:?} is not a non-negative integer")))?;
        }
        PlacementBox::new(v[0], v[1], v[2], v[3])
    }
}

impl Serialize for PlacementBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PlacementBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[u32; 4]>::deserialize(d)?;
        PlacementBox::new(x, y, w, h).map_err(serde::de::Error::custom)
    }
}
