use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};

use super::geometry::PlacementBox;
use crate::error::{Error, Result};

/// Row-major `{0,1}` grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask({}x{}, {} set)", self.width, self.height, self.popcount())
    }
}

impl BinaryMask {
    /// Wraps a bit buffer; every element must be 0 or 1.
    pub fn new(width: u32, height: u32, bits: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if bits.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "mask buffer has {} elements, expected {}",
                bits.len(),
                width as usize * height as usize
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("mask elements must be 0 or 1"));
        }
        Ok(Self { width, height, bits })
    }

    pub fn zeros(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![0; width as usize * height as usize])
    }

    pub fn ones(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![1; width as usize * height as usize])
    }

    pub fn from_fn<F>(width: u32, height: u32, mut f: F) -> Result<Self>
    where
        F: FnMut(u32, u32) -> bool,
    {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y) as u8);
            }
        }
        Self::new(width, height, bits)
    }

    pub(crate) fn from_bits_unchecked(width: u32, height: u32, bits: Vec<u8>) -> Self {
        debug_assert_eq!(bits.len(), width as usize * height as usize);
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize] == 1
    }

    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|&b| b as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b == 1)
    }

    /// Errors unless the mask covers exactly a `width x height` frame.
    pub fn ensure_dims(&self, width: u32, height: u32) -> Result<()> {
        if self.dimensions() == (width, height) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: self.dimensions(),
            })
        }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(u8, u8) -> u8) -> Result<BinaryMask> {
        other.ensure_dims(self.width, self.height)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_bits_unchecked(self.width, self.height, bits))
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn xor(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn complement(&self) -> BinaryMask {
        let bits = self.bits.iter().map(|&b| 1 - b).collect();
        Self::from_bits_unchecked(self.width, self.height, bits)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }

    /// Number of set pixels inside `b`.
    pub fn count_within(&self, b: &PlacementBox) -> u64 {
        let mut n = 0;
        for y in b.y..b.bottom().min(self.height) {
            for x in b.x..b.right().min(self.width) {
                n += self.get(x, y) as u64;
            }
        }
        n
    }

    /// Tight bounding rectangle of the set pixels.
    pub fn bounding_box(&self) -> Option<PlacementBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != u32::MAX).then(|| PlacementBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        })
    }

    /// Grayscale `{0, 255}` rendering.
    pub fn to_gray(&self) -> GrayImage {
        let buf = self.bits.iter().map(|&b| b * 255).collect();
        GrayImage::from_raw(self.width, self.height, buf).expect("buffer length invariant")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageLuma8(self.to_gray()).write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes an 8-bit mask PNG; samples >= 128 (luma, after alpha) become 1.
    pub fn decode_png(bytes: &[u8]) -> Result<BinaryMask> {
        let img = image::load_from_memory(bytes)?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        let bits = gray.into_raw().into_iter().map(|v| (v >= 128) as u8).collect();
        BinaryMask::new(w, h, bits)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BinaryMask> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}
