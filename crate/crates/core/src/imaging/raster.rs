use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage, RgbaImage};

use crate::error::{Error, Result};

/// Pixel layout of a [`RasterImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Channels {
    Rgb,
    Rgba,
}

impl Channels {
    pub const fn count(self) -> usize {
        match self {
            Channels::Rgb => 3,
            Channels::Rgba => 4,
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            3 => Ok(Channels::Rgb),
            4 => Ok(Channels::Rgba),
            other => Err(Error::invalid(format!("unsupported channel count {other}"))),
        }
    }
}

/// Row-major 8-bit RGB or RGBA image.
///
/// Values are immutable once built: every operation in the crate returns a
/// fresh image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: Channels,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: Channels, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * channels.count();
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Uniform image filled with `color` (length must match `channels`).
    pub fn filled(width: u32, height: u32, channels: Channels, color: &[u8]) -> Result<Self> {
        if color.len() != channels.count() {
            return Err(Error::invalid("fill color length does not match channels"));
        }
        let n = width as usize * height as usize;
        let pixels = color.iter().copied().cycle().take(n * color.len()).collect();
        Self::new(width, height, channels, pixels)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn<F>(width: u32, height: u32, channels: Channels, mut f: F) -> Result<Self>
    where
        F: FnMut(u32, u32) -> [u8; 4],
    {
        let c = channels.count();
        let mut pixels = Vec::with_capacity(width as usize * height as usize * c);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y)[..c]);
            }
        }
        Self::new(width, height, channels, pixels)
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

    /// Errors unless `other` has the same width and height.
    pub fn ensure_same_frame(&self, other: &RasterImage) -> Result<()> {
        if self.dimensions() == other.dimensions() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: other.dimensions(),
                actual: self.dimensions(),
            })
        }
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn has_alpha(&self) -> bool {
        self.channels == Channels::Rgba
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub(crate) fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels.count()
    }

    /// Channel samples of the pixel at `(x, y)`.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.pixels[o..o + self.channels.count()]
    }

    /// RGB triple of the pixel at `(x, y)`, ignoring alpha.
    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let p = self.pixel(x, y);
        [p[0], p[1], p[2]]
    }

    /// Same pixels with an opaque alpha channel added (no-op for RGBA).
    pub fn to_rgba(&self) -> RasterImage {
        match self.channels {
            Channels::Rgba => self.clone(),
            Channels::Rgb => {
                let pixels = self
                    .pixels
                    .chunks_exact(3)
                    .flat_map(|p| [p[0], p[1], p[2], 255])
                    .collect();
                RasterImage::new(self.width, self.height, Channels::Rgba, pixels)
                    .expect("dimensions already validated")
            }
        }
    }

    /// Same pixels with alpha dropped (no-op for RGB).
    pub fn to_rgb(&self) -> RasterImage {
        match self.channels {
            Channels::Rgb => self.clone(),
            Channels::Rgba => {
                let pixels = self
                    .pixels
                    .chunks_exact(4)
                    .flat_map(|p| [p[0], p[1], p[2]])
                    .collect();
                RasterImage::new(self.width, self.height, Channels::Rgb, pixels)
                    .expect("dimensions already validated")
            }
        }
    }

    /// Copy of the rectangle `[x, x+w) x [y, y+h)`.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RasterImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop ({x},{y},{w},{h}) outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels.count();
        let mut pixels = Vec::with_capacity(w as usize * h as usize * c);
        for row in y..y + h {
            let start = self.offset(x, row);
            pixels.extend_from_slice(&self.pixels[start..start + w as usize * c]);
        }
        RasterImage::new(w, h, self.channels, pixels)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<RasterImage> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        Ok(Self::from_dynamic(img))
    }

    /// Decodes any format the codec layer understands (PNG and JPEG).
    pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
        Ok(Self::from_dynamic(image::load_from_memory(bytes)?))
    }

    pub fn from_dynamic(img: DynamicImage) -> RasterImage {
        if img.color().has_alpha() {
            let rgba = img.to_rgba8();
            let (w, h) = rgba.dimensions();
            RasterImage::new(w, h, Channels::Rgba, rgba.into_raw()).expect("codec dimensions")
        } else {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            RasterImage::new(w, h, Channels::Rgb, rgb.into_raw()).expect("codec dimensions")
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        match self.channels {
            Channels::Rgb => DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width, self.height, self.pixels.clone())
                    .expect("buffer length invariant"),
            ),
            Channels::Rgba => DynamicImage::ImageRgba8(
                RgbaImage::from_raw(self.width, self.height, self.pixels.clone())
                    .expect("buffer length invariant"),
            ),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RasterImage> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()?).map_err(|e| Error::io(path, e))
    }
}
