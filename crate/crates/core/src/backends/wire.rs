//! HTTP clients for remote model services.
//!
//! Each request is `multipart/form-data` carrying PNG parts plus a JSON
//! `metadata` part `{ "box": [x, y, w, h], "seed": n }`; the response body is
//! a PNG. Inputs larger than `max_side` are downscaled before sending and the
//! response is resampled back to the input frame.

use std::thread;
use std::time::Duration;

use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;
use reqwest::Url;
use serde::{Deserialize, Serialize};

use super::{ComposeRequest, Compositor, RefineRequest, Refiner, SegmentRequest, Segmenter, Stage1Output};
use crate::error::{Error, Result};
use crate::imaging::{resample, resample_mask, BinaryMask, Filter, PlacementBox, RasterImage};

pub const COMPOSE_PATH: &str = "/v1/compose";
pub const SEGMENT_PATH: &str = "/v1/segment";
pub const REFINE_PATH: &str = "/v1/refine";
pub const RETRY_BACKOFF_BASE: Duration = Duration::from_millis(500);
pub const MAX_RETRIES: u32 = 1;

/// JSON metadata part sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMetadata {
    #[serde(rename = "box")]
    pub placement: PlacementBox,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct WireClient {
    base: Url,
    stage: &'static str,
    client: Client,
    max_side: u32,
    backoff: Duration,
}

impl WireClient {
    pub fn new(endpoint: &str, stage: &'static str, timeout: Duration, max_side: u32) -> Result<Self> {
        let base = Url::parse(endpoint)
            .map_err(|e| Error::Config(format!("bad {stage} endpoint {endpoint:?}: {e}")))?;
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            base,
            stage,
            client,
            max_side,
            backoff: RETRY_BACKOFF_BASE,
        })
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff = base;
        self
    }

    fn unavailable(&self, cause: impl ToString) -> Error {
        Error::BackendUnavailable {
            stage: self.stage,
            cause: cause.to_string(),
        }
    }

    /// Target frame for the wire, or `None` when no downscale is needed.
    fn wire_dims(&self, w: u32, h: u32) -> Option<(u32, u32)> {
        let side = w.max(h);
        if side <= self.max_side {
            return None;
        }
        let s = self.max_side as f64 / side as f64;
        Some((
            ((w as f64 * s).round() as u32).max(1),
            ((h as f64 * s).round() as u32).max(1),
        ))
    }

    fn shrink_image(&self, img: &RasterImage) -> Result<RasterImage> {
        match self.wire_dims(img.width(), img.height()) {
            Some((w, h)) => resample(img, w, h, Filter::Bilinear),
            None => Ok(img.clone()),
        }
    }

    fn png_part(&self, bytes: Vec<u8>, name: &str) -> Result<Part> {
        Part::bytes(bytes)
            .file_name(format!("{name}.png"))
            .mime_str("image/png")
            .map_err(|e| self.unavailable(e))
    }

    fn metadata_part(&self, meta: &WireMetadata) -> Result<Part> {
        Part::text(serde_json::to_string(meta)?)
            .mime_str("application/json")
            .map_err(|e| self.unavailable(e))
    }

    /// Posts a form (rebuilt per attempt) with one retry and exponential backoff.
    fn post(&self, path: &str, build: impl Fn() -> Result<Form>) -> Result<Vec<u8>> {
        let url = self.base.join(path).map_err(|e| self.unavailable(e))?;
        let mut last = String::new();
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let form = build()?;
            match self.client.post(url.clone()).multipart(form).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.bytes().map(|b| b.to_vec()).map_err(|e| self.unavailable(e));
                }
                Ok(resp) => last = format!("{url} returned {}", resp.status()),
                Err(e) => last = format!("{url}: {e}"),
            }
            tracing::warn!(stage = self.stage, attempt, "wire request failed: {last}");
        }
        Err(self.unavailable(last))
    }

    fn decode_image(&self, bytes: &[u8], w: u32, h: u32) -> Result<RasterImage> {
        let img = RasterImage::decode(bytes).map_err(|e| self.unavailable(format!("bad PNG response: {e}")))?;
        if img.dimensions() == (w, h) {
            Ok(img)
        } else {
            resample(&img, w, h, Filter::Bilinear)
        }
    }
}

fn scale_box(b: &PlacementBox, from: (u32, u32), to: (u32, u32)) -> PlacementBox {
    if from == to {
        return *b;
    }
    b.scaled(
        to.0 as f64 / from.0 as f64,
        to.1 as f64 / from.1 as f64,
        to.0,
        to.1,
    )
}

impl Compositor for WireClient {
    fn compose(&self, req: &ComposeRequest<'_>) -> Result<Stage1Output> {
        let bg = req.masked_background;
        let (w, h) = bg.dimensions();
        let small_bg = self.shrink_image(bg)?;
        let dims = small_bg.dimensions();
        let small_mask = resample_mask(req.box_mask, dims.0, dims.1)?;
        let reference = self.shrink_image(req.reference)?;
        let meta = WireMetadata {
            placement: scale_box(req.placement, (w, h), dims),
            seed: req.seed,
        };
        let (bg_png, mask_png, ref_png) = (
            small_bg.encode_png()?,
            small_mask.encode_png()?,
            reference.encode_png()?,
        );
        let body = self.post(COMPOSE_PATH, || {
            Ok(Form::new()
                .part("masked_background", self.png_part(bg_png.clone(), "masked_background")?)
                .part("box_mask", self.png_part(mask_png.clone(), "box_mask")?)
                .part("reference", self.png_part(ref_png.clone(), "reference")?)
                .part("metadata", self.metadata_part(&meta)?))
        })?;
        Ok(Stage1Output {
            image: self.decode_image(&body, w, h)?,
            sidecar: None,
        })
    }
}

impl Segmenter for WireClient {
    fn segment(&self, req: &SegmentRequest<'_>) -> Result<BinaryMask> {
        let (w, h) = req.image.dimensions();
        req.placement.validate_within(w, h)?;
        let small = self.shrink_image(req.image)?;
        let meta = WireMetadata {
            placement: scale_box(req.placement, (w, h), small.dimensions()),
            seed: req.seed,
        };
        let png = small.encode_png()?;
        let body = self.post(SEGMENT_PATH, || {
            Ok(Form::new()
                .part("image", self.png_part(png.clone(), "image")?)
                .part("metadata", self.metadata_part(&meta)?))
        })?;
        let mask = BinaryMask::decode_png(&body)
            .map_err(|e| self.unavailable(format!("bad mask response: {e}")))?;
        if mask.dimensions() == (w, h) {
            Ok(mask)
        } else {
            resample_mask(&mask, w, h)
        }
    }
}

impl Refiner for WireClient {
    fn refine(&self, req: &RefineRequest<'_>) -> Result<RasterImage> {
        let bg = req.masked_background;
        let (w, h) = bg.dimensions();
        req.foreground_mask.ensure_dims(w, h)?;
        if req.foreground_mask.is_empty() {
            return Err(Error::invalid("foreground mask is empty"));
        }
        let small_bg = self.shrink_image(bg)?;
        let dims = small_bg.dimensions();
        let small_mask = resample_mask(req.foreground_mask, dims.0, dims.1)?;
        let reference = self.shrink_image(req.reference)?;
        let meta = WireMetadata {
            placement: scale_box(req.placement, (w, h), dims),
            seed: req.seed,
        };
        let (bg_png, mask_png, ref_png) = (
            small_bg.encode_png()?,
            small_mask.encode_png()?,
            reference.encode_png()?,
        );
        let body = self.post(REFINE_PATH, || {
            Ok(Form::new()
                .part("masked_background", self.png_part(bg_png.clone(), "masked_background")?)
                .part("foreground_mask", self.png_part(mask_png.clone(), "foreground_mask")?)
                .part("reference", self.png_part(ref_png.clone(), "reference")?)
                .part("metadata", self.metadata_part(&meta)?))
        })?;
        self.decode_image(&body, w, h)
    }
}
