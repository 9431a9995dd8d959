//! Benchmark manifests: one JSON document listing every sample.
//!
//! ```json
//! { "samples": [ { "sample_id": "s0", "background_path": "bg/s0.png",
//!                  "box": [10, 12, 30, 30], "reference_paths": ["ref/s0_0.png"],
//!                  "category": "toy" } ] }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PlacementBox;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub sample_id: String,
    pub background_path: PathBuf,
    #[serde(rename = "box")]
    pub placement: PlacementBox,
    pub reference_paths: Vec<PathBuf>,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_alpha_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestFile {
    pub samples: Vec<SampleManifest>,
}

fn record_error(record: &str, message: impl Into<String>) -> Error {
    Error::Manifest {
        record: record.to_string(),
        message: message.into(),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_file(record: &str, what: &str, p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(record_error(record, format!("{what} {} is not a readable file", p.display())))
    }
}

/// Reads and validates a manifest. Paths in the result are resolved; boxes
/// are checked against each background's header dimensions (pixels are not
/// decoded here).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleManifest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| record_error(&path.display().to_string(), e.to_string()))?;
    let records = raw
        .get("samples")
        .and_then(|s| s.as_array())
        .ok_or_else(|| record_error(&path.display().to_string(), "expected a top-level \"samples\" array"))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, value) in records.iter().enumerate() {
        let label = value
            .get("sample_id")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("record #{i}"));
        let mut sample: SampleManifest =
            serde_json::from_value(value.clone()).map_err(|e| record_error(&label, e.to_string()))?;
        if sample.sample_id.is_empty() {
            return Err(record_error(&label, "sample_id is empty"));
        }
        if !seen.insert(sample.sample_id.clone()) {
            return Err(record_error(&label, "duplicate sample_id"));
        }
        if sample.reference_paths.is_empty() {
            return Err(record_error(&label, "at least one reference path is required"));
        }

        sample.background_path = resolve(base, &sample.background_path);
        check_file(&label, "background", &sample.background_path)?;
        for r in &mut sample.reference_paths {
            *r = resolve(base, r);
            check_file(&label, "reference", r)?;
        }
        if let Some(gt) = &mut sample.gt_alpha_path {
            *gt = resolve(base, gt);
            check_file(&label, "gt_alpha", gt)?;
        }

        let (w, h) = image::image_dimensions(&sample.background_path)
            .map_err(|e| record_error(&label, format!("background header: {e}")))?;
        sample
            .placement
            .validate_within(w, h)
            .map_err(|e| record_error(&label, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

/// Writes a manifest, making paths under the manifest's directory relative.
pub fn write_manifest(path: impl AsRef<Path>, samples: &[SampleManifest]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    let file = ManifestFile {
        samples: samples
            .iter()
            .map(|s| SampleManifest {
                background_path: rel(&s.background_path),
                reference_paths: s.reference_paths.iter().map(|r| rel(r)).collect(),
                gt_alpha_path: s.gt_alpha_path.as_deref().map(rel),
                ..s.clone()
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
