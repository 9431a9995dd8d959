//! Converts an on-disk MureCOM-style checkout into a manifest.
//!
//! Expected layout, one folder per category:
//!
//! ```text
//! <root>/<category>/background/<name>.{png,jpg}
//! <root>/<category>/bbox/<name>.txt          x y w h (whitespace or commas)
//! <root>/<category>/foreground/*.{png,jpg}   reference views of the object
//! ```
//!
//! Every background becomes one sample carrying all of its category's
//! references. Backgrounds without a box file are skipped with a warning.

use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::SampleManifest;
use crate::error::{Error, Result};
use crate::imaging::PlacementBox;

const IMAGE_EXTS: [&str; 3] = ["png", "jpg", "jpeg"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Parses `x y w h`, separated by whitespace and/or commas.
pub fn parse_box_file(text: &str) -> Result<PlacementBox> {
    let nums: Vec<u32> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map(|v| v.round().max(0.0) as u32))
        .collect::<Result<_, _>>()
        .map_err(|e| Error::invalid(format!("box file: {e}")))?;
    match nums[..] {
        [x, y, w, h] => PlacementBox::new(x, y, w, h),
        _ => Err(Error::invalid(format!("box file needs 4 numbers, found {}", nums.len()))),
    }
}

pub fn convert(root: impl AsRef<Path>) -> Result<Vec<SampleManifest>> {
    let root = root.as_ref();
    let mut samples = Vec::new();
    for category_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let category = category_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let fg_dir = category_dir.join("foreground");
        let bg_dir = category_dir.join("background");
        if !fg_dir.is_dir() || !bg_dir.is_dir() {
            tracing::warn!(%category, "missing background/ or foreground/; skipped");
            continue;
        }
        let references: Vec<PathBuf> = sorted_entries(&fg_dir)?.into_iter().filter(|p| is_image(p)).collect();
        if references.is_empty() {
            tracing::warn!(%category, "no reference images; skipped");
            continue;
        }
        for bg in sorted_entries(&bg_dir)?.into_iter().filter(|p| is_image(p)) {
            let stem = bg.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let box_path = category_dir.join("bbox").join(format!("{stem}.txt"));
            let Ok(text) = fs::read_to_string(&box_path) else {
                tracing::warn!(background = %bg.display(), "no box file; skipped");
                continue;
            };
            let placement = parse_box_file(&text).map_err(|e| Error::Manifest {
                record: format!("{category}/{stem}"),
                message: e.to_string(),
            })?;
            samples.push(SampleManifest {
                sample_id: format!("{category}/{stem}"),
                background_path: bg,
                placement,
                reference_paths: references.clone(),
                category: category.clone(),
                gt_alpha_path: None,
            });
        }
    }
    Ok(samples)
}
