//! Batch evaluation over a manifest and a set of backend profiles.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::manifest::SampleManifest;
use super::metrics::{
    bbox_adherence, bg_preservation, fidelity_hist, fidelity_ssim, mask_iou, HIST_BINS, SSIM_K1, SSIM_K2,
    SSIM_PATCH, SSIM_WINDOW,
};
use super::{contact_sheet, MetricReport};
use crate::backends::BackendProfile;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, RasterImage};
use crate::pipeline::{names, ArtifactStore, CompositionJob, Mode, Pipeline};
use crate::scalar::fraction_to;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CSV_COLUMNS: [&str; 10] = [
    "sample_id",
    "profile",
    "bg_max_abs",
    "bg_mean_abs",
    "bbox_adherence",
    "mask_iou",
    "fidelity_hist",
    "fidelity_ssim",
    "wall_time_s",
    "status",
];
/// `sample_id` of the per-profile mean rows.
pub const MEAN_ROW: &str = "mean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Worker threads; at least 1.
    pub parallel: usize,
    /// Fill the `wall_time_s` CSV column. Off by default so summaries of the
    /// same inputs are byte-identical across runs; reports always carry it.
    pub timing: bool,
    pub contact_sheets: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            parallel: 1,
            timing: false,
            contact_sheets: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    /// Sorted by (sample_id, profile).
    pub reports: Vec<MetricReport<f64>>,
    pub csv_path: PathBuf,
    pub failed: usize,
}

fn file_stem(sample: &str, profile: &str) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect()
    };
    format!("{}__{}", clean(sample), clean(profile))
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

struct Inputs {
    background: RasterImage,
    references: Vec<RasterImage>,
}

fn load_inputs(sample: &SampleManifest) -> Result<Inputs> {
    Ok(Inputs {
        background: RasterImage::load(&sample.background_path)?,
        references: sample
            .reference_paths
            .iter()
            .map(RasterImage::load)
            .collect::<Result<_>>()?,
    })
}

/// Fills the metric fields of `report` from a `Done` job. Ground truth for
/// `mask_iou` is `gt_alpha` when given, else the job's sidecar alpha.
pub fn fill_metrics(
    pipeline: &Pipeline,
    job: &CompositionJob,
    background: &RasterImage,
    references: &[RasterImage],
    gt_alpha: Option<&BinaryMask>,
    report: &mut MetricReport<f64>,
) -> Result<()> {
    let ins = pipeline.artifact_image(job, names::FINAL)?;
    let stage1 = pipeline.artifact_image(job, names::STAGE1)?;
    let mask = pipeline
        .artifact_mask(job, job.active_mask_name())?
        .ok_or_else(|| Error::NotFound("foreground mask".into()))?;
    let reference = references
        .get(job.selected_reference)
        .ok_or_else(|| Error::invalid("selected reference out of range"))?;

    let bg = bg_preservation(&ins, background, &mask)?;
    report.bg_max_abs = Some(bg.max_abs);
    report.bg_mean_abs = Some(bg.mean());
    report.bbox_adherence = Some(fraction_to(bbox_adherence(&mask, &job.placement)?));
    let truth = match gt_alpha {
        Some(t) => Some(t.clone()),
        None => pipeline.artifact_mask(job, names::SIDECAR)?,
    };
    report.mask_iou = truth.map(|t| mask_iou(&mask, &t)).transpose()?.map(fraction_to);
    report.fidelity_hist = fidelity_hist(reference, &ins, &mask).ok();
    report.stage1_fidelity_hist = fidelity_hist(reference, &stage1, &mask).ok();
    report.fidelity_ssim = fidelity_ssim(reference, &ins, &mask).ok();
    Ok(())
}

fn evaluate(
    pipeline: &Pipeline,
    sample: &SampleManifest,
    profile: &BackendProfile,
    out_dir: &Path,
    opts: &BatchOptions,
) -> MetricReport<f64> {
    let start = Instant::now();
    let mut report = MetricReport::pending(&sample.sample_id, &profile.name, &sample.category);
    let inputs = match load_inputs(sample) {
        Ok(i) => i,
        Err(e) => {
            report.fail("input", e.to_string());
            report.wall_time_s = start.elapsed().as_secs_f64();
            return report;
        }
    };
    let created = pipeline.create_job(
        &inputs.background,
        &inputs.references,
        sample.placement,
        profile.clone(),
        Mode::Auto,
        None,
    );
    let mut job = match created {
        Ok(j) => j,
        Err(e) => {
            report.fail("input", e.to_string());
            report.wall_time_s = start.elapsed().as_secs_f64();
            return report;
        }
    };
    report.job_id = Some(job.id.clone());
    match pipeline.run_full(&mut job) {
        Ok(()) => {
            let measured = sample
                .gt_alpha_path
                .as_ref()
                .map(BinaryMask::load)
                .transpose()
                .and_then(|gt| fill_metrics(pipeline, &job, &inputs.background, &inputs.references, gt.as_ref(), &mut report));
            if let Err(e) = measured {
                report.fail("metrics", e.to_string());
            }
        }
        Err(Error::StageFailed(f)) => report.fail(&format!("{}:{}", f.stage, f.kind), f.message),
        Err(e) => report.fail("pipeline", e.to_string()),
    }
    report.wall_time_s = start.elapsed().as_secs_f64();

    if opts.contact_sheets {
        let stage1 = pipeline.artifact_image(&job, names::STAGE1).ok();
        let ins = pipeline.artifact_image(&job, names::FINAL).ok();
        let sheet = contact_sheet::render(
            &inputs.background,
            &sample.placement,
            &inputs.references,
            stage1.as_ref(),
            ins.as_ref(),
        );
        let path = out_dir
            .join("sheets")
            .join(format!("{}.png", file_stem(&sample.sample_id, &profile.name)));
        if let Err(e) = sheet.and_then(|s| s.save_png(&path)) {
            tracing::warn!(sample = %sample.sample_id, error = %e, "contact sheet not written");
        }
    }
    report
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn write_csv(path: &Path, reports: &[MetricReport<f64>], profiles: &[BackendProfile], timing: bool) -> Result<()> {
    let mut buf = format!(
        "# insertkit evaluation summary; every metric is an artifact-defined proxy\n\
         # bg_max_abs, bg_mean_abs: absolute channel difference outside the foreground mask (0-255)\n\
         # bbox_adherence: share of the foreground mask inside the box; mask_iou: against gt alpha or sidecar\n\
         # fidelity_hist: per-channel histogram intersection, bins={HIST_BINS}\n\
         # fidelity_ssim: grayscale SSIM, patch={SSIM_PATCH}x{SSIM_PATCH}, window={SSIM_WINDOW}x{SSIM_WINDOW}, K1={SSIM_K1}, K2={SSIM_K2}, L=255\n"
    )
    .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(CSV_COLUMNS)?;
        let time = |t: f64| if timing { format!("{t:.3}") } else { String::new() };
        for r in reports {
            w.write_record([
                r.sample_id.clone(),
                r.profile.clone(),
                r.bg_max_abs.map(|v| v.to_string()).unwrap_or_default(),
                cell(r.bg_mean_abs),
                cell(r.bbox_adherence),
                cell(r.mask_iou),
                cell(r.fidelity_hist),
                cell(r.fidelity_ssim),
                time(r.wall_time_s),
                r.status.clone(),
            ])?;
        }
        for p in profiles {
            let rows: Vec<_> = reports.iter().filter(|r| r.profile == p.name).collect();
            let ok: Vec<_> = rows.iter().filter(|r| r.is_ok()).collect();
            w.write_record([
                MEAN_ROW.to_string(),
                p.name.clone(),
                cell(mean(ok.iter().map(|r| r.bg_max_abs.map(f64::from)))),
                cell(mean(ok.iter().map(|r| r.bg_mean_abs))),
                cell(mean(ok.iter().map(|r| r.bbox_adherence))),
                cell(mean(ok.iter().map(|r| r.mask_iou))),
                cell(mean(ok.iter().map(|r| r.fidelity_hist))),
                cell(mean(ok.iter().map(|r| r.fidelity_ssim))),
                if timing {
                    cell(mean(rows.iter().map(|r| Some(r.wall_time_s))))
                } else {
                    String::new()
                },
                format!("ok {}/{}", ok.len(), rows.len()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Runs every (sample, profile) pair through the full pipeline and writes
/// `reports/*.json`, `sheets/*.png` and `summary.csv` under `out_dir`.
/// Individual failures are recorded in their report; the batch continues.
pub fn run_batch(
    samples: &[SampleManifest],
    profiles: &[BackendProfile],
    out_dir: impl AsRef<Path>,
    opts: &BatchOptions,
) -> Result<BatchSummary> {
    let out_dir = out_dir.as_ref();
    if profiles.is_empty() {
        return Err(Error::invalid("at least one profile is required"));
    }
    for p in profiles {
        p.validate()?;
    }
    let mut names_seen = std::collections::HashSet::new();
    if !profiles.iter().all(|p| names_seen.insert(p.name.as_str())) {
        return Err(Error::invalid("profile names must be unique"));
    }
    for sub in ["reports", "sheets"] {
        ensure_dir(&out_dir.join(sub))?;
    }
    let pipeline = Pipeline::new(ArtifactStore::open(out_dir.join("jobs"))?);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let tasks: Vec<(&SampleManifest, &BackendProfile)> = samples
        .iter()
        .flat_map(|s| profiles.iter().map(move |p| (s, p)))
        .collect();
    let mut reports: Vec<MetricReport<f64>> = pool.install(|| {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|(s, p)| evaluate(&pipeline, s, p, out_dir, opts))
            .collect()
    });
    reports.sort_by(|a, b| (&a.sample_id, &a.profile).cmp(&(&b.sample_id, &b.profile)));

    for r in &reports {
        let path = out_dir
            .join("reports")
            .join(format!("{}.json", file_stem(&r.sample_id, &r.profile)));
        fs::write(&path, serde_json::to_string_pretty(r)? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    let csv_path = out_dir.join(SUMMARY_FILE);
    write_csv(&csv_path, &reports, profiles, opts.timing)?;
    let failed = reports.iter().filter(|r| !r.is_ok()).count();
    Ok(BatchSummary {
        reports,
        csv_path,
        failed,
    })
}
