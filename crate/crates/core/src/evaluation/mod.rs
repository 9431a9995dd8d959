//! Benchmark manifests, composition metrics and the batch runner.

pub mod batch;
pub mod contact_sheet;
pub mod manifest;
pub mod metrics;
pub mod murecom;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use batch::{fill_metrics, run_batch, BatchOptions, BatchSummary, CSV_COLUMNS, MEAN_ROW, SUMMARY_FILE};
pub use manifest::{load_manifest, write_manifest, SampleManifest};
pub use metrics::{bbox_adherence, bg_preservation, fidelity_hist, fidelity_ssim, mask_iou, BgPreservation};

use crate::scalar::Scalar;

pub const STATUS_OK: &str = "ok";

/// Metrics for one (sample, profile) run. Metric fields are absent when the
/// run failed or the metric is undefined for the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<S: Scalar> {
    pub sample_id: String,
    pub profile: String,
    pub category: String,
    pub job_id: Option<String>,
    /// `ok`, or `failed:<where>`.
    pub status: String,
    pub failure: Option<String>,
    pub bg_max_abs: Option<u8>,
    pub bg_mean_abs: Option<S>,
    pub bbox_adherence: Option<S>,
    pub mask_iou: Option<S>,
    pub fidelity_hist: Option<S>,
    pub fidelity_ssim: Option<S>,
    /// Histogram fidelity of the stage-1 composite under the same mask.
    pub stage1_fidelity_hist: Option<S>,
    pub wall_time_s: S,
}

impl<S: Scalar> MetricReport<S> {
    pub fn pending(sample_id: &str, profile: &str, category: &str) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            profile: profile.to_string(),
            category: category.to_string(),
            job_id: None,
            status: STATUS_OK.to_string(),
            failure: None,
            bg_max_abs: None,
            bg_mean_abs: None,
            bbox_adherence: None,
            mask_iou: None,
            fidelity_hist: None,
            fidelity_ssim: None,
            stage1_fidelity_hist: None,
            wall_time_s: S::zero(),
        }
    }

    pub fn fail(&mut self, place: &str, cause: String) {
        self.status = format!("failed:{place}");
        self.failure = Some(cause);
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}
