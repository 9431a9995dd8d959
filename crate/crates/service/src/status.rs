use std::collections::BTreeMap;

use insertkit::MetricReport;
use insertkit::imaging::PlacementBox;
use insertkit::pipeline::{Approval, JobFailure, Transition};
use insertkit::{CompositionJob, JobState, Mode};
use serde::{Deserialize, Serialize};

/// Body of `GET /jobs/{id}` and of every job-mutating response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub state: JobState,
    pub mode: Mode,
    /// Whether the current review gate has been passed.
    pub approved: bool,
    pub profile: String,
    #[serde(rename = "box")]
    pub placement: PlacementBox,
    pub seed: u64,
    pub selected_reference: usize,
    pub reference_count: usize,
    /// Names retrievable under `/jobs/{id}/artifacts/{name}`.
    pub artifacts: Vec<String>,
    /// Current name -> immutable key.
    pub artifact_keys: BTreeMap<String, String>,
    pub error: Option<JobFailure>,
    pub transitions: Vec<Transition>,
    pub approvals: Vec<Approval>,
}

impl From<&CompositionJob> for JobStatus {
    fn from(job: &CompositionJob) -> Self {
        Self {
            id: job.id.clone(),
            state: job.state,
            mode: job.mode,
            approved: job.approved,
            profile: job.profile.name.clone(),
            placement: job.placement,
            seed: job.seed,
            selected_reference: job.selected_reference,
            reference_count: job.reference_refs.len(),
            artifacts: job.artifact_names(),
            artifact_keys: job.artifacts.clone(),
            error: job.error.clone(),
            transitions: job.transitions.clone(),
            approvals: job.approvals.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchState {
    Running,
    Done,
    Failed,
}

/// Body of `POST /eval/batches` and `GET /eval/batches/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStatus {
    pub id: String,
    pub state: BatchState,
    pub manifest: String,
    pub profiles: Vec<String>,
    pub samples: usize,
    /// Samples whose run failed; set once done.
    pub failed: Option<usize>,
    pub csv_path: Option<String>,
    pub reports: Vec<MetricReport>,
    pub error: Option<String>,
}
