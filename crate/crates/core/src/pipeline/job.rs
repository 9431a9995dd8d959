use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::{JobFailure, JobState, Mode};
use crate::backends::BackendProfile;
use crate::imaging::PlacementBox;

/// Artifact names, in pipeline order.
pub mod names {
    pub const BACKGROUND: &str = "i_bg";
    pub const BOX_MASK: &str = "m_bbx";
    pub const MASKED_BACKGROUND: &str = "i_mbg";
    pub const STAGE1: &str = "i_os";
    pub const SIDECAR: &str = "sidecar_alpha";
    pub const RAW_MASK: &str = "m_raw";
    pub const FOREGROUND_MASK: &str = "m_osf";
    pub const EDITED_MASK: &str = "m_osf_edited";
    pub const MASKED_BACKGROUND_2: &str = "i_mbg2";
    pub const FINAL: &str = "i_ins";

    /// The seven artifacts a complete run produces.
    pub const RUN_OUTPUTS: [&str; 7] = [
        BOX_MASK,
        MASKED_BACKGROUND,
        STAGE1,
        RAW_MASK,
        FOREGROUND_MASK,
        MASKED_BACKGROUND_2,
        FINAL,
    ];

    pub fn reference(i: usize) -> String {
        format!("i_ref_{i}")
    }
}

/// One recorded state change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Option<JobState>,
    pub to: JobState,
    pub at: DateTime<Utc>,
    pub cause: String,
}

/// A review gate being passed; the state does not change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub state: JobState,
    pub at: DateTime<Utc>,
    pub cause: String,
}

/// A single insertion run: inputs, configuration, progress and artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionJob {
    pub id: String,
    pub background_ref: String,
    pub reference_refs: Vec<String>,
    pub selected_reference: usize,
    #[serde(rename = "box")]
    pub placement: PlacementBox,
    pub profile: BackendProfile,
    pub seed: u64,
    pub mode: Mode,
    pub state: JobState,
    /// Review gate flag for the current `Stage1Done` / `MaskReady` state.
    pub approved: bool,
    /// Current artifact name -> key view.
    pub artifacts: BTreeMap<String, String>,
    /// Every key ever committed for this job, in write order (grow-only).
    pub history: Vec<String>,
    pub error: Option<JobFailure>,
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub approvals: Vec<Approval>,
}

impl CompositionJob {
    pub fn artifact_key(&self, name: &str) -> Option<&str> {
        self.artifacts.get(name).map(String::as_str)
    }

    pub fn has_artifact(&self, name: &str) -> bool {
        self.artifacts.contains_key(name)
    }

    pub fn artifact_names(&self) -> Vec<String> {
        self.artifacts.keys().cloned().collect()
    }

    /// Name of the mask stage 2 consumes: the edited mask if one was accepted.
    pub fn active_mask_name(&self) -> &'static str {
        if self.has_artifact(names::EDITED_MASK) {
            names::EDITED_MASK
        } else {
            names::FOREGROUND_MASK
        }
    }

    pub fn selected_reference_key(&self) -> &str {
        &self.reference_refs[self.selected_reference]
    }

    /// Review gates are open in auto mode or once approved.
    pub fn gate_open(&self) -> bool {
        self.mode == Mode::Auto || self.approved
    }
}
