use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JobState {
    Created,
    Stage1Running,
    Stage1Done,
    Segmenting,
    MaskReady,
    Stage2Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_running(self) -> bool {
        matches!(
            self,
            JobState::Stage1Running | JobState::Segmenting | JobState::Stage2Running
        )
    }

    /// Edges of the job state machine.
    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Created, Stage1Running)
                | (Stage1Running, Stage1Done)
                | (Stage1Done, Segmenting)
                | (Stage1Done, Stage1Running)
                | (Segmenting, MaskReady)
                | (MaskReady, Segmenting)
                | (MaskReady, Stage2Running)
                | (Stage2Running, Done)
                | (Stage1Running, Failed)
                | (Segmenting, Failed)
                | (Stage2Running, Failed)
                | (Failed, Created)
                | (Failed, Stage1Done)
                | (Failed, MaskReady)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Auto,
    Review,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "auto" => Ok(Mode::Auto),
            "review" => Ok(Mode::Review),
            other => Err(Error::invalid(format!("mode must be auto or review, got {other:?}"))),
        }
    }
}

/// Pipeline stage, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Compose,
    Segment,
    Refine,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Compose => "compose",
            Stage::Segment => "segment",
            Stage::Refine => "refine",
        }
    }

    /// State a failed job returns to when retried.
    pub fn resume_state(self) -> JobState {
        match self {
            Stage::Compose => JobState::Created,
            Stage::Segment => JobState::Stage1Done,
            Stage::Refine => JobState::MaskReady,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BackendUnavailable,
    SegmentationEmpty,
    Configuration,
    EmptyReference,
    InvalidInput,
    Internal,
}

impl FailureKind {
    pub fn classify(err: &Error) -> FailureKind {
        match err {
            Error::BackendUnavailable { .. } => FailureKind::BackendUnavailable,
            Error::EmptyMask { .. } => FailureKind::SegmentationEmpty,
            Error::MissingOracle | Error::Config(_) => FailureKind::Configuration,
            Error::EmptyReference => FailureKind::EmptyReference,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => FailureKind::InvalidInput,
            _ => FailureKind::Internal,
        }
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("internal"))
    }
}

/// Structured failure recorded on a job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobFailure {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for JobFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed ({}): {}", self.stage, self.kind, self.message)
    }
}
