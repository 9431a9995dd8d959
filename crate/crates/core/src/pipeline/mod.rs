//! Job orchestration: the stage state machine, review gates and the
//! persistent artifact store.
//!
//! A job moves `Created -> Stage1Running -> Stage1Done -> Segmenting ->
//! MaskReady -> Stage2Running -> Done`. Each stage commits its artifacts only
//! when it succeeds; a failing stage moves the job to `Failed` and records
//! where a retry resumes. Long stages are split into `begin_*` (state change
//! only) and `complete_*` (the work) so a server can answer before the work
//! finishes; `run_*` does both.

mod job;
pub mod stages;
mod state;
mod store;

use std::sync::Arc;

use chrono::Utc;
use uuid::Uuid;

pub use job::{names, Approval, CompositionJob, Transition};
pub use state::{FailureKind, JobFailure, JobState, Mode, Stage};
pub use store::{ArtifactStore, Event, EventKind, JobGuard, JobLocks, EVENTS_FILE, JOB_FILE};

use crate::backends::{BackendFactory, BackendProfile, Backends, ProfileBackends};
use crate::error::{Error, Result};
use crate::evaluation::metrics::fidelity_hist;
use crate::imaging::{BinaryMask, PlacementBox, RasterImage};
use crate::masking::{erase, refine_mask};

/// Artifacts produced downstream of each stage; cleared when that stage reruns.
const AFTER_STAGE1: [&str; 5] = [
    names::RAW_MASK,
    names::FOREGROUND_MASK,
    names::EDITED_MASK,
    names::MASKED_BACKGROUND_2,
    names::FINAL,
];
const AFTER_SEGMENTATION: [&str; 1] = [names::FINAL];

/// A request against a job, as issued by the CLI, the service or tests.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    RunStage1,
    ApproveStage1,
    RetryStage1 { seed: Option<u64> },
    RunSegmentation,
    RetrySegmentation,
    AcceptMask { edited: Option<BinaryMask> },
    RunStage2,
    RunFull,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::RunStage1 => "run_stage1",
            Action::ApproveStage1 => "approve_stage1",
            Action::RetryStage1 { .. } => "retry_stage1",
            Action::RunSegmentation => "run_segmentation",
            Action::RetrySegmentation => "retry_segmentation",
            Action::AcceptMask { .. } => "accept_mask",
            Action::RunStage2 => "run_stage2",
            Action::RunFull => "run_full",
        }
    }
}

#[derive(Clone)]
pub struct Pipeline {
    store: ArtifactStore,
    factory: Arc<dyn BackendFactory>,
    locks: JobLocks,
}

fn illegal(job: &CompositionJob, action: &str) -> Error {
    Error::IllegalTransition {
        state: job.state.to_string(),
        action: action.to_string(),
    }
}

impl Pipeline {
    pub fn new(store: ArtifactStore) -> Self {
        Self::with_factory(store, Arc::new(ProfileBackends))
    }

    pub fn with_factory(store: ArtifactStore, factory: Arc<dyn BackendFactory>) -> Self {
        Self {
            store,
            factory,
            locks: JobLocks::default(),
        }
    }

    pub fn store(&self) -> &ArtifactStore {
        &self.store
    }

    /// Single-writer lock for a job; [`Error::Busy`] when already held.
    pub fn lock(&self, id: &str) -> Result<JobGuard> {
        self.locks.try_lock(id)
    }

    pub fn load(&self, id: &str) -> Result<CompositionJob> {
        self.store.load_job(id)
    }

    fn backends(&self, profile: &BackendProfile) -> Result<Backends> {
        self.factory.backends(profile)
    }

    /// Validates the inputs, stores them as artifacts and persists a `Created` job.
    pub fn create_job(
        &self,
        background: &RasterImage,
        references: &[RasterImage],
        placement: PlacementBox,
        profile: BackendProfile,
        mode: Mode,
        seed: Option<u64>,
    ) -> Result<CompositionJob> {
        placement.validate_within(background.width(), background.height())?;
        if references.is_empty() {
            return Err(Error::invalid("at least one reference image is required"));
        }
        profile.validate()?;

        let id = Uuid::new_v4().simple().to_string();
        self.store.create_job_dir(&id)?;
        let mut job = CompositionJob {
            id: id.clone(),
            background_ref: String::new(),
            reference_refs: Vec::new(),
            selected_reference: 0,
            placement,
            seed: seed.unwrap_or(profile.seed),
            profile,
            mode,
            state: JobState::Created,
            approved: false,
            artifacts: Default::default(),
            history: Vec::new(),
            error: None,
            transitions: Vec::new(),
            approvals: Vec::new(),
        };
        job.background_ref = self.commit(&mut job, names::BACKGROUND, &background.encode_png()?)?;
        for (i, r) in references.iter().enumerate() {
            let key = self.commit(&mut job, &names::reference(i), &r.encode_png()?)?;
            job.reference_refs.push(key);
        }
        self.record(&mut job, None, JobState::Created, "created")?;
        Ok(job)
    }

    /// Picks which reference a `Created` job will use.
    pub fn select_reference(&self, job: &mut CompositionJob, index: usize) -> Result<()> {
        if job.state != JobState::Created {
            return Err(illegal(job, "select_reference"));
        }
        if index >= job.reference_refs.len() {
            return Err(Error::invalid(format!(
                "reference index {index} out of range ({} references)",
                job.reference_refs.len()
            )));
        }
        job.selected_reference = index;
        self.store.save_job(job)
    }

    fn commit(&self, job: &mut CompositionJob, name: &str, bytes: &[u8]) -> Result<String> {
        let key = self.store.put_artifact(&job.id, name, bytes)?;
        job.artifacts.insert(name.to_string(), key.clone());
        job.history.push(key.clone());
        Ok(key)
    }

    fn record(
        &self,
        job: &mut CompositionJob,
        from: Option<JobState>,
        to: JobState,
        cause: &str,
    ) -> Result<()> {
        let at = Utc::now();
        job.transitions.push(Transition {
            from,
            to,
            at,
            cause: cause.to_string(),
        });
        self.store.save_job(job)?;
        self.store.append_event(
            &job.id,
            &Event {
                timestamp: at,
                kind: EventKind::Transition,
                from,
                to,
                cause: cause.to_string(),
            },
        )
    }

    fn approve(&self, job: &mut CompositionJob, cause: &str) -> Result<()> {
        let at = Utc::now();
        job.approved = true;
        job.approvals.push(Approval {
            state: job.state,
            at,
            cause: cause.to_string(),
        });
        self.store.save_job(job)?;
        self.store.append_event(
            &job.id,
            &Event {
                timestamp: at,
                kind: EventKind::Approval,
                from: Some(job.state),
                to: job.state,
                cause: cause.to_string(),
            },
        )
    }

    fn transition(&self, job: &mut CompositionJob, to: JobState, cause: &str) -> Result<()> {
        let from = job.state;
        if !from.can_transition_to(to) {
            return Err(Error::IllegalTransition {
                state: from.to_string(),
                action: format!("move to {to}"),
            });
        }
        job.state = to;
        if matches!(to, JobState::Stage1Done | JobState::MaskReady) {
            job.approved = job.mode == Mode::Auto;
        }
        self.record(job, Some(from), to, cause)
    }

    fn fail(&self, job: &mut CompositionJob, stage: Stage, err: Error) -> Error {
        let failure = JobFailure {
            stage,
            kind: FailureKind::classify(&err),
            message: err.to_string(),
        };
        job.error = Some(failure.clone());
        if let Err(e) = self.transition(job, JobState::Failed, &failure.to_string()) {
            return e;
        }
        Error::StageFailed(failure)
    }

    fn clear(job: &mut CompositionJob, names: &[&str]) {
        for n in names {
            job.artifacts.remove(*n);
        }
    }

    fn image(&self, job: &CompositionJob, key: &str) -> Result<RasterImage> {
        RasterImage::decode_png(&self.store.read_artifact(&job.id, key)?)
    }

    pub fn artifact_image(&self, job: &CompositionJob, name: &str) -> Result<RasterImage> {
        let key = job
            .artifact_key(name)
            .ok_or_else(|| Error::NotFound(format!("artifact {name}")))?;
        self.image(job, key)
    }

    pub fn artifact_mask(&self, job: &CompositionJob, name: &str) -> Result<Option<BinaryMask>> {
        match job.artifact_key(name) {
            Some(key) => Ok(Some(BinaryMask::decode_png(&self.store.read_artifact(&job.id, key)?)?)),
            None => Ok(None),
        }
    }

    pub fn background(&self, job: &CompositionJob) -> Result<RasterImage> {
        self.image(job, &job.background_ref)
    }

    fn reference(&self, job: &CompositionJob) -> Result<RasterImage> {
        self.image(job, job.selected_reference_key())
    }

    /// Leaves `Failed` for the state the failed stage resumes from.
    fn recover(&self, job: &mut CompositionJob, stage: Stage) -> Result<()> {
        match &job.error {
            Some(f) if job.state == JobState::Failed && f.stage == stage => {}
            _ => return Err(illegal(job, "retry")),
        }
        job.error = None;
        self.transition(job, stage.resume_state(), "retry after failure")
    }

    // ---- stage 1 ----

    pub fn begin_stage1(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Created {
            return Err(illegal(job, "run_stage1"));
        }
        self.transition(job, JobState::Stage1Running, "run_stage1")
    }

    pub fn complete_stage1(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Stage1Running {
            return Err(illegal(job, "complete_stage1"));
        }
        let outcome = (|| {
            let backends = self.backends(&job.profile)?;
            let bg = self.background(job)?;
            let reference = self.reference(job)?;
            stages::authenticity_stage(&backends, &bg, &job.placement, &reference, job.seed)
        })();
        let out = match outcome {
            Ok(out) => out,
            Err(e) => return Err(self.fail(job, Stage::Compose, e)),
        };
        Self::clear(job, &AFTER_STAGE1);
        job.artifacts.remove(names::SIDECAR);
        self.commit(job, names::BOX_MASK, &out.box_mask.encode_png()?)?;
        self.commit(job, names::MASKED_BACKGROUND, &out.masked_background.encode_png()?)?;
        self.commit(job, names::STAGE1, &out.composite.encode_png()?)?;
        if let Some(sidecar) = &out.sidecar {
            self.commit(job, names::SIDECAR, &sidecar.encode_png()?)?;
        }
        self.transition(job, JobState::Stage1Done, "stage 1 committed")
    }

    pub fn run_stage1(&self, job: &mut CompositionJob) -> Result<()> {
        self.begin_stage1(job)?;
        self.complete_stage1(job)
    }

    pub fn approve_stage1(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Stage1Done || job.approved {
            return Err(illegal(job, "approve_stage1"));
        }
        self.approve(job, "stage 1 approved")
    }

    /// Re-enters stage 1 from `Stage1Done` (or from a stage-1 failure),
    /// optionally with a new seed.
    pub fn begin_retry_stage1(&self, job: &mut CompositionJob, seed: Option<u64>) -> Result<()> {
        match job.state {
            JobState::Stage1Done => {}
            JobState::Failed => self.recover(job, Stage::Compose)?,
            _ => return Err(illegal(job, "retry_stage1")),
        }
        if let Some(s) = seed {
            job.seed = s;
        }
        self.transition(job, JobState::Stage1Running, "retry_stage1")
    }

    pub fn retry_stage1(&self, job: &mut CompositionJob, seed: Option<u64>) -> Result<()> {
        self.begin_retry_stage1(job, seed)?;
        self.complete_stage1(job)
    }

    // ---- segmentation ----

    pub fn begin_segmentation(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Stage1Done || !job.gate_open() {
            return Err(illegal(job, "run_segmentation"));
        }
        self.transition(job, JobState::Segmenting, "run_segmentation")
    }

    pub fn complete_segmentation(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Segmenting {
            return Err(illegal(job, "complete_segmentation"));
        }
        let outcome = (|| {
            let backends = self.backends(&job.profile)?;
            let bg = self.background(job)?;
            let composite = self.artifact_image(job, names::STAGE1)?;
            let sidecar = self.artifact_mask(job, names::SIDECAR)?;
            stages::mask_stage(
                &backends,
                &bg,
                &composite,
                &job.placement,
                sidecar.as_ref(),
                job.seed,
                job.profile.margin,
                job.profile.policy,
            )
        })();
        let out = match outcome {
            Ok(out) => out,
            Err(e) => return Err(self.fail(job, Stage::Segment, e)),
        };
        Self::clear(job, &AFTER_STAGE1);
        self.commit(job, names::RAW_MASK, &out.raw.encode_png()?)?;
        self.commit(job, names::FOREGROUND_MASK, &out.mask.encode_png()?)?;
        self.commit(job, names::MASKED_BACKGROUND_2, &out.masked_background.encode_png()?)?;
        self.transition(job, JobState::MaskReady, "mask committed")
    }

    pub fn run_segmentation(&self, job: &mut CompositionJob) -> Result<()> {
        self.begin_segmentation(job)?;
        self.complete_segmentation(job)
    }

    pub fn begin_retry_segmentation(&self, job: &mut CompositionJob) -> Result<()> {
        match job.state {
            JobState::MaskReady => {}
            JobState::Failed => {
                self.recover(job, Stage::Segment)?;
                job.approved = true;
            }
            _ => return Err(illegal(job, "retry_segmentation")),
        }
        self.transition(job, JobState::Segmenting, "retry_segmentation")
    }

    pub fn retry_segmentation(&self, job: &mut CompositionJob) -> Result<()> {
        self.begin_retry_segmentation(job)?;
        self.complete_segmentation(job)
    }

    /// Approves the mask at the `MaskReady` gate, optionally replacing it
    /// with a user edit (re-refined, stored as `m_osf_edited`).
    pub fn accept_mask(&self, job: &mut CompositionJob, edited: Option<&BinaryMask>) -> Result<()> {
        if job.state != JobState::MaskReady {
            return Err(illegal(job, "accept_mask"));
        }
        let Some(edited) = edited else {
            return self.approve(job, "mask approved");
        };
        let bg = self.background(job)?;
        edited.ensure_dims(bg.width(), bg.height())?;
        let mask = refine_mask(edited, &job.placement, job.profile.margin, job.profile.policy)?;
        let masked = erase(&bg, &mask)?;
        Self::clear(job, &AFTER_SEGMENTATION);
        self.commit(job, names::EDITED_MASK, &mask.encode_png()?)?;
        self.commit(job, names::MASKED_BACKGROUND_2, &masked.encode_png()?)?;
        self.approve(job, "edited mask approved")
    }

    // ---- stage 2 ----

    pub fn begin_stage2(&self, job: &mut CompositionJob) -> Result<()> {
        match job.state {
            JobState::MaskReady if job.gate_open() => {}
            JobState::Failed => {
                self.recover(job, Stage::Refine)?;
                job.approved = true;
            }
            _ => return Err(illegal(job, "run_stage2")),
        }
        self.transition(job, JobState::Stage2Running, "run_stage2")
    }

    pub fn complete_stage2(&self, job: &mut CompositionJob) -> Result<()> {
        if job.state != JobState::Stage2Running {
            return Err(illegal(job, "complete_stage2"));
        }
        let outcome = (|| {
            let backends = self.backends(&job.profile)?;
            let bg = self.background(job)?;
            let reference = self.reference(job)?;
            let masked = self.artifact_image(job, names::MASKED_BACKGROUND_2)?;
            let mask = self
                .artifact_mask(job, job.active_mask_name())?
                .ok_or_else(|| Error::NotFound("foreground mask".into()))?;
            stages::fidelity_stage(&backends, &bg, &masked, &mask, &job.placement, &reference, job.seed)
        })();
        let out = match outcome {
            Ok(out) => out,
            Err(e) => return Err(self.fail(job, Stage::Refine, e)),
        };
        self.commit(job, names::FINAL, &out.encode_png()?)?;
        self.transition(job, JobState::Done, "stage 2 committed")
    }

    pub fn run_stage2(&self, job: &mut CompositionJob) -> Result<()> {
        self.begin_stage2(job)?;
        self.complete_stage2(job)
    }

    /// All three stages back to back (auto mode only).
    pub fn run_full(&self, job: &mut CompositionJob) -> Result<()> {
        if job.mode != Mode::Auto || job.state != JobState::Created {
            return Err(illegal(job, "run_full"));
        }
        self.run_stage1(job)?;
        self.run_segmentation(job)?;
        self.run_stage2(job)
    }

    /// Drives a job forward from wherever it stands (including a started
    /// but uncompleted stage) until it is `Done`, `Failed`, or held at a
    /// closed review gate.
    pub fn advance(&self, job: &mut CompositionJob) -> Result<()> {
        loop {
            match job.state {
                JobState::Created => self.run_stage1(job)?,
                JobState::Stage1Running => self.complete_stage1(job)?,
                JobState::Stage1Done if job.gate_open() => self.run_segmentation(job)?,
                JobState::Segmenting => self.complete_segmentation(job)?,
                JobState::MaskReady if job.gate_open() => self.run_stage2(job)?,
                JobState::Stage2Running => self.complete_stage2(job)?,
                _ => return Ok(()),
            }
        }
    }

    pub fn apply(&self, job: &mut CompositionJob, action: Action) -> Result<()> {
        match action {
            Action::RunStage1 => self.run_stage1(job),
            Action::ApproveStage1 => self.approve_stage1(job),
            Action::RetryStage1 { seed } => self.retry_stage1(job, seed),
            Action::RunSegmentation => self.run_segmentation(job),
            Action::RetrySegmentation => self.retry_segmentation(job),
            Action::AcceptMask { edited } => self.accept_mask(job, edited.as_ref()),
            Action::RunStage2 => self.run_stage2(job),
            Action::RunFull => self.run_full(job),
        }
    }

    /// Runs every reference in memory and selects the one whose composite
    /// scores highest on histogram fidelity. Only valid before stage 1.
    pub fn choose_best_reference(&self, job: &mut CompositionJob) -> Result<usize> {
        if job.state != JobState::Created {
            return Err(illegal(job, "choose_best_reference"));
        }
        let backends = self.backends(&job.profile)?;
        let bg = self.background(job)?;
        let mut best: Option<(usize, f64)> = None;
        let mut first_err = None;
        for (i, key) in job.reference_refs.iter().enumerate() {
            let scored = self.image(job, key).and_then(|reference| {
                let run = stages::run_in_memory(
                    &backends,
                    &bg,
                    &job.placement,
                    &reference,
                    job.seed,
                    job.profile.margin,
                    job.profile.policy,
                )?;
                fidelity_hist::<f64>(&reference, &run.composite, &run.segmentation.mask)
            });
            match scored {
                Ok(score) if best.is_none_or(|(_, s)| score > s) => best = Some((i, score)),
                Ok(_) => {}
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        match best {
            Some((i, _)) => {
                self.select_reference(job, i)?;
                Ok(i)
            }
            None => Err(first_err.unwrap_or_else(|| Error::invalid("no references"))),
        }
    }

    /// Marks jobs left in a running state (e.g. by a crash) as failed so they
    /// can be retried. Returns the affected ids.
    pub fn recover_interrupted(&self) -> Result<Vec<String>> {
        let mut recovered = Vec::new();
        for id in self.store.job_ids()? {
            let Ok(_guard) = self.lock(&id) else { continue };
            let mut job = self.store.load_job(&id)?;
            let stage = match job.state {
                JobState::Stage1Running => Stage::Compose,
                JobState::Segmenting => Stage::Segment,
                JobState::Stage2Running => Stage::Refine,
                _ => continue,
            };
            let _ = self.fail(&mut job, stage, Error::BackendUnavailable {
                stage: stage.as_str(),
                cause: "interrupted before the stage committed".into(),
            });
            recovered.push(id);
        }
        Ok(recovered)
    }
}
