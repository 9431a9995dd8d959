use std::path::PathBuf;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::Json;
use insertkit::evaluation::{load_manifest, run_batch, BatchOptions};
use serde::Deserialize;

use crate::error::{ApiError, ApiResult};
use crate::status::{BatchState, BatchStatus};
use crate::AppState;

pub const BATCH_FILE: &str = "batch.json";

#[derive(Debug, Deserialize)]
pub struct BatchRequest {
    /// Path to a manifest JSON readable by the server.
    pub manifest: String,
    pub profiles: Vec<String>,
    #[serde(default)]
    pub parallel: Option<usize>,
    #[serde(default)]
    pub timing: bool,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
}

/// `POST /eval/batches`
pub async fn submit(State(app): State<AppState>, Json(req): Json<BatchRequest>) -> ApiResult<(StatusCode, Json<BatchStatus>)> {
    if req.profiles.is_empty() {
        return Err(ApiError::bad_field("profiles", "at least one profile is required"));
    }
    let profiles = req
        .profiles
        .iter()
        .map(|n| {
            app.profiles
                .get(n)
                .cloned()
                .ok_or_else(|| ApiError::not_found(format!("unknown profile {n:?}")))
        })
        .collect::<ApiResult<Vec<_>>>()?;
    let parallel = req.parallel.unwrap_or(1);
    if parallel == 0 {
        return Err(ApiError::bad_field("parallel", "parallel must be at least 1"));
    }
    let manifest_path = PathBuf::from(&req.manifest);
    let samples = tokio::task::spawn_blocking(move || load_manifest(&manifest_path))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::bad_field("manifest", e.to_string()))?;

    let id = uuid::Uuid::new_v4().simple().to_string();
    let out_dir = app.batch_root.join(&id);
    let status = BatchStatus {
        id: id.clone(),
        state: BatchState::Running,
        manifest: req.manifest.clone(),
        profiles: req.profiles.clone(),
        samples: samples.len(),
        failed: None,
        csv_path: None,
        reports: Vec::new(),
        error: None,
    };
    app.batches.lock().expect("batch table poisoned").insert(id.clone(), status.clone());

    let opts = BatchOptions {
        parallel,
        timing: req.timing,
        ..BatchOptions::default()
    };
    let ticket = app.inflight.enter();
    let table = app.batches.clone();
    let mut done = status.clone();
    tokio::task::spawn_blocking(move || {
        let _ticket = ticket;
        match run_batch(&samples, &profiles, &out_dir, &opts) {
            Ok(summary) => {
                done.state = BatchState::Done;
                done.failed = Some(summary.failed);
                done.csv_path = Some(summary.csv_path.display().to_string());
                done.reports = summary.reports;
            }
            Err(e) => {
                done.state = BatchState::Failed;
                done.error = Some(e.to_string());
            }
        }
        if std::fs::create_dir_all(&out_dir).is_ok() {
            if let Ok(json) = serde_json::to_vec_pretty(&done) {
                let _ = std::fs::write(out_dir.join(BATCH_FILE), json);
            }
        }
        table.lock().expect("batch table poisoned").insert(done.id.clone(), done);
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

/// `GET /eval/batches/{id}`
pub async fn get(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<BatchStatus>> {
    if let Some(s) = app.batches.lock().expect("batch table poisoned").get(&id) {
        return Ok(Json(s.clone()));
    }
    if !valid_id(&id) {
        return Err(ApiError::not_found(format!("batch {id}")));
    }
    let path = app.batch_root.join(&id).join(BATCH_FILE);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("batch {id}")))?;
    let status: BatchStatus = serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(status))
}
