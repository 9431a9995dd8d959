use axum::body::Body;
use axum::extract::{FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Json;
use insertkit::imaging::{BinaryMask, PlacementBox, RasterImage};
use insertkit::pipeline::JobGuard;
use insertkit::{CompositionJob, Mode, Pipeline};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{ApiError, ApiResult};
use crate::status::JobStatus;
use crate::AppState;

pub const DEFAULT_PROFILE: &str = "mock-oracle";

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}

/// Runs the job forward on a blocking thread, holding its writer lock.
fn spawn_advance(app: &AppState, guard: JobGuard, mut job: CompositionJob) {
    let pipeline = app.pipeline.clone();
    let ticket = app.inflight.enter();
    tokio::task::spawn_blocking(move || {
        let _ticket = ticket;
        let _guard = guard;
        if let Err(e) = pipeline.advance(&mut job) {
            tracing::info!(job = %job.id, error = %e, "job stopped");
        }
    });
}

async fn field_text(field: axum::extract::multipart::Field<'_>, name: &str) -> ApiResult<String> {
    field
        .text()
        .await
        .map_err(|e| ApiError::bad_field(name, e.to_string()))
}

async fn field_bytes(field: axum::extract::multipart::Field<'_>, name: &str) -> ApiResult<Vec<u8>> {
    field
        .bytes()
        .await
        .map(|b| b.to_vec())
        .map_err(|e| ApiError::bad_field(name, e.to_string()))
}

fn parse_box(text: &str) -> ApiResult<PlacementBox> {
    let t = text.trim();
    let parsed = if t.starts_with('[') {
        serde_json::from_str::<PlacementBox>(t).map_err(|e| e.to_string())
    } else {
        t.parse::<PlacementBox>().map_err(|e| e.to_string())
    };
    parsed.map_err(|e| ApiError::bad_field("box", e))
}

#[derive(Default)]
struct Submission {
    background: Option<Vec<u8>>,
    references: Vec<Vec<u8>>,
    placement: Option<PlacementBox>,
    mode: Option<Mode>,
    profile: Option<String>,
    seed: Option<u64>,
    selected_reference: Option<usize>,
}

async fn read_submission(mut mp: Multipart) -> ApiResult<Submission> {
    let mut s = Submission::default();
    while let Some(field) = mp
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "background" => s.background = Some(field_bytes(field, "background").await?),
            "reference" | "references" => s.references.push(field_bytes(field, "reference").await?),
            "box" => s.placement = Some(parse_box(&field_text(field, "box").await?)?),
            "mode" => {
                let t = field_text(field, "mode").await?;
                s.mode = Some(t.trim().parse().map_err(|e: insertkit::Error| ApiError::bad_field("mode", e.to_string()))?);
            }
            "profile" => s.profile = Some(field_text(field, "profile").await?.trim().to_string()),
            "seed" => {
                let t = field_text(field, "seed").await?;
                s.seed = Some(t.trim().parse().map_err(|_| ApiError::bad_field("seed", "seed must be an unsigned integer"))?);
            }
            "selected_reference" => {
                let t = field_text(field, "selected_reference").await?;
                s.selected_reference = Some(
                    t.trim()
                        .parse()
                        .map_err(|_| ApiError::bad_field("selected_reference", "must be an index"))?,
                );
            }
            other => return Err(ApiError::bad_field(other, "unknown field")),
        }
    }
    Ok(s)
}

/// `POST /jobs`
pub async fn submit(State(app): State<AppState>, mp: Multipart) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let s = read_submission(mp).await?;
    let profile_name = s.profile.as_deref().unwrap_or(DEFAULT_PROFILE);
    let profile = app
        .profiles
        .get(profile_name)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown profile {profile_name:?}")))?;
    let placement = s.placement.ok_or_else(|| ApiError::bad_field("box", "box is required"))?;
    let background_bytes = s
        .background
        .ok_or_else(|| ApiError::bad_field("background", "background image is required"))?;
    if s.references.is_empty() {
        return Err(ApiError::bad_field("reference", "at least one reference image is required"));
    }

    let pipeline = app.pipeline.clone();
    let mode = s.mode.unwrap_or_default();
    let (job, guard) = blocking(move || {
        let background = RasterImage::decode(&background_bytes)
            .map_err(|e| ApiError::bad_field("background", e.to_string()))?;
        let references = s
            .references
            .iter()
            .map(|b| RasterImage::decode(b))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError::bad_field("reference", e.to_string()))?;
        placement
            .validate_within(background.width(), background.height())
            .map_err(|e| ApiError::bad_field("box", e.to_string()))?;
        if let Some(i) = s.selected_reference {
            if i >= references.len() {
                return Err(ApiError::bad_field("selected_reference", "index out of range"));
            }
        }
        let mut job = pipeline.create_job(&background, &references, placement, profile, mode, s.seed)?;
        let guard = pipeline.lock(&job.id)?;
        if let Some(i) = s.selected_reference {
            pipeline.select_reference(&mut job, i)?;
        }
        Ok((job, guard))
    })
    .await?;
    let status = JobStatus::from(&job);
    spawn_advance(&app, guard, job);
    Ok((StatusCode::CREATED, Json(status)))
}

fn load(pipeline: &Pipeline, id: &str) -> ApiResult<CompositionJob> {
    pipeline.load(id).map_err(|e| match e {
        insertkit::Error::NotFound(_) | insertkit::Error::InvalidArgument(_) => {
            ApiError::not_found(format!("job {id}"))
        }
        other => other.into(),
    })
}

/// `GET /jobs/{id}`
pub async fn get(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobStatus>> {
    let pipeline = app.pipeline.clone();
    let job = blocking(move || load(&pipeline, &id)).await?;
    Ok(Json(JobStatus::from(&job)))
}

fn etag_of(bytes: &[u8]) -> String {
    format!("\"{}\"", hex::encode(Sha256::digest(bytes)))
}

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .any(|t| t == "*" || t == etag)
}

/// `GET /jobs/{id}/artifacts/{name}`: `name` is a current artifact name
/// (`i_os`, `i_os.png`) or an immutable key from the job history.
pub async fn artifact(
    State(app): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let pipeline = app.pipeline.clone();
    let (bytes, current) = blocking(move || {
        let job = load(&pipeline, &id)?;
        let stem = name.strip_suffix(".png").unwrap_or(&name);
        let (key, current) = match job.artifact_key(stem) {
            Some(k) => (k.to_string(), true),
            None if job.history.contains(&name) => (name.clone(), false),
            None => return Err(ApiError::not_found(format!("artifact {name}"))),
        };
        Ok((pipeline.store().read_artifact(&job.id, &key)?, current))
    })
    .await?;

    let etag = etag_of(&bytes);
    let cache = if current { "no-cache" } else { "public, max-age=31536000, immutable" };
    let mut builder = Response::builder()
        .header(header::ETAG, &etag)
        .header(header::CACHE_CONTROL, cache);
    if etag_matches(&headers, &etag) {
        builder = builder.status(StatusCode::NOT_MODIFIED);
        return builder.body(Body::empty()).map_err(|e| ApiError::internal(e.to_string()));
    }
    builder
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))
        .body(Body::from(bytes))
        .map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
struct ActionRequest {
    action: String,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(skip)]
    mask: Option<Vec<u8>>,
}

async fn read_action(app: &AppState, req: Request) -> ApiResult<ActionRequest> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    if !multipart {
        let Json(body) = Json::<ActionRequest>::from_request(req, app)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
        return Ok(body);
    }
    let mut mp = Multipart::from_request(req, app)
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.body_text()))?;
    let mut out = ActionRequest::default();
    while let Some(field) = mp
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "action" => out.action = field_text(field, "action").await?.trim().to_string(),
            "seed" => {
                let t = field_text(field, "seed").await?;
                out.seed = Some(t.trim().parse().map_err(|_| ApiError::bad_field("seed", "seed must be an unsigned integer"))?);
            }
            "mask" => out.mask = Some(field_bytes(field, "mask").await?),
            other => return Err(ApiError::bad_field(other, "unknown field")),
        }
    }
    Ok(out)
}

fn mask_error(e: insertkit::Error) -> ApiError {
    use insertkit::Error as E;
    match e {
        E::DimensionMismatch { .. } | E::EmptyMask { .. } | E::Codec(_) | E::InvalidArgument(_) => {
            ApiError::bad_field("mask", e.to_string())
        }
        other => other.into(),
    }
}

/// `POST /jobs/{id}/actions`: `approve_stage1`, `retry_stage1` (optional
/// `seed`), `approve_mask` (optional `mask` PNG), `retry_segmentation`.
/// Accepts JSON or multipart. The state change is applied before the
/// response; the stage it starts runs in the background.
pub async fn action(State(app): State<AppState>, Path(id): Path<String>, req: Request) -> ApiResult<Json<JobStatus>> {
    let body = read_action(&app, req).await?;
    if !["approve_stage1", "retry_stage1", "approve_mask", "retry_segmentation"].contains(&body.action.as_str()) {
        return Err(ApiError::bad_field("action", format!("unknown action {:?}", body.action)));
    }
    let pipeline = app.pipeline.clone();
    let (job, guard) = blocking(move || {
        let mut job = load(&pipeline, &id)?;
        let guard = pipeline.lock(&job.id)?;
        // reload under the lock so we act on the latest committed state
        job = load(&pipeline, &job.id)?;
        match body.action.as_str() {
            "approve_stage1" => {
                pipeline.approve_stage1(&mut job)?;
                pipeline.begin_segmentation(&mut job)?;
            }
            "retry_stage1" => pipeline.begin_retry_stage1(&mut job, body.seed)?,
            "approve_mask" => {
                let edited = match &body.mask {
                    Some(bytes) => Some(BinaryMask::decode_png(bytes).map_err(mask_error)?),
                    None => None,
                };
                if job.state != insertkit::JobState::MaskReady {
                    return Err(ApiError::from(insertkit::Error::IllegalTransition {
                        state: job.state.to_string(),
                        action: "approve_mask".into(),
                    }));
                }
                pipeline.accept_mask(&mut job, edited.as_ref()).map_err(mask_error)?;
                pipeline.begin_stage2(&mut job)?;
            }
            _ => pipeline.begin_retry_segmentation(&mut job)?,
        }
        Ok((job, guard))
    })
    .await?;
    let status = JobStatus::from(&job);
    spawn_advance(&app, guard, job);
    Ok(Json(status))
}
