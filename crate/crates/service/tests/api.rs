use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use insertkit::backends::{BackendFactory, ProfileBackends, SegmentRequest, Segmenter};
use insertkit::imaging::{BinaryMask, Channels, PlacementBox, RasterImage};
use insertkit::{ArtifactStore, BackendProfile, Backends, JobState, Pipeline, ProfileTable};
use insertkit_service::{router, serve, AppState, BatchState, BatchStatus, JobStatus, ServiceConfig};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

const BOUNDARY: &str = "XyZboundary42";

fn background() -> RasterImage {
    RasterImage::from_fn(64, 64, Channels::Rgb, |x, y| {
        [40 + (x * 2) as u8, 60 + (y * 2) as u8, 90 + ((x + y) / 2) as u8, 255]
    })
    .unwrap()
}

fn reference() -> RasterImage {
    RasterImage::from_fn(24, 24, Channels::Rgb, |x, y| {
        let (dx, dy) = (x as f64 - 11.5, y as f64 - 11.5);
        if dx * dx + dy * dy > 110.0 {
            [255, 255, 255, 255]
        } else if (x / 2) % 2 == 0 {
            [220, 40, 30, 255]
        } else {
            [30, 50, 200, 255]
        }
    })
    .unwrap()
}

enum Part<'a> {
    Text(&'a str, String),
    File(&'a str, Vec<u8>),
}

fn multipart(parts: &[Part<'_>]) -> Vec<u8> {
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match p {
            Part::Text(name, value) => {
                body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
                body.extend_from_slice(value.as_bytes());
            }
            Part::File(name, bytes) => {
                body.extend_from_slice(
                    format!(
                        "Content-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\nContent-Type: image/png\r\n\r\n"
                    )
                    .as_bytes(),
                );
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

fn multipart_request(uri: &str, parts: &[Part<'_>]) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(parts)))
        .unwrap()
}

fn json_request(uri: &str, v: Value) -> Request<Body> {
    Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(v.to_string()))
        .unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

fn job_parts<'a>(mode: &str, profile: &str, box_text: &str) -> Vec<Part<'a>> {
    vec![
        Part::File("background", background().encode_png().unwrap()),
        Part::File("reference", reference().encode_png().unwrap()),
        Part::Text("box", box_text.to_string()),
        Part::Text("mode", mode.to_string()),
        Part::Text("profile", profile.to_string()),
        Part::Text("seed", "3".to_string()),
    ]
}

fn state_in(dir: &TempDir) -> AppState {
    let config = ServiceConfig {
        artifact_root: dir.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    AppState::from_config(&config).unwrap()
}

async fn submit(app: &Router, mode: &str) -> JobStatus {
    let (status, _, body) = send(app, multipart_request("/jobs", &job_parts(mode, "mock-oracle", "22,22,20,20"))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn wait_for(app: &Router, id: &str, pred: impl Fn(&JobStatus) -> bool) -> JobStatus {
    let start = Instant::now();
    loop {
        let (status, _, body) = get(app, &format!("/jobs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        let s: JobStatus = serde_json::from_slice(&body).unwrap();
        if pred(&s) {
            return s;
        }
        assert!(start.elapsed() < Duration::from_secs(20), "timed out in state {:?}", s.state);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

fn error_of(body: &[u8]) -> Value {
    let v: Value = serde_json::from_slice(body).unwrap();
    v["error"].clone()
}

#[tokio::test]
async fn healthz() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));
    let (status, _, _) = get(&app, "/healthz").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn auto_job_runs_to_done() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));
    let created = submit(&app, "auto").await;
    assert_eq!(created.state, JobState::Created);
    assert_eq!(created.placement, PlacementBox::new(22, 22, 20, 20).unwrap());
    assert_eq!(created.seed, 3);

    let done = wait_for(&app, &created.id, |s| s.state == JobState::Done).await;
    for name in ["i_bg", "m_bbx", "i_mbg", "i_os", "m_raw", "m_osf", "i_mbg2", "i_ins"] {
        assert!(done.artifacts.contains(&name.to_string()), "missing {name}");
    }
    let (status, headers, bytes) = get(&app, &format!("/jobs/{}/artifacts/i_ins", done.id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    let out = RasterImage::decode_png(&bytes).unwrap();
    assert_eq!((out.width(), out.height()), (64, 64));
}

#[tokio::test]
async fn artifact_etag_and_errors() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));
    let job = submit(&app, "auto").await;
    let job = wait_for(&app, &job.id, |s| s.state == JobState::Done).await;

    let uri = format!("/jobs/{}/artifacts/i_os.png", job.id);
    let (status, headers, bytes) = get(&app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    let etag = headers[header::ETAG].to_str().unwrap().to_string();
    assert!(etag.starts_with('"') && etag.len() == 66);

    let (status, _, body) = send(
        &app,
        Request::get(&uri).header(header::IF_NONE_MATCH, &etag).body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_MODIFIED);
    assert!(body.is_empty());

    let (status, _, again) = send(
        &app,
        Request::get(&uri).header(header::IF_NONE_MATCH, "\"stale\"").body(Body::empty()).unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, bytes);

    // immutable key from history
    let key = job.artifact_keys["i_os"].clone();
    let (status, _, by_key) = get(&app, &format!("/jobs/{}/artifacts/{key}", job.id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(by_key, bytes);

    let (status, _, body) = get(&app, &format!("/jobs/{}/artifacts/m_osf_edited", job.id)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_of(&body)["code"], "not_found");
    let (status, _, _) = get(&app, "/jobs/nope/artifacts/i_os").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = get(&app, "/jobs/..%2F..%2Fetc/artifacts/i_os").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn submit_validation() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));

    let (status, _, body) = send(&app, multipart_request("/jobs", &job_parts("auto", "mock-oracle", "60,60,20,20"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "box");

    let (status, _, body) = send(&app, multipart_request("/jobs", &job_parts("auto", "mock-oracle", "1,2,three"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "box");

    let (status, _, body) = send(&app, multipart_request("/jobs", &job_parts("auto", "no-such-profile", "22,22,20,20"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(error_of(&body)["message"].as_str().unwrap().contains("no-such-profile"));

    let (status, _, body) = send(&app, multipart_request("/jobs", &job_parts("sometimes", "mock-oracle", "22,22,20,20"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "mode");

    let mut parts = job_parts("auto", "mock-oracle", "22,22,20,20");
    parts[0] = Part::File("background", b"not a png".to_vec());
    let (status, _, body) = send(&app, multipart_request("/jobs", &parts)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "background");

    let mut parts = job_parts("auto", "mock-oracle", "22,22,20,20");
    parts.remove(1);
    let (status, _, body) = send(&app, multipart_request("/jobs", &parts)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "reference");

    let (status, _, _) = get(&app, "/jobs/does-not-exist").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn box_accepts_json_array() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));
    let (status, _, body) = send(&app, multipart_request("/jobs", &job_parts("auto", "mock-oracle", "[22, 22, 20, 20]"))).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
}

#[tokio::test]
async fn review_flow_with_actions() {
    let dir = TempDir::new().unwrap();
    let app = router(state_in(&dir));
    let job = submit(&app, "review").await;
    let s = wait_for(&app, &job.id, |s| s.state == JobState::Stage1Done).await;
    assert!(!s.approved);
    let first_os = s.artifact_keys["i_os"].clone();

    // the gate holds
    tokio::time::sleep(Duration::from_millis(50)).await;
    let (_, _, body) = get(&app, &format!("/jobs/{}", job.id)).await;
    assert_eq!(serde_json::from_slice::<JobStatus>(&body).unwrap().state, JobState::Stage1Done);

    let actions = format!("/jobs/{}/actions", job.id);
    let (status, _, body) = send(&app, json_request(&actions, json!({"action": "approve_mask"}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{}", String::from_utf8_lossy(&body));

    let (status, _, _) = send(&app, json_request(&actions, json!({"action": "retry_stage1", "seed": 9}))).await;
    assert_eq!(status, StatusCode::OK);
    let s = wait_for(&app, &job.id, |s| s.state == JobState::Stage1Done).await;
    assert_eq!(s.seed, 9);
    assert_ne!(s.artifact_keys["i_os"], first_os);

    let (status, _, body) = send(&app, json_request(&actions, json!({"action": "approve_stage1"}))).await;
    assert_eq!(status, StatusCode::OK);
    let s: JobStatus = serde_json::from_slice(&body).unwrap();
    assert_eq!(s.state, JobState::Segmenting);
    let s = wait_for(&app, &job.id, |s| s.state == JobState::MaskReady).await;
    assert!(!s.approved);

    let (status, _, _) = send(&app, json_request(&actions, json!({"action": "retry_segmentation"}))).await;
    assert_eq!(status, StatusCode::OK);
    wait_for(&app, &job.id, |s| s.state == JobState::MaskReady).await;

    // edited mask: wrong size is rejected, the right size is used
    let small = BinaryMask::new(8, 8, vec![1; 64]).unwrap().encode_png().unwrap();
    let (status, _, body) = send(
        &app,
        multipart_request(&actions, &[Part::Text("action", "approve_mask".into()), Part::File("mask", small)]),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "mask");

    let edited = BinaryMask::from_fn(64, 64, |x, y| (24..40).contains(&x) && (24..40).contains(&y))
        .unwrap()
        .encode_png()
        .unwrap();
    let (status, _, body) = send(
        &app,
        multipart_request(&actions, &[Part::Text("action", "approve_mask".into()), Part::File("mask", edited)]),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let s = wait_for(&app, &job.id, |s| s.state == JobState::Done).await;
    assert!(s.artifacts.contains(&"m_osf_edited".to_string()));

    let (status, _, body) = send(&app, json_request(&actions, json!({"action": "approve_stage1"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_of(&body)["code"], "conflict");
    let (status, _, body) = send(&app, json_request(&actions, json!({"action": "launch"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "action");
    let (status, _, _) = send(&app, json_request("/jobs/missing/actions", json!({"action": "approve_stage1"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(
        &app,
        Request::post(&actions)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from("{not json"))
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

/// Segmenter that blocks until released, so a job can be held mid-stage.
#[derive(Default)]
struct Gate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }
    fn wait(&self) {
        let mut open = self.open.lock().unwrap();
        while !*open {
            open = self.cv.wait(open).unwrap();
        }
    }
}

struct GatedSegmenter {
    inner: Arc<dyn Segmenter>,
    gate: Arc<Gate>,
}

impl Segmenter for GatedSegmenter {
    fn segment(&self, req: &SegmentRequest<'_>) -> insertkit::Result<BinaryMask> {
        self.gate.wait();
        self.inner.segment(req)
    }
}

struct GatedFactory(Arc<Gate>);

impl BackendFactory for GatedFactory {
    fn backends(&self, profile: &BackendProfile) -> insertkit::Result<Backends> {
        let mut b = ProfileBackends.backends(profile)?;
        b.segmenter = Arc::new(GatedSegmenter {
            inner: b.segmenter,
            gate: self.0.clone(),
        });
        Ok(b)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_actions_one_wins() {
    let dir = TempDir::new().unwrap();
    let gate = Arc::new(Gate::default());
    let store = ArtifactStore::open(dir.path().join("jobs")).unwrap();
    let pipeline = Pipeline::with_factory(store, Arc::new(GatedFactory(gate.clone())));
    let app = router(AppState::new(pipeline, ProfileTable::default(), dir.path().join("batches")));

    let job = submit(&app, "review").await;
    wait_for(&app, &job.id, |s| s.state == JobState::Stage1Done).await;

    let actions = format!("/jobs/{}/actions", job.id);
    let mut handles = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let uri = actions.clone();
        handles.push(tokio::spawn(async move {
            send(&app, json_request(&uri, json!({"action": "approve_stage1"}))).await.0
        }));
    }
    let mut codes = Vec::new();
    for h in handles {
        codes.push(h.await.unwrap());
    }
    assert_eq!(codes.iter().filter(|c| **c == StatusCode::OK).count(), 1, "{codes:?}");
    assert!(codes.iter().all(|c| *c == StatusCode::OK || *c == StatusCode::CONFLICT), "{codes:?}");

    // held mid-segmentation: the lock is busy
    let (status, _, _) = send(&app, json_request(&actions, json!({"action": "retry_segmentation"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    gate.release();
    let s = wait_for(&app, &job.id, |s| s.state == JobState::MaskReady).await;
    let segmentations = s.transitions.iter().filter(|t| t.to == JobState::Segmenting).count();
    assert_eq!(segmentations, 1);
}

#[tokio::test]
async fn restart_keeps_jobs() {
    let dir = TempDir::new().unwrap();
    let (id, status_before, bytes_before) = {
        let app = router(state_in(&dir));
        let job = submit(&app, "auto").await;
        let s = wait_for(&app, &job.id, |s| s.state == JobState::Done).await;
        let (_, _, bytes) = get(&app, &format!("/jobs/{}/artifacts/i_ins", s.id)).await;
        (s.id.clone(), s, bytes)
    };
    let app = router(state_in(&dir));
    let (status, _, body) = get(&app, &format!("/jobs/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<JobStatus>(&body).unwrap(), status_before);
    let (_, _, bytes) = get(&app, &format!("/jobs/{id}/artifacts/i_ins")).await;
    assert_eq!(bytes, bytes_before);
}

#[tokio::test]
async fn serve_recovers_interrupted_jobs() {
    let dir = TempDir::new().unwrap();
    let id = {
        let store = ArtifactStore::open(dir.path().join("jobs")).unwrap();
        let pipeline = Pipeline::new(store);
        let profile = ProfileTable::default().get("mock-oracle").unwrap().clone();
        let mut job = pipeline
            .create_job(
                &background(),
                &[reference()],
                PlacementBox::new(22, 22, 20, 20).unwrap(),
                profile,
                insertkit::Mode::Auto,
                Some(1),
            )
            .unwrap();
        pipeline.begin_stage1(&mut job).unwrap();
        job.id
    };
    let config = ServiceConfig {
        listen: "127.0.0.1:0".into(),
        artifact_root: dir.path().to_path_buf(),
        ..ServiceConfig::default()
    };
    serve(config, async {}).await.unwrap();

    let app = router(state_in(&dir));
    let (_, _, body) = get(&app, &format!("/jobs/{id}")).await;
    let s: JobStatus = serde_json::from_slice(&body).unwrap();
    assert_eq!(s.state, JobState::Failed);
    assert!(s.error.is_some());
}

fn write_manifest(dir: &TempDir) -> std::path::PathBuf {
    let cfg = insertkit::evaluation::synthetic::SuiteSpec {
        count: 3,
        high_contrast: 2,
        ..Default::default()
    };
    let samples = insertkit::evaluation::synthetic::generate(&cfg).unwrap();
    insertkit::evaluation::synthetic::write_suite(dir.path().join("suite"), &samples).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn eval_batches() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(&dir);
    let app = router(state_in(&dir));

    let (status, _, body) = send(
        &app,
        json_request(
            "/eval/batches",
            json!({"manifest": manifest, "profiles": ["mock-oracle", "mock-heuristic"], "parallel": 2}),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&body));
    let started: BatchStatus = serde_json::from_slice(&body).unwrap();
    assert_eq!(started.samples, 3);

    let start = Instant::now();
    let done = loop {
        let (status, _, body) = get(&app, &format!("/eval/batches/{}", started.id)).await;
        assert_eq!(status, StatusCode::OK);
        let s: BatchStatus = serde_json::from_slice(&body).unwrap();
        if s.state != BatchState::Running {
            break s;
        }
        assert!(start.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(done.state, BatchState::Done);
    assert_eq!(done.reports.len(), 6);
    assert_eq!(done.failed, Some(0));
    assert!(std::path::Path::new(done.csv_path.as_ref().unwrap()).exists());

    // survives a restart via batch.json
    let app2 = router(state_in(&dir));
    let (status, _, body) = get(&app2, &format!("/eval/batches/{}", started.id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<BatchStatus>(&body).unwrap(), done);

    let (status, _, _) = get(&app, "/eval/batches/0123abcd").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(&app, json_request("/eval/batches", json!({"manifest": manifest, "profiles": ["ghost"]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, body) = send(
        &app,
        json_request("/eval/batches", json!({"manifest": "/nonexistent.json", "profiles": ["mock-oracle"]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body)["field"], "manifest");
    let (status, _, _) = send(&app, json_request("/eval/batches", json!({"manifest": manifest, "profiles": []}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
