use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Multipart, State};
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use insertkit::backends::{
    ComposeRequest, Compositor, HeuristicSegmenter, MockCompositor, MockRefiner, OracleSegmenter, RefineRequest,
    Refiner, SegmentRequest, Segmenter, WireClient, WireMetadata,
};
use insertkit::imaging::{BinaryMask, Channels, PlacementBox, RasterImage};
use insertkit::masking::{erase, rasterize_box};
use insertkit::Error;
use proptest::prelude::*;

const GRAY: [u8; 3] = [128, 128, 128];

fn stage1_inputs(bg: &RasterImage, b: &PlacementBox) -> (BinaryMask, RasterImage) {
    let m = rasterize_box(b, bg.width(), bg.height()).unwrap();
    let masked = erase(bg, &m).unwrap();
    (m, masked)
}

fn compose(bg: &RasterImage, b: &PlacementBox, reference: &RasterImage, seed: u64) -> insertkit::backends::Stage1Output {
    let (m, masked) = stage1_inputs(bg, b);
    MockCompositor
        .compose(&ComposeRequest {
            masked_background: &masked,
            box_mask: &m,
            placement: b,
            reference,
            seed,
        })
        .unwrap()
}

#[test]
fn mock_compose_red_square_replay() {
    let bg = RasterImage::filled(64, 64, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(22, 22, 20, 20).unwrap();
    let red = RasterImage::filled(10, 10, Channels::Rgba, &[255, 0, 0, 255]).unwrap();
    let out = compose(&bg, &b, &red, 1);

    // Scripted replay: the uniform border fills the box with gray; 90% of 20
    // is 18, centred at offset 1; blurring a uniform red patch keeps it red.
    let fp = PlacementBox::new(23, 23, 18, 18).unwrap();
    let sidecar = out.sidecar.expect("mock emits sidecar");
    assert_eq!(sidecar.popcount(), 324);
    for y in 0..64 {
        for x in 0..64 {
            assert_eq!(sidecar.get(x, y), fp.contains(x, y));
            let expected = if fp.contains(x, y) { [255, 0, 0] } else { GRAY };
            assert_eq!(out.image.rgb(x, y), expected, "({x},{y})");
        }
    }
    assert!(sidecar.count_within(&b) == sidecar.popcount());

    let again = compose(&bg, &b, &red, 1);
    assert_eq!(again.image, out.image);
}

#[test]
fn mock_compose_rejects_blank_reference() {
    let bg = RasterImage::filled(16, 16, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(4, 4, 8, 8).unwrap();
    let (m, masked) = stage1_inputs(&bg, &b);
    let white = RasterImage::filled(5, 5, Channels::Rgb, &[255, 255, 255]).unwrap();
    let err = MockCompositor
        .compose(&ComposeRequest {
            masked_background: &masked,
            box_mask: &m,
            placement: &b,
            reference: &white,
            seed: 0,
        })
        .unwrap_err();
    assert!(matches!(err, Error::EmptyReference));
}

#[test]
fn oracle_returns_sidecar_or_fails() {
    let bg = RasterImage::filled(32, 32, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(8, 8, 12, 12).unwrap();
    let reference = RasterImage::filled(4, 6, Channels::Rgb, &[10, 200, 10]).unwrap();
    let out = compose(&bg, &b, &reference, 0);
    let req = SegmentRequest {
        image: &out.image,
        placement: &b,
        sidecar: out.sidecar.as_ref(),
        seed: 0,
    };
    assert_eq!(OracleSegmenter.segment(&req).unwrap(), out.sidecar.clone().unwrap());
    let bare = SegmentRequest { sidecar: None, ..req };
    assert!(matches!(OracleSegmenter.segment(&bare), Err(Error::MissingOracle)));
}

#[test]
fn heuristic_recovers_red_block() {
    let b = PlacementBox::new(10, 10, 12, 12).unwrap();
    let block = PlacementBox::new(13, 13, 6, 6).unwrap();
    let img = RasterImage::from_fn(32, 32, Channels::Rgb, |x, y| {
        if block.contains(x, y) {
            [220, 20, 20, 0]
        } else {
            [128, 128, 128, 0]
        }
    })
    .unwrap();
    let seg = HeuristicSegmenter { threshold: 30.0 };
    let raw = seg
        .segment(&SegmentRequest {
            image: &img,
            placement: &b,
            sidecar: None,
            seed: 0,
        })
        .unwrap();
    // per-pixel distance oracle against the single band colour
    let expected = BinaryMask::from_fn(32, 32, |x, y| {
        let p = img.rgb(x, y);
        let d2: i32 = (0..3).map(|i| (p[i] as i32 - 128).pow(2)).sum();
        b.contains(x, y) && d2 > 900
    })
    .unwrap();
    assert_eq!(raw, expected);
    assert_eq!(raw.popcount(), 36);

    let flat = RasterImage::filled(32, 32, Channels::Rgb, &GRAY).unwrap();
    let empty = seg
        .segment(&SegmentRequest {
            image: &flat,
            placement: &b,
            sidecar: None,
            seed: 0,
        })
        .unwrap();
    assert!(empty.is_empty());
}

fn refine(masked: &RasterImage, mask: &BinaryMask, reference: &RasterImage) -> insertkit::Result<RasterImage> {
    MockRefiner.refine(&RefineRequest {
        masked_background: masked,
        foreground_mask: mask,
        placement: &PlacementBox::full(masked.width(), masked.height()).unwrap(),
        reference,
        seed: 0,
    })
}

#[test]
fn refiner_paints_checker_over_square() {
    let a = [200u8, 30, 30];
    let z = [30u8, 30, 200];
    let checker = RasterImage::from_fn(3, 3, Channels::Rgb, |x, y| {
        let c = if (x + y) % 2 == 0 { a } else { z };
        [c[0], c[1], c[2], 0]
    })
    .unwrap();
    let masked = RasterImage::from_fn(16, 16, Channels::Rgb, |x, y| [x as u8, y as u8, 1, 0]).unwrap();
    let sq = PlacementBox::new(5, 4, 6, 6).unwrap();
    let mask = rasterize_box(&sq, 16, 16).unwrap();
    let out = refine(&masked, &mask, &checker).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            if sq.contains(x, y) {
                // nearest 3 -> 6 doubles every source pixel
                let (sx, sy) = ((x - sq.x) / 2, (y - sq.y) / 2);
                assert_eq!(out.rgb(x, y), checker.rgb(sx, sy), "({x},{y})");
            } else {
                assert_eq!(out.pixel(x, y), masked.pixel(x, y));
            }
        }
    }
    assert_eq!(refine(&masked, &mask, &checker).unwrap(), out);
    assert!(matches!(
        refine(&masked, &BinaryMask::zeros(16, 16).unwrap(), &checker),
        Err(Error::InvalidArgument(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn refiner_leaves_zero_set_untouched(
        bits in prop::collection::vec(prop::bool::weighted(0.3), 32 * 32),
        px in prop::collection::vec(any::<u8>(), 32 * 32 * 3),
        color in any::<[u8; 3]>(),
        rw in 1u32..8,
        rh in 1u32..8,
    ) {
        prop_assume!(bits.iter().any(|&b| b));
        prop_assume!(color.iter().any(|&c| c < 250));
        let mask = BinaryMask::new(32, 32, bits.into_iter().map(u8::from).collect()).unwrap();
        let masked = RasterImage::new(32, 32, Channels::Rgb, px).unwrap();
        let reference = RasterImage::filled(rw, rh, Channels::Rgb, &color).unwrap();
        let out = refine(&masked, &mask, &reference).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                if mask.get(x, y) {
                    prop_assert_eq!(out.rgb(x, y), color);
                } else {
                    prop_assert_eq!(out.pixel(x, y), masked.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn mock_sidecar_and_heuristic_stay_in_box(
        bx in 0u32..20, by in 0u32..20, bw in 4u32..20, bh in 4u32..20,
        rw in 1u32..30, rh in 1u32..30,
        fg in any::<[u8; 3]>(), bgc in any::<[u8; 3]>(),
    ) {
        prop_assume!(fg.iter().any(|&c| c < 250));
        let b = PlacementBox::new(bx, by, bw, bh).unwrap();
        let bg = RasterImage::filled(40, 40, Channels::Rgb, &bgc).unwrap();
        let reference = RasterImage::filled(rw, rh, Channels::Rgb, &fg).unwrap();
        let out = compose(&bg, &b, &reference, 3);
        let sidecar = out.sidecar.unwrap();
        prop_assert!(!sidecar.is_empty());
        prop_assert_eq!(sidecar.count_within(&b), sidecar.popcount());
        let raw = HeuristicSegmenter::default().segment(&SegmentRequest {
            image: &out.image, placement: &b, sidecar: None, seed: 3,
        }).unwrap();
        prop_assert_eq!(raw.count_within(&b), raw.popcount());
    }
}

// ---- wire protocol against an in-process stub ----

type Parts = Vec<(String, Vec<u8>)>;

#[derive(Clone, Default)]
struct StubState {
    hits: Arc<AtomicUsize>,
    fail_first: Arc<AtomicUsize>,
    parts: Arc<Mutex<Parts>>,
    reply: Arc<Vec<u8>>,
}

async fn stub_handler(State(s): State<StubState>, mut mp: Multipart) -> (StatusCode, Vec<u8>) {
    s.hits.fetch_add(1, Ordering::SeqCst);
    let mut parts = Vec::new();
    while let Some(field) = mp.next_field().await.unwrap() {
        let name = field.name().unwrap_or_default().to_string();
        parts.push((name, field.bytes().await.unwrap().to_vec()));
    }
    *s.parts.lock().unwrap() = parts;
    if s.fail_first.load(Ordering::SeqCst) > 0 {
        s.fail_first.fetch_sub(1, Ordering::SeqCst);
        return (StatusCode::SERVICE_UNAVAILABLE, Vec::new());
    }
    (StatusCode::OK, s.reply.as_ref().clone())
}

fn spawn_stub(state: StubState) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/v1/compose", post(stub_handler))
                .route("/v1/segment", post(stub_handler))
                .route("/v1/refine", post(stub_handler))
                .with_state(state);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn client(addr: SocketAddr, stage: &'static str, max_side: u32) -> WireClient {
    WireClient::new(&format!("http://{addr}"), stage, Duration::from_secs(10), max_side)
        .unwrap()
        .with_backoff(Duration::from_millis(10))
}

#[test]
fn wire_compose_passes_png_through() {
    let fixed = RasterImage::from_fn(20, 16, Channels::Rgb, |x, y| [x as u8 * 10, y as u8 * 10, 77, 0]).unwrap();
    let state = StubState {
        reply: Arc::new(fixed.encode_png().unwrap()),
        ..Default::default()
    };
    let addr = spawn_stub(state.clone());
    let bg = RasterImage::filled(20, 16, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(2, 3, 5, 6).unwrap();
    let (m, masked) = stage1_inputs(&bg, &b);
    let reference = RasterImage::filled(4, 4, Channels::Rgb, &[1, 2, 3]).unwrap();
    let out = client(addr, "compose", 1024)
        .compose(&ComposeRequest {
            masked_background: &masked,
            box_mask: &m,
            placement: &b,
            reference: &reference,
            seed: 42,
        })
        .unwrap();
    assert_eq!(out.image, fixed);
    assert!(out.sidecar.is_none());

    let parts = state.parts.lock().unwrap().clone();
    let names: Vec<&str> = parts.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["masked_background", "box_mask", "reference", "metadata"]);
    let meta: WireMetadata = serde_json::from_slice(&parts[3].1).unwrap();
    assert_eq!(meta, WireMetadata { placement: b, seed: 42 });
    assert_eq!(RasterImage::decode_png(&parts[0].1).unwrap(), masked);
    assert_eq!(BinaryMask::decode_png(&parts[1].1).unwrap(), m);
}

#[test]
fn wire_retries_once_then_reports_unavailable() {
    let mask = BinaryMask::from_fn(10, 10, |x, y| x > 3 && y > 3).unwrap();
    let state = StubState {
        reply: Arc::new(mask.encode_png().unwrap()),
        fail_first: Arc::new(AtomicUsize::new(1)),
        ..Default::default()
    };
    let addr = spawn_stub(state.clone());
    let img = RasterImage::filled(10, 10, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(2, 2, 6, 6).unwrap();
    let seg = client(addr, "segment", 1024);
    let req = SegmentRequest {
        image: &img,
        placement: &b,
        sidecar: None,
        seed: 0,
    };
    assert_eq!(seg.segment(&req).unwrap(), mask);
    assert_eq!(state.hits.load(Ordering::SeqCst), 2);

    state.fail_first.store(5, Ordering::SeqCst);
    state.hits.store(0, Ordering::SeqCst);
    let err = seg.segment(&req).unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { stage: "segment", .. }), "{err}");
    assert_eq!(state.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn wire_downscales_and_restores_frame() {
    // the stub answers with a 64x32 image regardless of input
    let reply = RasterImage::filled(64, 32, Channels::Rgb, &[9, 99, 199]).unwrap();
    let state = StubState {
        reply: Arc::new(reply.encode_png().unwrap()),
        ..Default::default()
    };
    let addr = spawn_stub(state.clone());
    let masked = RasterImage::filled(128, 64, Channels::Rgb, &GRAY).unwrap();
    let fg = BinaryMask::from_fn(128, 64, |x, y| (40..80).contains(&x) && (20..40).contains(&y)).unwrap();
    let reference = RasterImage::filled(8, 8, Channels::Rgb, &[5, 5, 5]).unwrap();
    let b = PlacementBox::new(40, 20, 40, 20).unwrap();
    let out = client(addr, "refine", 64)
        .refine(&RefineRequest {
            masked_background: &masked,
            foreground_mask: &fg,
            placement: &b,
            reference: &reference,
            seed: 1,
        })
        .unwrap();
    assert_eq!(out.dimensions(), (128, 64));
    assert!(out.as_bytes().chunks(3).all(|p| p == [9, 99, 199]));

    let parts = state.parts.lock().unwrap().clone();
    let sent = RasterImage::decode_png(&parts[0].1).unwrap();
    assert_eq!(sent.dimensions(), (64, 32));
    let meta: WireMetadata = serde_json::from_slice(&parts[3].1).unwrap();
    assert_eq!(meta.placement, PlacementBox::new(20, 10, 20, 10).unwrap());
    // input untouched
    assert_eq!(masked, RasterImage::filled(128, 64, Channels::Rgb, &GRAY).unwrap());
}

#[test]
fn wire_unreachable_endpoint_is_unavailable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let c = client(addr, "compose", 1024);
    let bg = RasterImage::filled(8, 8, Channels::Rgb, &GRAY).unwrap();
    let b = PlacementBox::new(1, 1, 3, 3).unwrap();
    let (m, masked) = stage1_inputs(&bg, &b);
    let err = c
        .compose(&ComposeRequest {
            masked_background: &masked,
            box_mask: &m,
            placement: &b,
            reference: &bg,
            seed: 0,
        })
        .unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { stage: "compose", .. }));
}
