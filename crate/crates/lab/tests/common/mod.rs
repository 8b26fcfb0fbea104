//! Fixtures, oracles and a participant simulator shared by the integration
//! tests. Each test target uses a different subset.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use qoe_core::capture::{synthetic_load, DrawOp, LoadScript};
use qoe_core::experiments::{Campaign, CampaignKind, GroundTruth, TestUnit, UnitKind, UnitMedia};
use qoe_core::responses::{EventKind, EventPayload, TelemetryEvent};
use qoe_core::{Channels, Filmstrip, Frame, PltMetrics, Viewport};
use qoe_lab::capture_out::write_recording;
use qoe_lab::service::http::{router, AppState};
use qoe_lab::service::{GenericProvider, ManualClock, Service, ServiceConfig, Verifier};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

pub const PALETTE: [[u8; 3]; 4] = [[255, 255, 255], [0, 0, 0], [200, 30, 30], [30, 30, 200]];

/// Random filmstrip that evolves by repainting a few pixels per frame and
/// often repeats a frame unchanged.
pub fn random_strip(rng: &mut ChaCha8Rng, max_frames: usize, w: (u32, u32), h: (u32, u32)) -> Filmstrip {
    let (w, h) = (rng.gen_range(w.0..=w.1), rng.gen_range(h.0..=h.1));
    let n = rng.gen_range(1..=max_frames);
    let mut t = rng.gen_range(0..300u64);
    let mut px: Vec<u8> = (0..w * h).flat_map(|_| PALETTE[0]).collect();
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen_bool(0.6) {
            let burst = if rng.gen_bool(0.2) { (w * h) as usize / 3 } else { 4 };
            for _ in 0..rng.gen_range(1..=burst.max(1)) {
                let i = rng.gen_range(0..(w * h) as usize) * 3;
                px[i..i + 3].copy_from_slice(&PALETTE[rng.gen_range(0..PALETTE.len())]);
            }
        }
        frames.push(Frame::new(t, w, h, Channels::Rgb, px.clone()).unwrap());
        t += rng.gen_range(1..400u64);
    }
    Filmstrip::new(frames, 0).unwrap()
}

pub fn matching_pixels(a: &Frame, b: &Frame) -> u64 {
    let mut n = 0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if a.rgb_at(x, y) == b.rgb_at(x, y) {
                n += 1;
            }
        }
    }
    n
}

/// Area above the completeness curve as an exact integer step sum.
pub fn speed_index_oracle(strip: &Filmstrip) -> f64 {
    let frames = strip.frames();
    let last = strip.last();
    let total = (last.width() * last.height()) as u128;
    let mut area = frames[0].timestamp_ms() as u128 * total;
    for pair in frames.windows(2) {
        let dt = (pair[1].timestamp_ms() - pair[0].timestamp_ms()) as u128;
        area += dt * (total - matching_pixels(&pair[0], last) as u128);
    }
    area as f64 / total as f64
}

/// Earliest frame e such that every frame e..=chosen is within threshold of the chosen one.
pub fn rewind_oracle(strip: &Filmstrip, chosen: usize, threshold: f64) -> u64 {
    let frames = strip.frames();
    let total = (frames[0].width() * frames[0].height()) as f64;
    let within = |k: usize| (total - matching_pixels(&frames[k], &frames[chosen]) as f64) / total <= threshold;
    (0..=chosen)
        .find(|&e| (e..=chosen).all(within))
        .map(|e| frames[e].timestamp_ms())
        .unwrap()
}

/// A page that paints three bands, the last one at `ready_ms`.
pub fn scripted_page(url: &str, ready_ms: u64, onload_ms: f64) -> LoadScript {
    let ready = ready_ms / 100 * 100;
    let band = |at_ms: u64, y: u32, color: [u8; 3]| DrawOp { at_ms, x: 0, y, width: 16, height: 4, color };
    LoadScript {
        url: url.into(),
        viewport: Viewport::new(16, 12),
        frame_interval_ms: 100,
        post_onload_ms: 1000,
        background: [255, 255, 255],
        ops: vec![
            band(ready / 4, 0, [20, 20, 20]),
            band(ready / 2, 4, [200, 40, 40]),
            band(ready, 8, [40, 40, 200]),
        ],
        onload_ms,
        entries: vec![],
        navigation_start: 0,
    }
}

/// Writes a capture-style media directory (filmstrip plus HAR) and returns
/// its metrics.
pub fn write_media(media_root: &Path, rel: &str, script: &LoadScript) -> (Filmstrip, PltMetrics) {
    let rec = synthetic_load(script).unwrap();
    write_recording(&media_root.join(rel), &rec).unwrap();
    let m = PltMetrics::compute(&rec.filmstrip, &rec.har);
    (rec.filmstrip, m)
}

pub fn timeline_unit(id: &str, kind: UnitKind, metrics: Vec<PltMetrics>) -> TestUnit {
    TestUnit {
        id: id.into(),
        kind,
        media: UnitMedia::Filmstrip { path: id.into() },
        ground_truth: (kind == UnitKind::ControlTimeline).then_some(GroundTruth::KeepOriginal),
        metrics,
        banned: false,
        flags: Default::default(),
    }
}

pub fn timeline_campaign(id: &str, units: Vec<TestUnit>, target: u32) -> Campaign {
    Campaign {
        id: id.into(),
        kind: CampaignKind::Timeline,
        test_units: units,
        target_participants: target,
        videos_per_participant: 6,
        controls_per_participant: 1,
        flag_ban_threshold: 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Good,
    /// Far too many play/pause/seek actions.
    Actions,
    /// Away from the tab for 12.5 s although the video loaded quickly.
    Focus,
    /// Never plays or scrubs one video.
    Skip,
    /// Accepts the blank suggestion on the control video.
    ControlFail,
}

pub const UNIT_GAP_MS: u64 = 1_000;
pub const UNIT_SPAN_MS: u64 = 20_000;

/// Session-clock start of the i-th unit.
pub fn unit_start(i: usize) -> u64 {
    i as u64 * (UNIT_SPAN_MS + UNIT_GAP_MS)
}

/// Telemetry for one unit. `misbehave` marks the unit carrying the
/// violation of `behavior`.
pub fn unit_events(session_id: &str, unit_id: &str, start: u64, behavior: Behavior, misbehave: bool, seq: &mut u64) -> Vec<TelemetryEvent> {
    let mut out = Vec::new();
    let mut push = |kind: EventKind, at: u64, payload: EventPayload| {
        out.push(TelemetryEvent {
            session_id: session_id.into(),
            seq: *seq,
            unit_id: Some(unit_id.into()),
            kind,
            at_ms: start + at,
            payload,
        });
        *seq += 1;
    };
    push(EventKind::VideoLoaded, 400, EventPayload { load_ms: Some(400), ..Default::default() });
    let skip = misbehave && behavior == Behavior::Skip;
    if !skip {
        push(EventKind::Play, 1_000, EventPayload::default());
        push(EventKind::Pause, 6_000, EventPayload::default());
        push(EventKind::Seek, 8_000, EventPayload { seek_to_ms: Some(2_000), ..Default::default() });
    }
    if misbehave && behavior == Behavior::Actions {
        for k in 0..600 {
            push(EventKind::Seek, 9_000 + k * 10, EventPayload { seek_to_ms: Some(k * 10), ..Default::default() });
        }
    }
    if misbehave && behavior == Behavior::Focus {
        push(EventKind::Blur, 2_000, EventPayload::default());
        push(EventKind::Focus, 14_500, EventPayload::default());
    }
    out
}

// ---- HTTP harness -------------------------------------------------------

pub struct Harness {
    pub app: Router,
    pub service: Arc<Service>,
    pub clock: Arc<ManualClock>,
}

pub fn harness(data: &Path, seed: u64, clock: Arc<ManualClock>) -> Harness {
    harness_with(data, seed, clock, Verifier::Stub, GenericProvider::default())
}

pub fn harness_with(data: &Path, seed: u64, clock: Arc<ManualClock>, verifier: Verifier, provider: GenericProvider) -> Harness {
    let mut config = ServiceConfig::new(data);
    config.seed = Some(seed);
    let service = Arc::new(Service::open(config, clock.clone(), Arc::new(provider)).unwrap());
    let app = router(AppState {
        service: service.clone(),
        verifier,
        http: reqwest::Client::new(),
    });
    Harness { app, service, clock }
}

impl Harness {
    pub async fn call(&self, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call(method, uri, body.map(|b| b.to_string())).await;
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, v)
    }
}

pub fn jsonl(events: &[TelemetryEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
}
