//! Browser driver speaking the DevTools remote-debugging protocol over a
//! websocket. Each load runs in a fresh browser context whose id doubles as
//! the browser state id.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use base64::Engine;
use qoe_core::capture::{
    BrowserDriver, Capabilities, CaptureError, CaptureJob, DriverError, LoadRequest, ProtocolMode,
    RawLoad,
};
use qoe_core::{Filmstrip, HarEntry, HarLog};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::filmstrip_io::decode_png;

/// How the browser behind the endpoint was launched. Protocol pinning and
/// extensions are fixed at launch, so jobs must match them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LaunchOptions {
    /// Started with HTTP/2 disabled.
    pub http1_only: bool,
    pub extensions: BTreeSet<String>,
}

type Socket = WebSocket<MaybeTlsStream<TcpStream>>;

pub struct CdpDriver {
    socket: Socket,
    launch: LaunchOptions,
    next_id: u64,
    events: VecDeque<Value>,
}

fn failed(msg: impl std::fmt::Display) -> DriverError {
    DriverError::Failed(msg.to_string())
}

impl CdpDriver {
    pub fn connect(url: &str, launch: LaunchOptions) -> Result<Self, DriverError> {
        let (socket, _) = tungstenite::connect(url).map_err(failed)?;
        Ok(Self {
            socket,
            launch,
            next_id: 0,
            events: VecDeque::new(),
        })
    }

    fn set_read_timeout(&mut self, timeout: Option<Duration>) {
        if let MaybeTlsStream::Plain(s) = self.socket.get_mut() {
            let _ = s.set_read_timeout(timeout.map(|t| t.max(Duration::from_millis(1))));
        }
    }

    /// Reads one message before `deadline`; `None` on timeout.
    fn read(&mut self, deadline: Instant) -> Result<Option<Value>, DriverError> {
        loop {
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            self.set_read_timeout(Some(deadline - now));
            match self.socket.read() {
                Ok(Message::Text(t)) => return serde_json::from_str(&t).map(Some).map_err(failed),
                Ok(Message::Binary(b)) => return serde_json::from_slice(&b).map(Some).map_err(failed),
                Ok(Message::Close(_)) => return Err(failed("debugging socket closed")),
                Ok(_) => continue,
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    return Ok(None)
                }
                Err(e) => return Err(failed(e)),
            }
        }
    }

    fn call(
        &mut self,
        session: Option<&str>,
        method: &str,
        params: Value,
        deadline: Instant,
    ) -> Result<Value, DriverError> {
        self.next_id += 1;
        let id = self.next_id;
        let mut msg = json!({"id": id, "method": method, "params": params});
        if let Some(s) = session {
            msg["sessionId"] = json!(s);
        }
        self.socket
            .send(Message::text(msg.to_string()))
            .map_err(failed)?;
        loop {
            let Some(v) = self.read(deadline)? else {
                return Err(DriverError::Timeout);
            };
            if v.get("id").and_then(Value::as_u64) == Some(id) {
                if let Some(err) = v.get("error") {
                    return Err(failed(format!("{method}: {err}")));
                }
                return Ok(v.get("result").cloned().unwrap_or(Value::Null));
            }
            if v.get("method").is_some() {
                self.events.push_back(v);
            }
        }
    }

    /// Collects events until `until`.
    fn pump(&mut self, until: Instant) -> Result<(), DriverError> {
        while let Some(v) = self.read(until)? {
            if v.get("method").is_some() {
                self.events.push_back(v);
            }
        }
        Ok(())
    }

    fn run_load(
        &mut self,
        request: &LoadRequest<'_>,
        session: &str,
        deadline: Instant,
    ) -> Result<RawLoad, DriverError> {
        let config = request.config;
        let s = Some(session);
        self.call(s, "Page.enable", json!({}), deadline)?;
        self.call(s, "Network.enable", json!({}), deadline)?;
        if request.disable_local_caches {
            self.call(s, "Network.setCacheDisabled", json!({"cacheDisabled": true}), deadline)?;
        }
        if !request.extra_headers.is_empty() {
            let headers: serde_json::Map<String, Value> = request
                .extra_headers
                .iter()
                .map(|(k, v)| ((*k).to_string(), json!(v)))
                .collect();
            self.call(s, "Network.setExtraHTTPHeaders", json!({"headers": headers}), deadline)?;
        }
        let device = config.emulation.as_ref().and_then(|e| e.device.as_ref());
        let scale = device.map_or(1.0, |d| d.device_scale_factor);
        let mut metrics = json!({
            "width": config.viewport.width,
            "height": config.viewport.height,
            "deviceScaleFactor": scale,
            "mobile": false,
        });
        if let Some(d) = device {
            metrics["mobile"] = json!(d.mobile);
            metrics["screenWidth"] = json!(d.width);
            metrics["screenHeight"] = json!(d.height);
        }
        self.call(s, "Emulation.setDeviceMetricsOverride", metrics, deadline)?;
        if let Some(n) = config.emulation.as_ref().and_then(|e| e.network.as_ref()) {
            self.call(
                s,
                "Network.emulateNetworkConditions",
                json!({
                    "offline": false,
                    "latency": n.latency_ms,
                    "downloadThroughput": n.download_kbps * 1000.0 / 8.0,
                    "uploadThroughput": n.upload_kbps * 1000.0 / 8.0,
                    "packetLoss": n.loss_pct,
                }),
                deadline,
            )?;
        }

        // screenshots are taken at CSS-pixel resolution so every frame matches the viewport
        let shot_params = json!({
            "format": "png",
            "clip": {
                "x": 0, "y": 0,
                "width": config.viewport.width,
                "height": config.viewport.height,
                "scale": 1.0 / scale,
            },
        });
        self.events.clear();
        let started = Instant::now();
        let navigation_start = chrono::Utc::now().timestamp_millis();
        self.call(s, "Page.navigate", json!({"url": request.url}), deadline)?;

        let period = config.frame_period_ms();
        let post_ms = (config.post_onload_record_s * 1000.0).round() as u64;
        let mut timeline = EventLog::default();
        let mut frames = Vec::new();
        for k in 0u64.. {
            let due = started + Duration::from_millis(k * period);
            if due > deadline {
                return Err(DriverError::Timeout);
            }
            self.pump(due)?;
            while let Some(ev) = self.events.pop_front() {
                timeline.observe(&ev);
            }
            if let Some(onload) = timeline.onload_ms() {
                if k * period > onload.ceil() as u64 + post_ms && !frames.is_empty() {
                    break;
                }
            }
            let shot = self.call(s, "Page.captureScreenshot", shot_params.clone(), deadline)?;
            let data = shot
                .get("data")
                .and_then(Value::as_str)
                .ok_or_else(|| failed("screenshot without data"))?;
            let png = base64::engine::general_purpose::STANDARD
                .decode(data)
                .map_err(failed)?;
            let frame = decode_png(&png, k * period, std::path::Path::new("screenshot"))
                .map_err(failed)?;
            frames.push(frame);
        }
        while let Some(ev) = self.events.pop_front() {
            timeline.observe(&ev);
        }
        let har = timeline.into_har(request.url);
        har.validate().map_err(failed)?;
        let filmstrip = Filmstrip::new(frames, navigation_start).map_err(failed)?;
        Ok(RawLoad {
            filmstrip,
            har,
            browser_state_id: String::new(),
        })
    }
}

impl BrowserDriver for CdpDriver {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            protocol_pinning: self.launch.http1_only,
            extensions: Some(self.launch.extensions.clone()),
            device_emulation: true,
            network_emulation: true,
            event_stream: true,
        }
    }

    fn check_job(&self, job: &CaptureJob) -> Result<(), CaptureError> {
        self.capabilities().check(job)?;
        if job.protocol_mode == ProtocolMode::H2Allowed && self.launch.http1_only {
            return Err(CaptureError::Unsupported(
                "browser was launched with HTTP/2 disabled".into(),
            ));
        }
        let wanted: BTreeSet<&String> = job.extensions.iter().collect();
        if let Some(extra) = self.launch.extensions.iter().find(|e| !wanted.contains(e)) {
            return Err(CaptureError::Unsupported(format!(
                "browser has extension {extra} loaded that the job does not ask for"
            )));
        }
        Ok(())
    }

    fn load(&mut self, request: &LoadRequest<'_>) -> Result<RawLoad, DriverError> {
        let deadline = Instant::now() + Duration::from_millis(request.timeout_ms);
        let ctx = self.call(None, "Target.createBrowserContext", json!({"disposeOnDetach": true}), deadline)?;
        let context_id = ctx
            .get("browserContextId")
            .and_then(Value::as_str)
            .ok_or_else(|| failed("no browserContextId"))?
            .to_string();
        let result = (|| {
            let target = self.call(
                None,
                "Target.createTarget",
                json!({"url": "about:blank", "browserContextId": context_id}),
                deadline,
            )?;
            let target_id = target
                .get("targetId")
                .and_then(Value::as_str)
                .ok_or_else(|| failed("no targetId"))?
                .to_string();
            let attached = self.call(
                None,
                "Target.attachToTarget",
                json!({"targetId": target_id, "flatten": true}),
                deadline,
            )?;
            let session = attached
                .get("sessionId")
                .and_then(Value::as_str)
                .ok_or_else(|| failed("no sessionId"))?
                .to_string();
            let load = self.run_load(request, &session, deadline);
            let _ = self.call(None, "Target.closeTarget", json!({"targetId": target_id}), deadline);
            load
        })();
        let cleanup = Instant::now() + Duration::from_secs(5);
        let _ = self.call(
            None,
            "Target.disposeBrowserContext",
            json!({"browserContextId": context_id}),
            cleanup,
        );
        result.map(|raw| RawLoad {
            browser_state_id: context_id,
            ..raw
        })
    }
}

#[derive(Default)]
struct Pending {
    url: String,
    start: f64,
    end: Option<f64>,
    protocol: String,
    status: u16,
}

/// Network and page events of one load, in browser monotonic seconds.
#[derive(Default)]
struct EventLog {
    origin: Option<f64>,
    onload: Option<f64>,
    requests: BTreeMap<String, Pending>,
    order: Vec<String>,
}

impl EventLog {
    fn observe(&mut self, ev: &Value) {
        let params = &ev["params"];
        let ts = params["timestamp"].as_f64();
        let id = params["requestId"].as_str().map(str::to_string);
        match ev["method"].as_str().unwrap_or_default() {
            "Network.requestWillBeSent" => {
                let (Some(ts), Some(id)) = (ts, id) else { return };
                self.origin.get_or_insert(ts);
                if !self.requests.contains_key(&id) {
                    self.order.push(id.clone());
                }
                self.requests.insert(
                    id,
                    Pending {
                        url: params["request"]["url"].as_str().unwrap_or_default().into(),
                        start: ts,
                        ..Pending::default()
                    },
                );
            }
            "Network.responseReceived" => {
                if let Some(p) = id.and_then(|id| self.requests.get_mut(&id)) {
                    let r = &params["response"];
                    p.status = r["status"].as_u64().unwrap_or(0) as u16;
                    p.protocol = r["protocol"].as_str().unwrap_or_default().to_ascii_lowercase();
                }
            }
            "Network.loadingFinished" | "Network.loadingFailed" => {
                if let (Some(p), Some(ts)) = (id.and_then(|id| self.requests.get_mut(&id)), ts) {
                    p.end = Some(ts);
                }
            }
            "Page.loadEventFired" => {
                if let Some(ts) = ts {
                    self.onload.get_or_insert(ts);
                }
            }
            _ => {}
        }
    }

    fn onload_ms(&self) -> Option<f64> {
        let origin = self.origin?;
        self.onload.map(|t| ((t - origin) * 1000.0).max(0.0))
    }

    fn into_har(self, page_url: &str) -> HarLog {
        let origin = self.origin.unwrap_or(0.0);
        let onload_ms = self.onload_ms().unwrap_or(-1.0);
        let mut requests = self.requests;
        let entries = self
            .order
            .iter()
            .filter_map(|id| requests.remove(id))
            .map(|p| {
                let start_ms = ((p.start - origin) * 1000.0).max(0.0);
                let end_ms = p.end.map_or(start_ms, |e| ((e - origin) * 1000.0).max(start_ms));
                HarEntry {
                    url: p.url,
                    start_ms,
                    end_ms,
                    protocol: p.protocol,
                    status: p.status,
                }
            })
            .collect();
        HarLog {
            page_url: page_url.into(),
            onload_ms,
            entries,
        }
    }
}
