//! Instrumented page-load orchestration.
//!
//! [`run_capture`] drives any [`BrowserDriver`]: one discarded primer load per
//! URL, then `loads_per_site` recorded loads, each from fresh browser state
//! with caching disabled. Drivers that cannot honour a requested capability
//! reject the job before any load starts.

mod synthetic;

pub use synthetic::{
    synthetic_load, DrawOp, Invocation, LoadScript, ScriptError, SiteScript, SyntheticDriver,
};

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::frame::{Filmstrip, Viewport};
use crate::har::HarLog;

/// Header attached to every recorded request so intermediaries do not answer from cache.
pub const CACHE_CONTROL_HEADER: (&str, &str) = ("Cache-Control", "no-cache");

pub const DEFAULT_LOADS_PER_SITE: u32 = 5;
pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const DEFAULT_LOAD_TIMEOUT_S: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolMode {
    H1Only,
    #[default]
    H2Allowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default = "one")]
    pub device_scale_factor: f64,
    #[serde(default)]
    pub mobile: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub download_kbps: f64,
    pub upload_kbps: f64,
    pub latency_ms: f64,
    #[serde(default)]
    pub loss_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Emulation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkProfile>,
}

/// Conditions shared by every load of a job; snapshotted into each recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureConfig {
    pub post_onload_record_s: f64,
    pub protocol_mode: ProtocolMode,
    pub extensions: Vec<String>,
    pub emulation: Option<Emulation>,
    pub viewport: Viewport,
    pub frame_rate: f64,
}

impl CaptureConfig {
    /// Sampling period of the screenshot stream.
    pub fn frame_period_ms(&self) -> u64 {
        let p = libm::round(1000.0 / self.frame_rate);
        if p < 1.0 {
            1
        } else {
            p as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureJob {
    pub urls: Vec<String>,
    #[serde(default = "default_loads")]
    pub loads_per_site: u32,
    #[serde(default)]
    pub post_onload_record_s: f64,
    #[serde(default)]
    pub protocol_mode: ProtocolMode,
    #[serde(default)]
    pub extensions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulation: Option<Emulation>,
    pub viewport: Viewport,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_timeout")]
    pub load_timeout_s: f64,
}

fn default_loads() -> u32 {
    DEFAULT_LOADS_PER_SITE
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE
}

fn default_timeout() -> f64 {
    DEFAULT_LOAD_TIMEOUT_S
}

impl CaptureJob {
    pub fn new(urls: Vec<String>, viewport: Viewport) -> Self {
        Self {
            urls,
            loads_per_site: DEFAULT_LOADS_PER_SITE,
            post_onload_record_s: 0.0,
            protocol_mode: ProtocolMode::default(),
            extensions: Vec::new(),
            emulation: None,
            viewport,
            frame_rate: DEFAULT_FRAME_RATE,
            load_timeout_s: DEFAULT_LOAD_TIMEOUT_S,
        }
    }

    pub fn validate(&self) -> Result<(), CaptureError> {
        let bad = |what: &str| Err(CaptureError::InvalidJob(what.to_string()));
        if self.urls.is_empty() {
            return bad("urls must not be empty");
        }
        if self.loads_per_site < 1 {
            return bad("loads_per_site must be at least 1");
        }
        if !(self.post_onload_record_s >= 0.0) {
            return bad("post_onload_record_s must be non-negative");
        }
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be positive");
        }
        if !(self.load_timeout_s > 0.0) {
            return bad("load_timeout_s must be positive");
        }
        if self.viewport.width == 0 || self.viewport.height == 0 {
            return bad("viewport must be non-empty");
        }
        Ok(())
    }

    pub fn config(&self) -> CaptureConfig {
        CaptureConfig {
            post_onload_record_s: self.post_onload_record_s,
            protocol_mode: self.protocol_mode,
            extensions: self.extensions.clone(),
            emulation: self.emulation.clone(),
            viewport: self.viewport,
            frame_rate: self.frame_rate,
        }
    }
}

/// What a driver can do. A requested capability that is absent rejects the job.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub protocol_pinning: bool,
    /// Extensions the driver can enable; `None` means any.
    pub extensions: Option<BTreeSet<String>>,
    pub device_emulation: bool,
    pub network_emulation: bool,
    pub event_stream: bool,
}

impl Capabilities {
    pub fn check(&self, job: &CaptureJob) -> Result<(), CaptureError> {
        let reject = |what: String| Err(CaptureError::Unsupported(what));
        if job.protocol_mode == ProtocolMode::H1Only && !self.protocol_pinning {
            return reject("protocol pinning".into());
        }
        if let Some(available) = &self.extensions {
            if let Some(ext) = job.extensions.iter().find(|e| !available.contains(*e)) {
                return reject(alloc::format!("extension {ext}"));
            }
        }
        if let Some(emu) = &job.emulation {
            if emu.device.is_some() && !self.device_emulation {
                return reject("device emulation".into());
            }
            if emu.network.is_some() && !self.network_emulation {
                return reject("network emulation".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadPurpose {
    Primer,
    Recorded { run_index: u32 },
}

/// Everything a driver needs for one load.
#[derive(Debug, Clone)]
pub struct LoadRequest<'a> {
    pub url: &'a str,
    pub purpose: LoadPurpose,
    pub config: &'a CaptureConfig,
    pub extra_headers: &'a [(&'a str, &'a str)],
    /// Clear profile, cookies, storage and caches before loading.
    pub fresh_state: bool,
    /// Disable local HTTP and DNS caches where supported.
    pub disable_local_caches: bool,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawLoad {
    pub filmstrip: Filmstrip,
    pub har: HarLog,
    pub browser_state_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DriverError {
    Timeout,
    Failed(String),
}

impl fmt::Display for DriverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriverError::Timeout => write!(f, "load timed out"),
            DriverError::Failed(msg) => write!(f, "load failed: {msg}"),
        }
    }
}

impl core::error::Error for DriverError {}

/// A browser that can perform instrumented page loads, one at a time.
pub trait BrowserDriver {
    fn capabilities(&self) -> Capabilities;

    fn check_job(&self, job: &CaptureJob) -> Result<(), CaptureError> {
        self.capabilities().check(job)
    }

    fn load(&mut self, request: &LoadRequest<'_>) -> Result<RawLoad, DriverError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageLoadRecording {
    pub url: String,
    /// 1-based among recorded loads; the primer is not counted.
    pub run_index: u32,
    pub filmstrip: Filmstrip,
    pub har: HarLog,
    pub browser_state_id: String,
    pub capture_config: CaptureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UrlStatus {
    Complete,
    /// A recorded load failed twice; loads after it were not attempted.
    Incomplete { run_index: u32, reason: DriverError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrlCapture {
    pub url: String,
    pub recordings: Vec<PageLoadRecording>,
    pub status: UrlStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaptureError {
    InvalidJob(String),
    Unsupported(String),
    /// The driver returned a browser state id already used in this job.
    StaleBrowserState(String),
    EmptyRecordings,
    MixedUrls,
}

impl fmt::Display for CaptureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaptureError::InvalidJob(msg) => write!(f, "invalid capture job: {msg}"),
            CaptureError::Unsupported(what) => write!(f, "driver does not support {what}"),
            CaptureError::StaleBrowserState(id) => {
                write!(f, "browser state {id} was reused across loads")
            }
            CaptureError::EmptyRecordings => write!(f, "no recordings to select from"),
            CaptureError::MixedUrls => write!(f, "recordings belong to different URLs"),
        }
    }
}

impl core::error::Error for CaptureError {}

/// Runs a capture job: per URL one primer load (discarded), then
/// `loads_per_site` recorded loads with one retry each.
pub fn run_capture<D: BrowserDriver + ?Sized>(
    job: &CaptureJob,
    driver: &mut D,
) -> Result<Vec<UrlCapture>, CaptureError> {
    job.validate()?;
    driver.check_job(job)?;

    let config = job.config();
    let headers = [CACHE_CONTROL_HEADER];
    let timeout_ms = libm::ceil(job.load_timeout_s * 1000.0) as u64;
    let mut seen_states: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::with_capacity(job.urls.len());

    for url in &job.urls {
        let request = |purpose| LoadRequest {
            url,
            purpose,
            config: &config,
            extra_headers: &headers,
            fresh_state: true,
            disable_local_caches: true,
            timeout_ms,
        };

        // The primer only warms upstream resolvers; its outcome is irrelevant.
        let _ = driver.load(&request(LoadPurpose::Primer));

        let mut recordings = Vec::with_capacity(job.loads_per_site as usize);
        let mut status = UrlStatus::Complete;
        for run_index in 1..=job.loads_per_site {
            let req = request(LoadPurpose::Recorded { run_index });
            let raw = match driver.load(&req).or_else(|_| driver.load(&req)) {
                Ok(raw) => raw,
                Err(reason) => {
                    status = UrlStatus::Incomplete { run_index, reason };
                    break;
                }
            };
            if !seen_states.insert(raw.browser_state_id.clone()) {
                return Err(CaptureError::StaleBrowserState(raw.browser_state_id));
            }
            recordings.push(PageLoadRecording {
                url: url.clone(),
                run_index,
                filmstrip: raw.filmstrip,
                har: raw.har,
                browser_state_id: raw.browser_state_id,
                capture_config: config.clone(),
            });
        }
        out.push(UrlCapture {
            url: url.clone(),
            recordings,
            status,
        });
    }
    Ok(out)
}

/// The recording with the (lower) median onload time; ties go to the lowest run index.
pub fn select_median(recordings: &[PageLoadRecording]) -> Result<&PageLoadRecording, CaptureError> {
    let first = recordings.first().ok_or(CaptureError::EmptyRecordings)?;
    if recordings.iter().any(|r| r.url != first.url) {
        return Err(CaptureError::MixedUrls);
    }
    let mut onloads: Vec<f64> = recordings.iter().map(|r| r.har.onload_ms).collect();
    onloads.sort_by(f64::total_cmp);
    let median = onloads[(onloads.len() - 1) / 2];
    Ok(recordings
        .iter()
        .filter(|r| r.har.onload_ms.total_cmp(&median).is_eq())
        .min_by_key(|r| r.run_index)
        .expect("the median value belongs to some recording"))
}
