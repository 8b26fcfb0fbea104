//! Deterministic stand-in for a real browser.
//!
//! A [`LoadScript`] describes a page load as a list of rectangles painted at
//! given times plus the HAR the load should report. Rendering samples the
//! painted canvas on a fixed grid of `frame_interval_ms`, so the output is a
//! pure function of the script.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{
    BrowserDriver, Capabilities, CaptureConfig, DriverError, LoadPurpose, LoadRequest,
    PageLoadRecording, ProtocolMode, RawLoad,
};
use crate::frame::{Channels, Filmstrip, Frame, Viewport};
use crate::har::{HarEntry, HarLog};

/// Paint a solid rectangle at `at_ms`; clipped to the viewport.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawOp {
    pub at_ms: u64,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScript {
    pub url: String,
    pub viewport: Viewport,
    pub frame_interval_ms: u64,
    pub post_onload_ms: u64,
    #[serde(default = "white")]
    pub background: [u8; 3],
    #[serde(default)]
    pub ops: Vec<DrawOp>,
    pub onload_ms: f64,
    #[serde(default)]
    pub entries: Vec<HarEntry>,
    #[serde(default)]
    pub navigation_start: i64,
}

fn white() -> [u8; 3] {
    [255, 255, 255]
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptError {
    NonIncreasingOps { index: usize },
    ZeroInterval,
    EmptyViewport,
    Har(crate::har::HarError),
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptError::NonIncreasingOps { index } => {
                write!(f, "draw op {index} is not strictly after its predecessor")
            }
            ScriptError::ZeroInterval => write!(f, "frame interval must be positive"),
            ScriptError::EmptyViewport => write!(f, "viewport must be non-empty"),
            ScriptError::Har(e) => write!(f, "scripted HAR is invalid: {e}"),
        }
    }
}

impl core::error::Error for ScriptError {}

impl LoadScript {
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.frame_interval_ms == 0 {
            return Err(ScriptError::ZeroInterval);
        }
        if self.viewport.width == 0 || self.viewport.height == 0 {
            return Err(ScriptError::EmptyViewport);
        }
        for (i, w) in self.ops.windows(2).enumerate() {
            if w[1].at_ms <= w[0].at_ms {
                return Err(ScriptError::NonIncreasingOps { index: i + 1 });
            }
        }
        self.har().validate().map_err(ScriptError::Har)
    }

    pub fn har(&self) -> HarLog {
        HarLog {
            page_url: self.url.clone(),
            onload_ms: self.onload_ms,
            entries: self.entries.clone(),
        }
    }

    /// Timestamp of the final frame: the first grid point covering onload plus
    /// the post-onload tail and every scripted paint.
    pub fn end_ms(&self) -> u64 {
        let onload_end = libm::ceil(self.onload_ms) as u64 + self.post_onload_ms;
        let last_op = self.ops.last().map_or(0, |op| op.at_ms);
        let end = onload_end.max(last_op);
        end.div_ceil(self.frame_interval_ms) * self.frame_interval_ms
    }

    pub fn render(&self) -> Result<Filmstrip, ScriptError> {
        self.validate()?;
        let Viewport { width, height } = self.viewport;
        let mut canvas = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            canvas.extend_from_slice(&self.background);
        }
        let mut pending = self.ops.iter().peekable();
        let mut frames = Vec::new();
        let mut t = 0;
        let end = self.end_ms();
        while t <= end {
            while let Some(op) = pending.next_if(|op| op.at_ms <= t) {
                paint(&mut canvas, self.viewport, op);
            }
            frames.push(
                Frame::new(t, width, height, Channels::Rgb, canvas.clone())
                    .expect("canvas matches viewport"),
            );
            t += self.frame_interval_ms;
        }
        Ok(Filmstrip::new(frames, self.navigation_start).expect("grid timestamps increase"))
    }

    /// A plausible deterministic load for `url`, derived from a hash of the URL.
    pub fn generated(url: &str, config: &CaptureConfig) -> Self {
        let mut h = fnv1a(url.as_bytes());
        let mut next = move |bound: u64| {
            h ^= h << 13;
            h ^= h >> 7;
            h ^= h << 17;
            h % bound
        };
        let Viewport { width, height } = config.viewport;
        let period = config.frame_period_ms();
        let mut ops = Vec::new();
        let mut at = period * (2 + next(5));
        let bands = 3 + next(4) as u32;
        let band_h = (height / bands).max(1);
        for b in 0..bands {
            let shade = 40 + (next(160) as u8);
            ops.push(DrawOp {
                at_ms: at,
                x: 0,
                y: b * band_h,
                width,
                height: band_h,
                color: [shade, shade / 2, 255 - shade],
            });
            at += period * (1 + next(8));
        }
        let onload_ms = (at + period * next(6)) as f64;
        Self {
            url: url.to_string(),
            viewport: config.viewport,
            frame_interval_ms: period,
            post_onload_ms: libm::round(config.post_onload_record_s * 1000.0) as u64,
            background: white(),
            ops,
            onload_ms,
            entries: alloc::vec![HarEntry {
                url: url.to_string(),
                start_ms: 0.0,
                end_ms: onload_ms / 2.0,
                protocol: match config.protocol_mode {
                    ProtocolMode::H1Only => "http/1.1".to_string(),
                    ProtocolMode::H2Allowed => "h2".to_string(),
                },
                status: 200,
            }],
            navigation_start: 0,
        }
    }
}

fn paint(canvas: &mut [u8], viewport: Viewport, op: &DrawOp) {
    let x_end = op.x.saturating_add(op.width).min(viewport.width);
    let y_end = op.y.saturating_add(op.height).min(viewport.height);
    for y in op.y.min(y_end)..y_end {
        for x in op.x.min(x_end)..x_end {
            let i = (y as usize * viewport.width as usize + x as usize) * 3;
            canvas[i..i + 3].copy_from_slice(&op.color);
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h | 1
}

/// Renders a script into a recording (run 1).
pub fn synthetic_load(script: &LoadScript) -> Result<PageLoadRecording, ScriptError> {
    let filmstrip = script.render()?;
    Ok(PageLoadRecording {
        url: script.url.clone(),
        run_index: 1,
        filmstrip,
        har: script.har(),
        browser_state_id: format!("synthetic-{:016x}", fnv1a(script.url.as_bytes())),
        capture_config: CaptureConfig {
            post_onload_record_s: script.post_onload_ms as f64 / 1000.0,
            protocol_mode: ProtocolMode::default(),
            extensions: Vec::new(),
            emulation: None,
            viewport: script.viewport,
            frame_rate: 1000.0 / script.frame_interval_ms as f64,
        },
    })
}

/// Log line for one driver invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub url: String,
    pub purpose: LoadPurpose,
    pub headers: Vec<(String, String)>,
    pub fresh_state: bool,
    pub disable_local_caches: bool,
}

/// Per-URL scripting for [`SyntheticDriver`].
#[derive(Debug, Clone, PartialEq)]
pub struct SiteScript {
    pub script: LoadScript,
    /// Onload per recorded run (cycled); empty keeps the script's onload.
    pub onloads: Vec<f64>,
}

/// Scripted driver. Every capability is available; loads never touch a network.
#[derive(Debug, Clone, Default)]
pub struct SyntheticDriver {
    sites: BTreeMap<String, SiteScript>,
    failing: BTreeSet<usize>,
    invocations: Vec<Invocation>,
}

impl SyntheticDriver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_site(mut self, script: LoadScript, onloads: Vec<f64>) -> Self {
        self.sites
            .insert(script.url.clone(), SiteScript { script, onloads });
        self
    }

    /// Make the n-th invocation (0-based, primers included) time out.
    pub fn fail_invocation(mut self, n: usize) -> Self {
        self.failing.insert(n);
        self
    }

    pub fn invocations(&self) -> &[Invocation] {
        &self.invocations
    }

    fn script_for(&self, request: &LoadRequest<'_>) -> LoadScript {
        let config = request.config;
        let (mut script, onloads) = match self.sites.get(request.url) {
            Some(site) => (site.script.clone(), site.onloads.as_slice()),
            None => (LoadScript::generated(request.url, config), &[][..]),
        };
        script.viewport = config.viewport;
        script.frame_interval_ms = config.frame_period_ms();
        script.post_onload_ms = libm::round(config.post_onload_record_s * 1000.0) as u64;
        if let (LoadPurpose::Recorded { run_index }, false) = (request.purpose, onloads.is_empty()) {
            script.onload_ms = onloads[(run_index as usize - 1) % onloads.len()];
        }
        script
    }
}

impl BrowserDriver for SyntheticDriver {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            protocol_pinning: true,
            extensions: None,
            device_emulation: true,
            network_emulation: true,
            event_stream: true,
        }
    }

    fn load(&mut self, request: &LoadRequest<'_>) -> Result<RawLoad, DriverError> {
        let n = self.invocations.len();
        self.invocations.push(Invocation {
            url: request.url.to_string(),
            purpose: request.purpose,
            headers: request
                .extra_headers
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            fresh_state: request.fresh_state,
            disable_local_caches: request.disable_local_caches,
        });
        if self.failing.contains(&n) {
            return Err(DriverError::Timeout);
        }
        let script = self.script_for(request);
        let filmstrip = script
            .render()
            .map_err(|e| DriverError::Failed(format!("{e}")))?;
        Ok(RawLoad {
            filmstrip,
            har: script.har(),
            browser_state_id: format!("synthetic-state-{n}"),
        })
    }
}
