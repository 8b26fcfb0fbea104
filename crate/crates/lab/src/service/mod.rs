//! Campaign service: session allocation, answer and telemetry ingestion,
//! completion codes, persistence and export. [`http::router`] exposes it
//! over HTTP.

pub mod http;
mod provider;
mod store;
mod verifier;

pub use provider::{base32_code, is_valid_code, CompletionNotice, CrowdProvider, GenericProvider, CODE_LEN};
pub use store::{CampaignData, CampaignStore, LogEvent, OpenedSession, Session, SessionState, StoreError};
pub use verifier::Verifier;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use qoe_core::analysis::ReportOptions;
use qoe_core::experiments::{make_control_timeline, Campaign, ExperimentError, UnitKind, UnitMedia};
use qoe_core::metrics::{PixelDiff, DEFAULT_REWIND_THRESHOLD};
use qoe_core::responses::{
    AbChoice, AbResponse, ResolvedChoice, Response, TelemetryEvent, TimelineResponse,
};
use qoe_core::PltMetrics;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{self, ArchiveInput, ArchivedSession};
use crate::filmstrip_io::{read_filmstrip, MANIFEST_FILE};
use crate::har_io::parse_har;
use crate::participant::{ClientInfo, Demographics};

pub const DEFAULT_ABANDON_AFTER_MS: u64 = 24 * 60 * 60 * 1000;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        chrono::Utc::now().timestamp_millis().max(0) as u64
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ms: u64) -> Self {
        Self(AtomicU64::new(ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub abandon_after_ms: u64,
    pub snapshot_every: u64,
    /// Fixed RNG seed; `None` seeds from the OS.
    pub seed: Option<u64>,
    pub report: ReportOptions,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            abandon_after_ms: DEFAULT_ABANDON_AFTER_MS,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            seed: None,
            report: ReportOptions::default(),
        }
    }

    pub fn media_dir(&self) -> PathBuf {
        self.data_dir.join("media")
    }

    fn campaigns_dir(&self) -> PathBuf {
        self.data_dir.join("campaigns")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid campaign: {0}")]
    InvalidCampaign(String),
    #[error("missing media {0}")]
    MissingMedia(String),
    #[error("campaign {0} already exists")]
    CampaignExists(String),
    #[error("unknown campaign {0}")]
    UnknownCampaign(String),
    #[error("unknown session")]
    UnknownSession,
    #[error("unknown unit {0}")]
    UnknownUnit(String),
    #[error("humanness verification failed")]
    VerificationFailed,
    #[error("verifier unavailable: {0}")]
    VerifierUnavailable(String),
    #[error("campaign {0} has no capacity left")]
    Exhausted(String),
    #[error("session is {0:?}")]
    WrongState(SessionState),
    #[error("expected a response for {expected}, got {got}")]
    OutOfOrder { expected: String, got: String },
    #[error("unit {0} already answered")]
    Duplicate(String),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("events must belong to the session in the path")]
    ForeignEvents,
    #[error("campaign {0} has no completed sessions")]
    NothingToExport(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

/// Body of `POST /campaigns/{id}/sessions`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    #[serde(default)]
    pub verifier_proof: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    #[serde(default)]
    pub user_agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_height: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOpened {
    pub session_id: String,
    pub campaign_id: String,
    pub units: usize,
    pub state: SessionState,
}

/// Per-frame helper data for a timeline unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameHint {
    pub timestamp_ms: u64,
    /// What the rewind dialog suggests when this frame is chosen.
    pub helper_ms: u64,
    /// Set on control units: show a uniform frame of this color instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blank_rgb: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextUnit {
    Unit {
        index: usize,
        total: usize,
        unit_id: String,
        kind: UnitKind,
        /// Filmstrip directory under the media root.
        media: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        frames: Vec<FrameHint>,
    },
    Done {
        completion_code: String,
    },
}

/// Body of `POST /sessions/{id}/responses`. The service resolves A/B choices
/// itself; the client never learns which side is which condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Submission {
    Timeline(TimelineResponse),
    Ab {
        unit_id: String,
        choice: AbChoice,
        #[serde(default)]
        page_loaded_at: u64,
        #[serde(default)]
        submitted_at: u64,
    },
}

impl Submission {
    pub fn unit_id(&self) -> &str {
        match self {
            Submission::Timeline(t) => &t.unit_id,
            Submission::Ab { unit_id, .. } => unit_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub remaining: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryAck {
    pub accepted: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRequest {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagOutcome {
    pub unit_id: String,
    pub flags: usize,
    pub banned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignView {
    pub campaign: Campaign,
    pub served: BTreeMap<String, u64>,
    pub sessions: BTreeMap<String, usize>,
}

type Shared = Arc<Mutex<CampaignStore>>;

pub struct Service {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    provider: Arc<dyn CrowdProvider>,
    campaigns: RwLock<BTreeMap<String, Shared>>,
    /// Session id to campaign id.
    sessions: RwLock<HashMap<String, String>>,
    rng: Mutex<ChaCha20Rng>,
    hints: Mutex<HashMap<(String, bool), Arc<Vec<FrameHint>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Media paths are relative, `/`-separated and never leave the media root.
fn media_path(root: &Path, rel: &str) -> Option<PathBuf> {
    if rel.is_empty() || rel.starts_with('/') || rel.contains('\\') {
        return None;
    }
    let mut out = root.to_path_buf();
    for part in rel.split('/') {
        if part.is_empty() || part == "." || part == ".." {
            return None;
        }
        out.push(part);
    }
    Some(out)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Service {
    /// Opens the service, replaying every campaign found under the data directory.
    pub fn open(
        config: ServiceConfig,
        clock: Arc<dyn Clock>,
        provider: Arc<dyn CrowdProvider>,
    ) -> Result<Self, ServiceError> {
        let dir = config.campaigns_dir();
        std::fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        let mut campaigns = BTreeMap::new();
        let mut sessions = HashMap::new();
        let mut entries: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|source| StoreError::Io { path: dir.clone(), source })?
            .filter_map(Result::ok)
            .filter(|e| e.path().join(store::LOG_FILE).exists())
            .collect();
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let store = CampaignStore::open(&entry.path(), config.snapshot_every)?;
            let id = store.data().campaign().id.clone();
            for sid in store.data().sessions.keys() {
                sessions.insert(sid.clone(), id.clone());
            }
            campaigns.insert(id, Arc::new(Mutex::new(store)));
        }
        let rng = match config.seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        Ok(Self {
            config,
            clock,
            provider,
            campaigns: RwLock::new(campaigns),
            sessions: RwLock::new(sessions),
            rng: Mutex::new(rng),
            hints: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn provider(&self) -> &dyn CrowdProvider {
        self.provider.as_ref()
    }

    fn campaign(&self, id: &str) -> Result<Shared, ServiceError> {
        self.campaigns
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownCampaign(id.into()))
    }

    fn campaign_of_session(&self, session_id: &str) -> Result<Shared, ServiceError> {
        let cid = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .ok_or(ServiceError::UnknownSession)?;
        self.campaign(&cid)
    }

    fn check_media(&self, campaign: &mut Campaign) -> Result<(), ServiceError> {
        let root = self.config.media_dir();
        for unit in &mut campaign.test_units {
            for rel in unit.media.paths() {
                let dir = media_path(&root, rel).ok_or_else(|| ServiceError::MissingMedia(rel.into()))?;
                if !dir.join(MANIFEST_FILE).is_file() {
                    return Err(ServiceError::MissingMedia(rel.into()));
                }
            }
            // timeline media captured with a HAR yields its own metrics
            if let (true, UnitMedia::Filmstrip { path }) = (unit.metrics.is_empty(), &unit.media) {
                let dir = media_path(&root, path).expect("checked above");
                if let Ok(bytes) = std::fs::read(dir.join("har.json")) {
                    let har = parse_har(&bytes).map_err(|e| ServiceError::InvalidCampaign(format!("{path}: {e}")))?;
                    let strip = read_filmstrip(&dir).map_err(|e| ServiceError::InvalidCampaign(e.to_string()))?;
                    unit.metrics = vec![PltMetrics::compute(&strip, &har)];
                }
            }
        }
        Ok(())
    }

    pub fn create_campaign(&self, mut campaign: Campaign) -> Result<String, ServiceError> {
        if !valid_id(&campaign.id) {
            return Err(ServiceError::InvalidCampaign(
                "id must be 1-64 characters of [A-Za-z0-9_-]".into(),
            ));
        }
        campaign.validate().map_err(|e| match e {
            ExperimentError::DuplicateUnit(id) => ServiceError::InvalidCampaign(format!("duplicate unit id {id}")),
            other => ServiceError::InvalidCampaign(other.to_string()),
        })?;
        if campaign.test_units.iter().any(|u| u.banned || !u.flags.is_empty()) {
            return Err(ServiceError::InvalidCampaign("new campaigns start without flags".into()));
        }
        self.check_media(&mut campaign)?;
        let mut campaigns = self.campaigns.write().unwrap_or_else(|e| e.into_inner());
        if campaigns.contains_key(&campaign.id) {
            return Err(ServiceError::CampaignExists(campaign.id));
        }
        let id = campaign.id.clone();
        let dir = self.config.campaigns_dir().join(&id);
        if dir.join(store::LOG_FILE).exists() {
            return Err(ServiceError::CampaignExists(id));
        }
        let store = CampaignStore::create(&dir, campaign, self.clock.now_ms(), self.config.snapshot_every)?;
        campaigns.insert(id.clone(), Arc::new(Mutex::new(store)));
        Ok(id)
    }

    pub fn get_campaign(&self, id: &str) -> Result<CampaignView, ServiceError> {
        let shared = self.campaign(id)?;
        let mut store = lock(&shared);
        self.sweep(&mut store)?;
        let data = store.data();
        let mut sessions = BTreeMap::new();
        for s in data.sessions.values() {
            let key = serde_json::to_value(s.state).expect("state serializes");
            *sessions.entry(key.as_str().unwrap_or_default().to_string()).or_insert(0) += 1;
        }
        Ok(CampaignView {
            campaign: data.campaign().clone(),
            served: data.state.served.clone(),
            sessions,
        })
    }

    /// Marks sessions idle for longer than the timeout as abandoned.
    fn sweep(&self, store: &mut CampaignStore) -> Result<(), ServiceError> {
        let now = self.clock.now_ms();
        let stale: Vec<String> = store
            .data()
            .sessions
            .values()
            .filter(|s| {
                s.state == SessionState::InProgress
                    && now.saturating_sub(s.last_activity_ms) >= self.config.abandon_after_ms
            })
            .map(|s| s.id.clone())
            .collect();
        for session_id in stale {
            store.commit(LogEvent::SessionAbandoned { at_ms: now, session_id })?;
        }
        Ok(())
    }

    /// Creates a session for a participant whose humanness proof was already
    /// accepted.
    pub fn open_session(&self, campaign_id: &str, req: &OpenSessionRequest) -> Result<SessionOpened, ServiceError> {
        if let Some(d) = &req.demographics {
            d.validate().map_err(ServiceError::Malformed)?;
        }
        let shared = self.campaign(campaign_id)?;
        let mut store = lock(&shared);
        self.sweep(&mut store)?;
        let data = store.data();
        let active = data
            .sessions
            .values()
            .filter(|s| s.state != SessionState::Abandoned)
            .count();
        if active >= data.campaign().target_participants as usize {
            return Err(ServiceError::Exhausted(campaign_id.into()));
        }
        let (assigned, id) = {
            let mut rng = lock(&self.rng);
            let mut state = data.state.clone();
            let assigned = state.assign(&mut *rng).map_err(|e| match e {
                ExperimentError::Exhausted => ServiceError::Exhausted(campaign_id.into()),
                other => ServiceError::Internal(other.to_string()),
            })?;
            let mut token = [0u8; 16];
            rng.fill_bytes(&mut token);
            (assigned, hex::encode(token))
        };
        let units = assigned.len();
        store.commit(LogEvent::SessionOpened {
            at_ms: self.clock.now_ms(),
            session: OpenedSession {
                id: id.clone(),
                assigned,
                demographics: req.demographics.clone(),
                client: ClientInfo::from_user_agent(&req.user_agent, req.video_width, req.video_height),
            },
        })?;
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), campaign_id.into());
        Ok(SessionOpened {
            session_id: id,
            campaign_id: campaign_id.into(),
            units,
            state: SessionState::InProgress,
        })
    }

    fn frame_hints(&self, path: &str, control: bool) -> Result<Arc<Vec<FrameHint>>, ServiceError> {
        let key = (path.to_string(), control);
        if let Some(h) = lock(&self.hints).get(&key) {
            return Ok(h.clone());
        }
        let dir = media_path(&self.config.media_dir(), path).ok_or_else(|| ServiceError::MissingMedia(path.into()))?;
        let strip = read_filmstrip(&dir).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let hints: Vec<FrameHint> = if control {
            let t0 = strip.first_timestamp_ms();
            strip
                .frames()
                .iter()
                .map(|f| FrameHint {
                    timestamp_ms: f.timestamp_ms(),
                    helper_ms: t0,
                    blank_rgb: Some(make_control_timeline(f).rgb_at(0, 0)),
                })
                .collect()
        } else {
            PixelDiff::EXACT
                .rewind_table(&strip, DEFAULT_REWIND_THRESHOLD)
                .into_iter()
                .map(|(timestamp_ms, helper_ms)| FrameHint { timestamp_ms, helper_ms, blank_rgb: None })
                .collect()
        };
        let hints = Arc::new(hints);
        lock(&self.hints).insert(key, hints.clone());
        Ok(hints)
    }

    fn helper_for(hints: &[FrameHint], slider_ms: u64) -> Option<u64> {
        let i = hints.partition_point(|h| h.timestamp_ms <= slider_ms);
        i.checked_sub(1).map(|i| hints[i].helper_ms)
    }

    fn live_session<'a>(&self, store: &'a mut CampaignStore, session_id: &str) -> Result<&'a Session, ServiceError> {
        self.sweep(store)?;
        store.data().sessions.get(session_id).ok_or(ServiceError::UnknownSession)
    }

    pub fn next_unit(&self, session_id: &str) -> Result<NextUnit, ServiceError> {
        let shared = self.campaign_of_session(session_id)?;
        let mut store = lock(&shared);
        let session = self.live_session(&mut store, session_id)?.clone();
        match session.state {
            SessionState::Completed => {
                return Ok(NextUnit::Done {
                    completion_code: session.completion_code.clone().unwrap_or_default(),
                })
            }
            SessionState::InProgress => {}
            other => return Err(ServiceError::WrongState(other)),
        }
        let a = session.next_unit().expect("in-progress sessions have a next unit");
        let unit = store
            .data()
            .campaign()
            .unit(&a.unit_id)
            .ok_or_else(|| ServiceError::UnknownUnit(a.unit_id.clone()))?
            .clone();
        drop(store);
        let (media, frames) = match (&unit.media, a.label_map) {
            (UnitMedia::Filmstrip { path }, _) => {
                let control = unit.kind == UnitKind::ControlTimeline;
                (path.clone(), self.frame_hints(path, control)?.to_vec())
            }
            (UnitMedia::Composite { a_left, b_left }, Some(labels)) => {
                let path = match labels.a_side {
                    qoe_core::experiments::Side::Left => a_left,
                    qoe_core::experiments::Side::Right => b_left,
                };
                (path.clone(), Vec::new())
            }
            (UnitMedia::ControlComposite { path, .. }, _) => (path.clone(), Vec::new()),
            (UnitMedia::Composite { .. }, None) => {
                return Err(ServiceError::Internal(format!("A/B unit {} assigned without labels", unit.id)))
            }
        };
        Ok(NextUnit::Unit {
            index: session.responses.len(),
            total: session.assigned.len(),
            unit_id: unit.id,
            kind: unit.kind,
            media,
            frames,
        })
    }

    pub fn submit_response(&self, session_id: &str, sub: Submission) -> Result<SubmitOutcome, ServiceError> {
        let shared = self.campaign_of_session(session_id)?;
        let mut store = lock(&shared);
        let session = self.live_session(&mut store, session_id)?;
        let unit_id = sub.unit_id().to_string();
        if session.responses.iter().any(|r| r.unit_id() == unit_id) {
            return Err(ServiceError::Duplicate(unit_id));
        }
        if session.state != SessionState::InProgress {
            return Err(ServiceError::WrongState(session.state));
        }
        let assignment = session.next_unit().expect("in progress").clone();
        if assignment.unit_id != unit_id {
            return Err(ServiceError::OutOfOrder { expected: assignment.unit_id, got: unit_id });
        }
        let unit = store
            .data()
            .campaign()
            .unit(&unit_id)
            .ok_or_else(|| ServiceError::UnknownUnit(unit_id.clone()))?
            .clone();
        let response = match (sub, unit.kind.is_timeline()) {
            (Submission::Timeline(t), true) => {
                t.validate().map_err(|e| ServiceError::Malformed(e.to_string()))?;
                let UnitMedia::Filmstrip { path } = &unit.media else {
                    return Err(ServiceError::Internal("timeline unit without filmstrip".into()));
                };
                let hints = self.frame_hints(path, unit.kind == UnitKind::ControlTimeline)?;
                let first = hints.first().map_or(0, |h| h.timestamp_ms);
                let last = hints.last().map_or(0, |h| h.timestamp_ms);
                if t.slider_ms < first || t.slider_ms > last {
                    return Err(ServiceError::Malformed(format!(
                        "slider_ms {} outside the video ({first}..={last})",
                        t.slider_ms
                    )));
                }
                if Self::helper_for(&hints, t.slider_ms) != Some(t.helper_ms) {
                    return Err(ServiceError::Malformed("helper_ms is not the suggestion offered for slider_ms".into()));
                }
                Response::Timeline(t)
            }
            (Submission::Ab { unit_id, choice, page_loaded_at, submitted_at }, false) => {
                let labels = assignment
                    .label_map
                    .ok_or_else(|| ServiceError::Internal("A/B assignment without labels".into()))?;
                let r = AbResponse {
                    unit_id,
                    choice,
                    resolved_choice: ResolvedChoice::resolve(choice, labels),
                    page_loaded_at,
                    submitted_at,
                };
                r.validate(labels).map_err(|e| ServiceError::Malformed(e.to_string()))?;
                Response::Ab(r)
            }
            _ => return Err(ServiceError::Malformed(format!("response type does not fit a {:?} unit", unit.kind))),
        };
        let now = self.clock.now_ms();
        store.commit(LogEvent::ResponseStored { at_ms: now, session_id: session_id.into(), response })?;
        let session = &store.data().sessions[session_id];
        let remaining = session.assigned.len() - session.responses.len();
        if remaining > 0 {
            return Ok(SubmitOutcome { remaining, completion_code: None });
        }
        let code = {
            let mut rng = lock(&self.rng);
            loop {
                let c = self.provider.issue_code(&mut *rng);
                if !store.data().codes.contains(&c) {
                    break c;
                }
            }
        };
        store.commit(LogEvent::SessionCompleted { at_ms: now, session_id: session_id.into(), code: code.clone() })?;
        Ok(SubmitOutcome { remaining: 0, completion_code: Some(code) })
    }

    /// Ingests a JSON-lines batch. Events already stored under the same
    /// sequence number are skipped.
    pub fn ingest_telemetry(&self, session_id: &str, body: &str) -> Result<TelemetryAck, ServiceError> {
        let mut batch = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ev: TelemetryEvent = serde_json::from_str(line)
                .map_err(|e| ServiceError::Malformed(format!("line {}: {e}", i + 1)))?;
            batch.push(ev);
        }
        let shared = self.campaign_of_session(session_id)?;
        if batch.iter().any(|e| e.session_id != session_id) {
            return Err(ServiceError::ForeignEvents);
        }
        let mut store = lock(&shared);
        let session = self.live_session(&mut store, session_id)?;
        if session.state == SessionState::Abandoned {
            return Err(ServiceError::WrongState(session.state));
        }
        let mut seen = session.seen_seq.clone();
        let total = batch.len();
        let fresh: Vec<TelemetryEvent> = batch.into_iter().filter(|e| seen.insert(e.seq)).collect();
        let accepted = fresh.len();
        if accepted > 0 {
            store.commit(LogEvent::TelemetryStored {
                at_ms: self.clock.now_ms(),
                session_id: session_id.into(),
                events: fresh,
            })?;
        }
        Ok(TelemetryAck { accepted, duplicates: total - accepted })
    }

    /// Records a broken-video report from a participant the unit was served to.
    pub fn flag_unit(&self, unit_id: &str, req: &FlagRequest) -> Result<FlagOutcome, ServiceError> {
        let shared = self.campaign_of_session(&req.session_id)?;
        let mut store = lock(&shared);
        let session = self.live_session(&mut store, &req.session_id)?;
        if !session.assigned.iter().any(|a| a.unit_id == unit_id) {
            return Err(ServiceError::UnknownUnit(unit_id.into()));
        }
        let unit = store
            .data()
            .campaign()
            .unit(unit_id)
            .ok_or_else(|| ServiceError::UnknownUnit(unit_id.into()))?;
        if !unit.flags.contains(&req.session_id) {
            store.commit(LogEvent::UnitFlagged {
                at_ms: self.clock.now_ms(),
                unit_id: unit_id.into(),
                session_id: req.session_id.clone(),
            })?;
        }
        let unit = store.data().campaign().unit(unit_id).expect("exists");
        Ok(FlagOutcome { unit_id: unit_id.into(), flags: unit.flags.len(), banned: unit.banned })
    }

    /// Completed sessions under ordinal pseudonyms, in opening order.
    pub fn archive_input(&self, campaign_id: &str) -> Result<ArchiveInput, ServiceError> {
        let shared = self.campaign(campaign_id)?;
        let store = lock(&shared);
        let data = store.data();
        let completed: Vec<&Session> = data
            .order
            .iter()
            .map(|id| &data.sessions[id])
            .filter(|s| s.state == SessionState::Completed)
            .collect();
        if completed.is_empty() {
            return Err(ServiceError::NothingToExport(campaign_id.into()));
        }
        let mut campaign = data.campaign().clone();
        let mut sessions = Vec::with_capacity(completed.len());
        let mut records = Vec::with_capacity(completed.len());
        // ordinals follow opening order over all sessions, so flags raised
        // by sessions left out of the export still count once each
        let pseudonyms: HashMap<&str, String> = data
            .order
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), format!("p{:04}", i + 1)))
            .collect();
        for unit in &mut campaign.test_units {
            unit.flags = unit.flags.iter().map(|sid| pseudonyms[sid.as_str()].clone()).collect();
        }
        for s in completed {
            let alias = pseudonyms[s.id.as_str()].clone();
            let mut record = s.record();
            record.session_id = alias.clone();
            for e in &mut record.events {
                e.session_id = alias.clone();
            }
            records.push(record);
            sessions.push(ArchivedSession {
                session_id: alias,
                assigned: s.assigned.clone(),
                demographics: s.demographics.clone(),
                client: s.client.clone(),
            });
        }
        Ok(ArchiveInput { campaign, sessions, records })
    }

    pub fn export(&self, campaign_id: &str) -> Result<Vec<(&'static str, Vec<u8>)>, ServiceError> {
        let input = self.archive_input(campaign_id)?;
        archive::render(&input, &self.config.report).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Writes snapshots for every campaign.
    pub fn snapshot_all(&self) -> Result<(), ServiceError> {
        for shared in self.campaigns.read().unwrap_or_else(|e| e.into_inner()).values() {
            lock(shared).snapshot()?;
        }
        Ok(())
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ServiceError> {
        let shared = self.campaign_of_session(session_id)?;
        let store = lock(&shared);
        store.data().sessions.get(session_id).cloned().ok_or(ServiceError::UnknownSession)
    }
}
