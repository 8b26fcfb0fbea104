//! Per-campaign persistence: an append-only `events.jsonl` plus a
//! `snapshot.json` that records how many log lines it already covers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use qoe_core::experiments::{Assignment, Campaign, CampaignState, UnitKind};
use qoe_core::responses::{Response, SessionRecord, TelemetryEvent};
use serde::{Deserialize, Serialize};

use crate::json::{to_pretty_bytes, write_atomic};
use crate::participant::{ClientInfo, Demographics};

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    Verified,
    InProgress,
    Completed,
    Abandoned,
}

impl SessionState {
    pub fn can_become(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (Created, Verified) | (Verified, InProgress) | (InProgress, Completed)
        ) || (next == Abandoned && !matches!(self, Completed | Abandoned))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub opened_at_ms: u64,
    pub last_activity_ms: u64,
    pub state: SessionState,
    pub verifier_passed: bool,
    pub assigned: Vec<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    pub client: ClientInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_code: Option<String>,
    pub responses: Vec<Response>,
    pub events: Vec<TelemetryEvent>,
    pub seen_seq: BTreeSet<u64>,
}

impl Session {
    pub fn next_unit(&self) -> Option<&Assignment> {
        self.assigned.get(self.responses.len())
    }

    pub fn record(&self) -> SessionRecord {
        SessionRecord {
            session_id: self.id.clone(),
            assigned: self.assigned.clone(),
            events: self.events.clone(),
            responses: self.responses.clone(),
        }
    }
}

/// Fields of a freshly opened session, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenedSession {
    pub id: String,
    pub assigned: Vec<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    pub client: ClientInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    CampaignCreated { at_ms: u64, campaign: Campaign },
    SessionOpened { at_ms: u64, session: OpenedSession },
    ResponseStored { at_ms: u64, session_id: String, response: Response },
    TelemetryStored { at_ms: u64, session_id: String, events: Vec<TelemetryEvent> },
    SessionCompleted { at_ms: u64, session_id: String, code: String },
    SessionAbandoned { at_ms: u64, session_id: String },
    UnitFlagged { at_ms: u64, unit_id: String, session_id: String },
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("log is inconsistent: {0}")]
    Replay(String),
}

/// Everything known about one campaign; a pure fold over its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignData {
    pub created_at_ms: u64,
    pub state: CampaignState,
    pub sessions: BTreeMap<String, Session>,
    /// Session ids in the order they were opened.
    pub order: Vec<String>,
    pub codes: BTreeSet<String>,
}

impl CampaignData {
    fn session_mut(&mut self, id: &str) -> Result<&mut Session, StoreError> {
        self.sessions
            .get_mut(id)
            .ok_or_else(|| StoreError::Replay(format!("unknown session {id}")))
    }

    fn transition(session: &mut Session, next: SessionState) -> Result<(), StoreError> {
        if !session.state.can_become(next) {
            return Err(StoreError::Replay(format!(
                "session {} cannot go from {:?} to {:?}",
                session.id, session.state, next
            )));
        }
        session.state = next;
        Ok(())
    }

    /// Applies one event. Every check runs before any mutation, so a
    /// rejected event leaves the state untouched.
    pub fn apply(&mut self, event: &LogEvent) -> Result<(), StoreError> {
        match event {
            LogEvent::CampaignCreated { .. } => {
                return Err(StoreError::Replay("campaign created twice".into()));
            }
            LogEvent::SessionOpened { at_ms, session } => {
                if self.sessions.contains_key(&session.id) {
                    return Err(StoreError::Replay(format!("session {} opened twice", session.id)));
                }
                for a in &session.assigned {
                    *self.state.served.entry(a.unit_id.clone()).or_insert(0) += 1;
                }
                let mut s = Session {
                    id: session.id.clone(),
                    opened_at_ms: *at_ms,
                    last_activity_ms: *at_ms,
                    state: SessionState::Created,
                    verifier_passed: false,
                    assigned: session.assigned.clone(),
                    demographics: session.demographics.clone(),
                    client: session.client.clone(),
                    completion_code: None,
                    responses: Vec::new(),
                    events: Vec::new(),
                    seen_seq: BTreeSet::new(),
                };
                // only verified sessions are ever logged
                Self::transition(&mut s, SessionState::Verified)?;
                s.verifier_passed = true;
                Self::transition(&mut s, SessionState::InProgress)?;
                self.order.push(s.id.clone());
                self.sessions.insert(s.id.clone(), s);
            }
            LogEvent::ResponseStored { at_ms, session_id, response } => {
                let s = self.session_mut(session_id)?;
                if s.next_unit().map(|a| a.unit_id.as_str()) != Some(response.unit_id()) {
                    return Err(StoreError::Replay(format!("out-of-order response in {session_id}")));
                }
                s.responses.push(response.clone());
                s.last_activity_ms = *at_ms;
            }
            LogEvent::TelemetryStored { at_ms, session_id, events } => {
                let s = self.session_mut(session_id)?;
                for e in events {
                    if s.seen_seq.insert(e.seq) {
                        s.events.push(e.clone());
                    }
                }
                s.last_activity_ms = s.last_activity_ms.max(*at_ms);
            }
            LogEvent::SessionCompleted { session_id, code, .. } => {
                if self.codes.contains(code) {
                    return Err(StoreError::Replay(format!("completion code {code} reused")));
                }
                let s = self.session_mut(session_id)?;
                if s.responses.len() != s.assigned.len() {
                    return Err(StoreError::Replay(format!("{session_id} completed early")));
                }
                Self::transition(s, SessionState::Completed)?;
                s.completion_code = Some(code.clone());
                self.codes.insert(code.clone());
            }
            LogEvent::SessionAbandoned { session_id, .. } => {
                let s = self.session_mut(session_id)?;
                Self::transition(s, SessionState::Abandoned)?;
                let unanswered: Vec<String> = s.assigned[s.responses.len()..]
                    .iter()
                    .map(|a| a.unit_id.clone())
                    .collect();
                self.state.release(unanswered.iter().map(String::as_str));
            }
            LogEvent::UnitFlagged { unit_id, session_id, .. } => {
                if !self.sessions.contains_key(session_id) {
                    return Err(StoreError::Replay(format!("unknown session {session_id}")));
                }
                self.state
                    .flag(unit_id, session_id)
                    .map_err(|e| StoreError::Replay(e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn campaign(&self) -> &Campaign {
        &self.state.campaign
    }

    pub fn unit_kind(&self, unit_id: &str) -> Option<UnitKind> {
        self.campaign().unit(unit_id).map(|u| u.kind)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    events_applied: u64,
    data: CampaignData,
}

/// A campaign's state plus the files backing it.
pub struct CampaignStore {
    dir: PathBuf,
    log: File,
    data: CampaignData,
    events_applied: u64,
    snapshot_every: u64,
    poisoned: bool,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.into(), source }
}

impl CampaignStore {
    pub fn create(dir: &Path, campaign: Campaign, at_ms: u64, snapshot_every: u64) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(LOG_FILE);
        let log = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        let state = CampaignState::new(campaign.clone())
            .map_err(|e| StoreError::Replay(e.to_string()))?;
        let mut store = Self {
            dir: dir.into(),
            log,
            data: CampaignData {
                created_at_ms: at_ms,
                state,
                sessions: BTreeMap::new(),
                order: Vec::new(),
                codes: BTreeSet::new(),
            },
            events_applied: 0,
            snapshot_every,
            poisoned: false,
        };
        store.append(&LogEvent::CampaignCreated { at_ms, campaign })?;
        store.events_applied = 1;
        Ok(store)
    }

    /// Rebuilds state from the snapshot and the log lines after it. A torn
    /// final line (no trailing newline) is discarded.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<Self, StoreError> {
        let path = dir.join(LOG_FILE);
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        if complete.len() != text.len() {
            let f = OpenOptions::new().write(true).open(&path).map_err(io(&path))?;
            f.set_len(complete.len() as u64).map_err(io(&path))?;
        }
        let lines: Vec<&str> = complete.lines().collect();

        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot: Option<Snapshot> = match fs::read(&snap_path) {
            Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|source| StoreError::Json {
                path: snap_path.clone(),
                line: 1,
                source,
            })?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io(&snap_path)(e)),
        };
        let parse = |i: usize| -> Result<LogEvent, StoreError> {
            serde_json::from_str(lines[i]).map_err(|source| StoreError::Json {
                path: path.clone(),
                line: i + 1,
                source,
            })
        };

        let (mut data, start) = match snapshot {
            Some(s) if s.events_applied as usize <= lines.len() => (s.data, s.events_applied as usize),
            _ => {
                if lines.is_empty() {
                    return Err(StoreError::Replay("empty log".into()));
                }
                let LogEvent::CampaignCreated { at_ms, campaign } = parse(0)? else {
                    return Err(StoreError::Replay("log does not start with campaign_created".into()));
                };
                let state = CampaignState::new(campaign).map_err(|e| StoreError::Replay(e.to_string()))?;
                (
                    CampaignData {
                        created_at_ms: at_ms,
                        state,
                        sessions: BTreeMap::new(),
                        order: Vec::new(),
                        codes: BTreeSet::new(),
                    },
                    1,
                )
            }
        };
        for i in start..lines.len() {
            data.apply(&parse(i)?)?;
        }
        let log = OpenOptions::new().append(true).open(&path).map_err(io(&path))?;
        Ok(Self {
            dir: dir.into(),
            log,
            data,
            events_applied: lines.len() as u64,
            snapshot_every,
            poisoned: false,
        })
    }

    fn append(&mut self, event: &LogEvent) -> Result<(), StoreError> {
        let path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_vec(event).expect("serializable event");
        line.push(b'\n');
        self.log.write_all(&line).map_err(io(&path))?;
        self.log.sync_data().map_err(io(&path))
    }

    /// Applies `event` and appends it to the log. After a failed append the
    /// in-memory state is ahead of the disk, so the store refuses further writes.
    pub fn commit(&mut self, event: LogEvent) -> Result<(), StoreError> {
        if self.poisoned {
            return Err(StoreError::Replay("an earlier write failed; reopen the store".into()));
        }
        self.data.apply(&event)?;
        if let Err(e) = self.append(&event) {
            self.poisoned = true;
            return Err(e);
        }
        self.events_applied += 1;
        if self.snapshot_every > 0 && self.events_applied % self.snapshot_every == 0 {
            self.snapshot()?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<(), StoreError> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let bytes = to_pretty_bytes(&Snapshot {
            events_applied: self.events_applied,
            data: self.data.clone(),
        });
        write_atomic(&path, &bytes).map_err(io(&path))
    }

    pub fn data(&self) -> &CampaignData {
        &self.data
    }

    pub fn events_applied(&self) -> u64 {
        self.events_applied
    }
}
