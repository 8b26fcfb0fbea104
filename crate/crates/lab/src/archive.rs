//! Result archives: pseudonymized sessions, raw answers and telemetry, filter
//! verdicts and the analysis reports derived from them.
//!
//! | file | content |
//! |---|---|
//! | `campaign.json` | campaign definition with current bans |
//! | `sessions.jsonl` | one [`ArchivedSession`] per completed session |
//! | `responses.jsonl` | `{session_id, ...response}` per answer |
//! | `telemetry.jsonl` | telemetry events |
//! | `verdicts.csv` | `session_id,kept,reasons` |
//! | `report.json` | full analysis report |
//! | `report.csv` | per-video aggregates |
//! | `options.json` | analysis options the reports were built with |

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use qoe_core::analysis::{build_report, CampaignReport, ReportOptions};
use qoe_core::experiments::{Assignment, Campaign};
use qoe_core::responses::{apply_filters, FilterVerdict, Response, SessionRecord, TelemetryEvent};
use serde::{Deserialize, Serialize};

use crate::json::to_pretty_bytes;
use crate::participant::{ClientInfo, Demographics};

pub const FILES: [&str; 8] = [
    "campaign.json",
    "sessions.jsonl",
    "responses.jsonl",
    "telemetry.jsonl",
    "verdicts.csv",
    "report.json",
    "report.csv",
    "options.json",
];

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("response or telemetry for unknown session {0}")]
    UnknownSession(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedSession {
    pub session_id: String,
    pub assigned: Vec<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
    #[serde(default)]
    pub client: ClientInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArchivedResponse {
    session_id: String,
    #[serde(flatten)]
    response: Response,
}

/// In-memory archive contents before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveInput {
    pub campaign: Campaign,
    pub sessions: Vec<ArchivedSession>,
    pub records: Vec<SessionRecord>,
}

impl ArchiveInput {
    pub fn analyze(&self, options: &ReportOptions) -> (Vec<FilterVerdict>, CampaignReport) {
        let verdicts = apply_filters(&self.records, &self.campaign.test_units, &options.filter);
        let report = build_report(&self.campaign, &self.records, &verdicts, options);
        (verdicts, report)
    }
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable");
        out.push(b'\n');
    }
    out
}

pub fn verdicts_csv(verdicts: &[FilterVerdict]) -> Result<Vec<u8>, ArchiveError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["session_id", "kept", "reasons"])?;
    for v in verdicts {
        let reasons: Vec<&str> = v.reasons.iter().map(|r| r.as_str()).collect();
        w.write_record([v.session_id.as_str(), if v.kept { "true" } else { "false" }, &reasons.join(";")])?;
    }
    w.into_inner().map_err(|e| ArchiveError::Csv(e.into_error().into()))
}

pub fn report_csv(report: &CampaignReport) -> Result<Vec<u8>, ArchiveError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["unit_id", "uplt_ms", "onload_ms", "speed_index_ms", "fvc_ms", "lvc_ms", "n", "std"])?;
    for v in &report.videos {
        let m = &v.metrics;
        w.write_record([
            v.unit_id.clone(),
            v.user_perceived_plt_ms.to_string(),
            m.onload_ms.to_string(),
            m.speed_index_ms.to_string(),
            m.first_visual_change_ms.to_string(),
            m.last_visual_change_ms.to_string(),
            v.response_count.to_string(),
            v.response_std_ms.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| ArchiveError::Csv(e.into_error().into()))
}

pub fn report_json(report: &CampaignReport) -> Vec<u8> {
    to_pretty_bytes(report)
}

/// Renders every archive file, in [`FILES`] order.
pub fn render(input: &ArchiveInput, options: &ReportOptions) -> Result<Vec<(&'static str, Vec<u8>)>, ArchiveError> {
    let (verdicts, report) = input.analyze(options);
    let responses = input.records.iter().flat_map(|r| {
        r.responses.iter().map(|resp| ArchivedResponse {
            session_id: r.session_id.clone(),
            response: resp.clone(),
        })
    });
    let events = input.records.iter().flat_map(|r| r.events.iter());
    Ok(vec![
        (FILES[0], to_pretty_bytes(&input.campaign)),
        (FILES[1], jsonl(&input.sessions)),
        (FILES[2], jsonl(responses)),
        (FILES[3], jsonl(events)),
        (FILES[4], verdicts_csv(&verdicts)?),
        (FILES[5], report_json(&report)),
        (FILES[6], report_csv(&report)?),
        (FILES[7], to_pretty_bytes(options)),
    ])
}

/// A ustar stream with fixed metadata, so equal contents give equal bytes.
pub fn to_tar(files: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut builder = tar::Builder::new(Vec::new());
    for (name, bytes) in files {
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        builder
            .append_data(&mut header, name, bytes.as_slice())
            .expect("writing to memory");
    }
    builder.into_inner().expect("writing to memory")
}

pub fn unpack_tar(bytes: &[u8], dir: &Path) -> Result<(), ArchiveError> {
    let io = |source| ArchiveError::Io { path: dir.into(), source };
    fs::create_dir_all(dir).map_err(io)?;
    let mut archive = tar::Archive::new(bytes);
    for entry in archive.entries().map_err(io)? {
        let mut entry = entry.map_err(io)?;
        let name = entry.path().map_err(io)?.into_owned();
        if name.components().count() != 1 {
            continue;
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(io)?;
        let path = dir.join(&name);
        fs::write(&path, data).map_err(|source| ArchiveError::Io { path, source })?;
    }
    Ok(())
}

pub fn write_dir(files: &[(&str, Vec<u8>)], dir: &Path) -> Result<(), ArchiveError> {
    fs::create_dir_all(dir).map_err(|source| ArchiveError::Io { path: dir.into(), source })?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|source| ArchiveError::Io { path, source })?;
    }
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ArchiveError> {
    let file = fs::File::open(path).map_err(|source| ArchiveError::Io { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ArchiveError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ArchiveError::Json {
            path: path.into(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Options stored with an archive, if any.
pub fn read_options(dir: &Path) -> Result<Option<ReportOptions>, ArchiveError> {
    let path = dir.join("options.json");
    match fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|source| ArchiveError::Json { path, line: 1, source }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(ArchiveError::Io { path, source }),
    }
}

/// Loads the raw parts of an unpacked archive; derived files are ignored.
pub fn read_dir(dir: &Path) -> Result<ArchiveInput, ArchiveError> {
    let cpath = dir.join("campaign.json");
    let bytes = fs::read(&cpath).map_err(|source| ArchiveError::Io { path: cpath.clone(), source })?;
    let campaign: Campaign =
        serde_json::from_slice(&bytes).map_err(|source| ArchiveError::Json { path: cpath, line: 1, source })?;
    let sessions: Vec<ArchivedSession> = read_lines(&dir.join("sessions.jsonl"))?;
    let responses: Vec<ArchivedResponse> = read_lines(&dir.join("responses.jsonl"))?;
    let events: Vec<TelemetryEvent> = read_lines(&dir.join("telemetry.jsonl"))?;

    let mut index = BTreeMap::new();
    let mut records: Vec<SessionRecord> = sessions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            index.insert(s.session_id.clone(), i);
            SessionRecord {
                session_id: s.session_id.clone(),
                assigned: s.assigned.clone(),
                events: Vec::new(),
                responses: Vec::new(),
            }
        })
        .collect();
    for r in responses {
        let i = *index.get(&r.session_id).ok_or(ArchiveError::UnknownSession(r.session_id))?;
        records[i].responses.push(r.response);
    }
    for e in events {
        let i = *index
            .get(&e.session_id)
            .ok_or_else(|| ArchiveError::UnknownSession(e.session_id.clone()))?;
        records[i].events.push(e);
    }
    Ok(ArchiveInput { campaign, sessions, records })
}
