//! HTTP Archive 1.2 reading and writing.

use chrono::{DateTime, TimeZone, Utc};
use qoe_core::har::HarError;
use qoe_core::{HarEntry, HarLog};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum HarIoError {
    #[error("malformed HAR: {0}")]
    Json(#[from] serde_json::Error),
    #[error("HAR has no pages")]
    NoPages,
    #[error("bad startedDateTime {0:?}")]
    Date(String),
    #[error("{0}")]
    Invalid(HarError),
}

#[derive(Deserialize)]
struct Root {
    log: Log,
}

#[derive(Deserialize)]
struct Log {
    #[serde(default)]
    pages: Vec<Page>,
    #[serde(default)]
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Page {
    started_date_time: String,
    #[serde(default)]
    title: String,
    page_timings: PageTimings,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PageTimings {
    #[serde(default)]
    on_load: Option<f64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Entry {
    started_date_time: String,
    time: f64,
    request: Request,
    response: Response,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Request {
    url: String,
    #[serde(default)]
    http_version: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Response {
    status: i64,
    #[serde(default)]
    http_version: String,
}

fn parse_date(s: &str) -> Result<DateTime<Utc>, HarIoError> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .map_err(|_| HarIoError::Date(s.into()))
}

/// Reads a HAR document. Onload comes from `pages[0].pageTimings.onLoad`;
/// entry times are made relative to that page's start.
pub fn parse_har(bytes: &[u8]) -> Result<HarLog, HarIoError> {
    let root: Root = serde_json::from_slice(bytes)?;
    let page = root.log.pages.first().ok_or(HarIoError::NoPages)?;
    let base = parse_date(&page.started_date_time)?;
    let mut entries = Vec::with_capacity(root.log.entries.len());
    for e in &root.log.entries {
        let started = parse_date(&e.started_date_time)?;
        let start_ms = ((started - base).num_microseconds().unwrap_or(0) as f64 / 1000.0).max(0.0);
        let protocol = if e.response.http_version.is_empty() {
            &e.request.http_version
        } else {
            &e.response.http_version
        };
        entries.push(HarEntry {
            url: e.request.url.clone(),
            start_ms,
            end_ms: start_ms + e.time.max(0.0),
            protocol: protocol.to_ascii_lowercase(),
            status: u16::try_from(e.response.status).unwrap_or(0),
        });
    }
    let log = HarLog {
        page_url: page.title.clone(),
        onload_ms: page.page_timings.on_load.unwrap_or(-1.0),
        entries,
    };
    log.validate().map_err(HarIoError::Invalid)?;
    Ok(log)
}

fn timestamp(epoch_ms: f64) -> String {
    let micros = (epoch_ms * 1000.0).round() as i64;
    // milliseconds as usual, microseconds only when they carry information
    let fmt = if micros % 1000 == 0 { "%Y-%m-%dT%H:%M:%S%.3fZ" } else { "%Y-%m-%dT%H:%M:%S%.6fZ" };
    Utc.timestamp_micros(micros).single().unwrap_or_default().format(fmt).to_string()
}

/// Renders `log` as HAR 1.2 with the page starting at `navigation_start`
/// (epoch milliseconds).
pub fn har_to_json(log: &HarLog, navigation_start: i64) -> Value {
    let base = navigation_start as f64;
    let entries: Vec<Value> = log
        .entries
        .iter()
        .map(|e| {
            let time = e.end_ms - e.start_ms;
            let version = e.protocol.as_str();
            json!({
                "pageref": "page_1",
                "startedDateTime": timestamp(base + e.start_ms),
                "time": time,
                "request": {
                    "method": "GET",
                    "url": e.url,
                    "httpVersion": version,
                    "cookies": [],
                    "headers": [],
                    "queryString": [],
                    "headersSize": -1,
                    "bodySize": -1
                },
                "response": {
                    "status": e.status,
                    "statusText": "",
                    "httpVersion": version,
                    "cookies": [],
                    "headers": [],
                    "content": {"size": 0, "mimeType": ""},
                    "redirectURL": "",
                    "headersSize": -1,
                    "bodySize": -1
                },
                "cache": {},
                "timings": {"send": 0, "wait": time, "receive": 0}
            })
        })
        .collect();
    json!({
        "log": {
            "version": "1.2",
            "creator": {"name": "qoe-lab", "version": env!("CARGO_PKG_VERSION")},
            "pages": [{
                "startedDateTime": timestamp(base),
                "id": "page_1",
                "title": log.page_url,
                "pageTimings": {"onContentLoad": -1, "onLoad": log.onload_ms}
            }],
            "entries": entries
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> HarLog {
        HarLog {
            page_url: "https://example.test/".into(),
            onload_ms: 1234.5,
            entries: vec![
                HarEntry { url: "https://example.test/".into(), start_ms: 0.0, end_ms: 210.0, protocol: "h2".into(), status: 200 },
                HarEntry { url: "https://cdn.test/a.js".into(), start_ms: 250.25, end_ms: 900.0, protocol: "http/1.1".into(), status: 404 },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let v = har_to_json(&log(), 1_700_000_000_000);
        let back = parse_har(&serde_json::to_vec(&v).unwrap()).unwrap();
        assert_eq!(back, log());
    }

    #[test]
    fn onload_comes_from_first_page() {
        let doc = br#"{"log":{"version":"1.2","pages":[
            {"startedDateTime":"2016-05-01T10:00:00.000+02:00","title":"p","pageTimings":{"onLoad":812}},
            {"startedDateTime":"2016-05-01T10:00:05.000+02:00","title":"q","pageTimings":{"onLoad":99}}],
            "entries":[{"startedDateTime":"2016-05-01T08:00:00.100Z","time":50,
              "request":{"url":"u","httpVersion":"HTTP/2.0"},"response":{"status":200,"httpVersion":"HTTP/2.0"}}]}}"#;
        let h = parse_har(doc).unwrap();
        assert_eq!(h.onload_ms, 812.0);
        assert_eq!(h.entries[0].start_ms, 100.0);
        assert_eq!(h.entries[0].end_ms, 150.0);
        assert_eq!(h.entries[0].protocol, "http/2.0");
    }

    #[test]
    fn missing_onload_is_rejected() {
        let doc = br#"{"log":{"pages":[{"startedDateTime":"2016-05-01T10:00:00Z","pageTimings":{"onLoad":-1}}],"entries":[]}}"#;
        assert!(matches!(parse_har(doc), Err(HarIoError::Invalid(_))));
        assert!(matches!(parse_har(br#"{"log":{"pages":[]}}"#), Err(HarIoError::NoPages)));
    }
}
