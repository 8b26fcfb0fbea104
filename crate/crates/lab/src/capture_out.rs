//! On-disk layout of capture results:
//! `DIR/<url-hash>/run-<k>/{manifest.json, frame-*.png, har.json, config.json}`
//! plus `DIR/<url-hash>/summary.json` and `DIR/index.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qoe_core::capture::{select_median, CaptureConfig, PageLoadRecording, UrlCapture, UrlStatus};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::filmstrip_io::{read_filmstrip, write_filmstrip, FilmstripIoError};
use crate::har_io::{har_to_json, parse_har, HarIoError};
use crate::json::to_pretty_bytes;

#[derive(Debug, thiserror::Error)]
pub enum CaptureOutError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Filmstrip(#[from] FilmstripIoError),
    #[error(transparent)]
    Har(#[from] HarIoError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("encoder exited with {status} in {dir}")]
    Encoder { dir: PathBuf, status: std::process::ExitStatus },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CaptureOutError + '_ {
    move |source| CaptureOutError::Io { path: path.into(), source }
}

/// First 16 hex digits of SHA-256 over the URL.
pub fn url_hash(url: &str) -> String {
    hex::encode(&Sha256::digest(url.as_bytes())[..8])
}

/// Per-run `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub url: String,
    pub run_index: u32,
    pub browser_state_id: String,
    pub capture: CaptureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: u32,
    pub onload_ms: f64,
    pub browser_state_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlSummary {
    pub url: String,
    pub hash: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_run: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub runs: Vec<RunSummary>,
    /// Run chosen as the representative load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_run: Option<u32>,
}

pub fn run_dir(out: &Path, url: &str, run_index: u32) -> PathBuf {
    out.join(url_hash(url)).join(format!("run-{run_index}"))
}

pub fn write_recording(dir: &Path, rec: &PageLoadRecording) -> Result<(), CaptureOutError> {
    write_filmstrip(dir, &rec.filmstrip)?;
    let har = dir.join("har.json");
    fs::write(&har, to_pretty_bytes(&har_to_json(&rec.har, rec.filmstrip.navigation_start()))).map_err(io(&har))?;
    let cfg = dir.join("config.json");
    let run = RunConfig {
        url: rec.url.clone(),
        run_index: rec.run_index,
        browser_state_id: rec.browser_state_id.clone(),
        capture: rec.capture_config.clone(),
    };
    fs::write(&cfg, to_pretty_bytes(&run)).map_err(io(&cfg))?;
    Ok(())
}

pub fn read_recording(dir: &Path) -> Result<PageLoadRecording, CaptureOutError> {
    let filmstrip = read_filmstrip(dir)?;
    let har_path = dir.join("har.json");
    let har = parse_har(&fs::read(&har_path).map_err(io(&har_path))?)?;
    let cfg_path = dir.join("config.json");
    let bytes = fs::read(&cfg_path).map_err(io(&cfg_path))?;
    let run: RunConfig =
        serde_json::from_slice(&bytes).map_err(|source| CaptureOutError::Json { path: cfg_path, source })?;
    Ok(PageLoadRecording {
        url: run.url,
        run_index: run.run_index,
        filmstrip,
        har,
        browser_state_id: run.browser_state_id,
        capture_config: run.capture,
    })
}

/// Writes every recording plus summaries. When `encode_cmd` is given it runs
/// through `sh -c` once per median run, with `{dir}` replaced by the run directory.
pub fn write_capture(
    out: &Path,
    captures: &[UrlCapture],
    encode_cmd: Option<&str>,
) -> Result<Vec<UrlSummary>, CaptureOutError> {
    fs::create_dir_all(out).map_err(io(out))?;
    let mut summaries = Vec::with_capacity(captures.len());
    for cap in captures {
        for rec in &cap.recordings {
            write_recording(&run_dir(out, &cap.url, rec.run_index), rec)?;
        }
        let median_run = select_median(&cap.recordings).ok().map(|r| r.run_index);
        let (failed_run, failure) = match &cap.status {
            UrlStatus::Complete => (None, None),
            UrlStatus::Incomplete { run_index, reason } => (Some(*run_index), Some(reason.to_string())),
        };
        let summary = UrlSummary {
            url: cap.url.clone(),
            hash: url_hash(&cap.url),
            complete: failed_run.is_none(),
            failed_run,
            failure,
            runs: cap
                .recordings
                .iter()
                .map(|r| RunSummary {
                    run_index: r.run_index,
                    onload_ms: r.har.onload_ms,
                    browser_state_id: r.browser_state_id.clone(),
                })
                .collect(),
            median_run,
        };
        let url_dir = out.join(&summary.hash);
        fs::create_dir_all(&url_dir).map_err(io(&url_dir))?;
        let path = url_dir.join("summary.json");
        fs::write(&path, to_pretty_bytes(&summary)).map_err(io(&path))?;
        if let (Some(cmd), Some(k)) = (encode_cmd, median_run) {
            encode(&run_dir(out, &cap.url, k), cmd)?;
        }
        summaries.push(summary);
    }
    let index = out.join("index.json");
    fs::write(&index, to_pretty_bytes(&summaries)).map_err(io(&index))?;
    Ok(summaries)
}

fn encode(dir: &Path, cmd: &str) -> Result<(), CaptureOutError> {
    let line = cmd.replace("{dir}", &dir.to_string_lossy());
    let status = Command::new("sh").arg("-c").arg(&line).status().map_err(io(dir))?;
    if !status.success() {
        return Err(CaptureOutError::Encoder { dir: dir.into(), status });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_short() {
        assert_eq!(url_hash("https://a.test/"), url_hash("https://a.test/"));
        assert_ne!(url_hash("https://a.test/"), url_hash("https://b.test/"));
        assert_eq!(url_hash("x").len(), 16);
    }
}
