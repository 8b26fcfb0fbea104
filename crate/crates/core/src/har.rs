//! Page-load timing records derived from an HTTP archive.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One request in a page load, times relative to navigation start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarEntry {
    pub url: String,
    pub start_ms: f64,
    pub end_ms: f64,
    /// e.g. `http/1.1`, `h2`.
    pub protocol: String,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarLog {
    pub page_url: String,
    pub onload_ms: f64,
    pub entries: Vec<HarEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HarError {
    NonPositiveOnload(f64),
    EntryTimes { index: usize },
}

impl fmt::Display for HarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarError::NonPositiveOnload(v) => write!(f, "onload must be positive, got {v}"),
            HarError::EntryTimes { index } => {
                write!(f, "entry {index} must satisfy 0 <= start <= end")
            }
        }
    }
}

impl core::error::Error for HarError {}

impl HarLog {
    pub fn validate(&self) -> Result<(), HarError> {
        if !(self.onload_ms > 0.0) {
            return Err(HarError::NonPositiveOnload(self.onload_ms));
        }
        for (index, e) in self.entries.iter().enumerate() {
            if !(e.start_ms >= 0.0 && e.end_ms >= e.start_ms) {
                return Err(HarError::EntryTimes { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn validation() {
        let mut log = HarLog {
            page_url: "https://example.org/".to_string(),
            onload_ms: 1200.0,
            entries: vec![HarEntry {
                url: "https://example.org/".to_string(),
                start_ms: 0.0,
                end_ms: 300.0,
                protocol: "h2".to_string(),
                status: 200,
            }],
        };
        assert!(log.validate().is_ok());
        log.entries[0].end_ms = -1.0;
        assert_eq!(log.validate(), Err(HarError::EntryTimes { index: 0 }));
        log.onload_ms = 0.0;
        assert!(matches!(log.validate(), Err(HarError::NonPositiveOnload(_))));
    }
}
