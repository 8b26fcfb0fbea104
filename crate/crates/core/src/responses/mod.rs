//! Participant telemetry, answers, and the filtering pipeline that decides
//! which sessions are trustworthy.

mod filter;
mod trim;

pub use filter::{
    action_count_violation, apply_filters, control_passed, control_violation,
    out_of_focus_violation, soft_rule_violation, time_on_site, FilterConfig, FilterVerdict,
    Reason,
};
pub use trim::{percentile, trim_percentiles};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::experiments::{Assignment, Condition, LabelMap, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Play,
    Pause,
    Seek,
    Focus,
    Blur,
    InstructionsOpen,
    InstructionsClose,
    VideoLoaded,
}

impl EventKind {
    /// Play, pause and seek count as video interactions.
    pub fn is_video_action(self) -> bool {
        matches!(self, EventKind::Play | EventKind::Pause | EventKind::Seek)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPayload {
    /// Seek target within the video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seek_to_ms: Option<u64>,
    /// Rendered size of the video element.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_height: Option<u32>,
    /// For `video_loaded`: time from unit start until the video was fully delivered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_ms: Option<u64>,
}

/// One client-side telemetry record. `at_ms` is measured on the session clock
/// (milliseconds since the session was opened), the same clock the service
/// uses for response timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetryEvent {
    pub session_id: String,
    /// Client sequence number; ingestion is idempotent per (session, seq).
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_id: Option<String>,
    pub kind: EventKind,
    pub at_ms: u64,
    #[serde(default, skip_serializing_if = "is_default_payload")]
    pub payload: EventPayload,
}

fn is_default_payload(p: &EventPayload) -> bool {
    *p == EventPayload::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineResponse {
    pub unit_id: String,
    pub slider_ms: u64,
    pub helper_ms: u64,
    pub submitted_ms: u64,
    pub accepted_helper: bool,
    /// Seconds the video needed to fully preload.
    pub video_load_time_s: f64,
    #[serde(default)]
    pub page_loaded_at: u64,
    #[serde(default)]
    pub submitted_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbChoice {
    Left,
    Right,
    NoDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResolvedChoice {
    A,
    B,
    #[serde(rename = "no_difference")]
    NoDifference,
}

impl ResolvedChoice {
    pub fn resolve(choice: AbChoice, labels: LabelMap) -> Self {
        let side = match choice {
            AbChoice::Left => Side::Left,
            AbChoice::Right => Side::Right,
            AbChoice::NoDifference => return ResolvedChoice::NoDifference,
        };
        match labels.condition_at(side) {
            Condition::A => ResolvedChoice::A,
            Condition::B => ResolvedChoice::B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbResponse {
    pub unit_id: String,
    pub choice: AbChoice,
    pub resolved_choice: ResolvedChoice,
    #[serde(default)]
    pub page_loaded_at: u64,
    #[serde(default)]
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Timeline(TimelineResponse),
    Ab(AbResponse),
}

impl Response {
    pub fn unit_id(&self) -> &str {
        match self {
            Response::Timeline(r) => &r.unit_id,
            Response::Ab(r) => &r.unit_id,
        }
    }

    pub fn page_loaded_at(&self) -> u64 {
        match self {
            Response::Timeline(r) => r.page_loaded_at,
            Response::Ab(r) => r.page_loaded_at,
        }
    }

    pub fn submitted_at(&self) -> u64 {
        match self {
            Response::Timeline(r) => r.submitted_at,
            Response::Ab(r) => r.submitted_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResponseError {
    SubmittedNotOffered { submitted_ms: u64 },
    HelperFlagMismatch,
    NegativeLoadTime,
    ResolutionMismatch,
    TimestampsReversed,
}

impl fmt::Display for ResponseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseError::SubmittedNotOffered { submitted_ms } => write!(
                f,
                "submitted_ms {submitted_ms} is neither the slider nor the helper choice"
            ),
            ResponseError::HelperFlagMismatch => {
                write!(f, "accepted_helper disagrees with submitted_ms")
            }
            ResponseError::NegativeLoadTime => write!(f, "video_load_time_s must be non-negative"),
            ResponseError::ResolutionMismatch => {
                write!(f, "resolved_choice does not follow from the unit's label map")
            }
            ResponseError::TimestampsReversed => {
                write!(f, "submitted_at precedes page_loaded_at")
            }
        }
    }
}

impl core::error::Error for ResponseError {}

impl TimelineResponse {
    pub fn validate(&self) -> Result<(), ResponseError> {
        let expected = if self.accepted_helper {
            self.helper_ms
        } else {
            self.slider_ms
        };
        if self.submitted_ms != self.slider_ms && self.submitted_ms != self.helper_ms {
            return Err(ResponseError::SubmittedNotOffered {
                submitted_ms: self.submitted_ms,
            });
        }
        if self.submitted_ms != expected {
            return Err(ResponseError::HelperFlagMismatch);
        }
        if !(self.video_load_time_s >= 0.0) {
            return Err(ResponseError::NegativeLoadTime);
        }
        if self.submitted_at < self.page_loaded_at {
            return Err(ResponseError::TimestampsReversed);
        }
        Ok(())
    }
}

impl AbResponse {
    pub fn validate(&self, labels: LabelMap) -> Result<(), ResponseError> {
        if ResolvedChoice::resolve(self.choice, labels) != self.resolved_choice {
            return Err(ResponseError::ResolutionMismatch);
        }
        if self.submitted_at < self.page_loaded_at {
            return Err(ResponseError::TimestampsReversed);
        }
        Ok(())
    }
}

/// Everything recorded for one participant session; the filter pipeline input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub assigned: Vec<Assignment>,
    pub events: Vec<TelemetryEvent>,
    pub responses: Vec<Response>,
}

impl SessionRecord {
    pub fn response_for(&self, unit_id: &str) -> Option<&Response> {
        self.responses.iter().find(|r| r.unit_id() == unit_id)
    }

    /// Events of one unit ordered by (at_ms, seq).
    pub fn unit_events(&self, unit_id: &str) -> Vec<&TelemetryEvent> {
        let mut ev: Vec<&TelemetryEvent> = self
            .events
            .iter()
            .filter(|e| e.unit_id.as_deref() == Some(unit_id))
            .collect();
        ev.sort_by_key(|e| (e.at_ms, e.seq));
        ev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timeline(slider: u64, helper: u64, submitted: u64, accepted: bool) -> TimelineResponse {
        TimelineResponse {
            unit_id: "u".into(),
            slider_ms: slider,
            helper_ms: helper,
            submitted_ms: submitted,
            accepted_helper: accepted,
            video_load_time_s: 1.0,
            page_loaded_at: 0,
            submitted_at: 10,
        }
    }

    #[test]
    fn timeline_invariants() {
        assert!(timeline(4200, 3900, 3900, true).validate().is_ok());
        assert!(timeline(4200, 3900, 4200, false).validate().is_ok());
        assert_eq!(
            timeline(4200, 3900, 4000, false).validate(),
            Err(ResponseError::SubmittedNotOffered { submitted_ms: 4000 })
        );
        assert_eq!(
            timeline(4200, 3900, 4200, true).validate(),
            Err(ResponseError::HelperFlagMismatch)
        );
        // helper equal to slider: both readings agree
        assert!(timeline(100, 100, 100, true).validate().is_ok());
    }

    #[test]
    fn resolution_follows_label_map() {
        let right_is_a = LabelMap { a_side: Side::Right };
        assert_eq!(ResolvedChoice::resolve(AbChoice::Right, right_is_a), ResolvedChoice::A);
        assert_eq!(ResolvedChoice::resolve(AbChoice::Left, right_is_a), ResolvedChoice::B);
        assert_eq!(
            ResolvedChoice::resolve(AbChoice::NoDifference, right_is_a),
            ResolvedChoice::NoDifference
        );
        let r = AbResponse {
            unit_id: "u".into(),
            choice: AbChoice::Left,
            resolved_choice: ResolvedChoice::A,
            page_loaded_at: 0,
            submitted_at: 0,
        };
        assert_eq!(r.validate(right_is_a), Err(ResponseError::ResolutionMismatch));
    }
}
