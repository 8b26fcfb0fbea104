//! Session-level quality rules.
//!
//! | rule                 | drops a session when                                        |
//! |----------------------|-------------------------------------------------------------|
//! | engagement (actions) | play+pause+seek count > reference × multiplier              |
//! | engagement (focus)   | a unit was blurred > limit while its video loaded ≤ limit   |
//! | soft                 | some assigned unit saw no play and no seek before answering |
//! | control              | some control unit was answered wrongly                      |

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AbChoice, EventKind, Response, SessionRecord};
use crate::experiments::{GroundTruth, Side, TestUnit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Interactions of the most active trusted participant.
    pub action_reference: u32,
    pub action_multiplier: f64,
    pub out_of_focus_limit_s: f64,
    pub trim_lo_pct: f64,
    pub trim_hi_pct: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            action_reference: 369,
            action_multiplier: 1.5,
            out_of_focus_limit_s: 10.0,
            trim_lo_pct: 25.0,
            trim_hi_pct: 75.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0 <= self.trim_lo_pct && self.trim_lo_pct < self.trim_hi_pct && self.trim_hi_pct <= 100.0) {
            return Err("percentiles must satisfy 0 <= lo < hi <= 100");
        }
        if !(self.action_multiplier > 1.0) {
            return Err("action_multiplier must exceed 1");
        }
        if !(self.out_of_focus_limit_s >= 0.0) {
            return Err("out_of_focus_limit_s must be non-negative");
        }
        Ok(())
    }

    /// Largest action count that is still acceptable (553.5 by default).
    pub fn action_limit(&self) -> f64 {
        self.action_reference as f64 * self.action_multiplier
    }

    fn focus_limit_ms(&self) -> f64 {
        self.out_of_focus_limit_s * 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    EngagementActions,
    EngagementFocus,
    SoftSkip,
    ControlFail,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::EngagementActions => "engagement_actions",
            Reason::EngagementFocus => "engagement_focus",
            Reason::SoftSkip => "soft_skip",
            Reason::ControlFail => "control_fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub session_id: String,
    pub kept: bool,
    pub reasons: BTreeSet<Reason>,
}

/// Total answering time in minutes.
pub fn time_on_site(session: &SessionRecord) -> f64 {
    let ms: u64 = session
        .responses
        .iter()
        .map(|r| r.submitted_at().saturating_sub(r.page_loaded_at()))
        .sum();
    ms as f64 / 60_000.0
}

pub fn action_count_violation(session: &SessionRecord, config: &FilterConfig) -> bool {
    let actions = session
        .events
        .iter()
        .filter(|e| e.kind.is_video_action())
        .count();
    actions as f64 > config.action_limit()
}

/// Cumulative blur time per unit exceeding the limit counts only when that
/// unit's video had been delivered within the limit; a slow video excuses the
/// participant for looking elsewhere.
pub fn out_of_focus_violation(session: &SessionRecord, config: &FilterConfig) -> bool {
    let limit_ms = config.focus_limit_ms();
    session.assigned.iter().any(|a| {
        let events = session.unit_events(&a.unit_id);
        let response = session.response_for(&a.unit_id);
        let close_at = response
            .map(Response::submitted_at)
            .or_else(|| events.last().map(|e| e.at_ms))
            .unwrap_or(0);

        let mut blurred_ms = 0u64;
        let mut blur_start = None;
        for e in &events {
            match (e.kind, blur_start) {
                (EventKind::Blur, None) => blur_start = Some(e.at_ms),
                (EventKind::Focus, Some(start)) => {
                    blurred_ms += e.at_ms.saturating_sub(start);
                    blur_start = None;
                }
                _ => {}
            }
        }
        if let Some(start) = blur_start {
            blurred_ms += close_at.saturating_sub(start);
        }
        if blurred_ms as f64 <= limit_ms {
            return false;
        }
        video_delivered_within(&events, response, limit_ms)
    })
}

fn video_delivered_within(
    events: &[&super::TelemetryEvent],
    response: Option<&Response>,
    limit_ms: f64,
) -> bool {
    if let Some(loaded) = events.iter().find(|e| e.kind == EventKind::VideoLoaded) {
        if let Some(load_ms) = loaded.payload.load_ms {
            return load_ms as f64 <= limit_ms;
        }
        if let Some(r) = response {
            return loaded.at_ms.saturating_sub(r.page_loaded_at()) as f64 <= limit_ms;
        }
    }
    match response {
        Some(Response::Timeline(t)) => t.video_load_time_s * 1000.0 <= limit_ms,
        _ => false,
    }
}

/// True when some assigned unit was answered without a single play or seek.
pub fn soft_rule_violation(session: &SessionRecord) -> bool {
    session.assigned.iter().any(|a| {
        let deadline = session
            .response_for(&a.unit_id)
            .map_or(u64::MAX, Response::submitted_at);
        !session.events.iter().any(|e| {
            e.unit_id.as_deref() == Some(a.unit_id.as_str())
                && matches!(e.kind, EventKind::Play | EventKind::Seek)
                && e.at_ms <= deadline
        })
    })
}

/// Pass/fail of a control answer.
pub fn control_passed(truth: GroundTruth, response: &Response) -> bool {
    match (truth, response) {
        (GroundTruth::NonDelayedSide(side), Response::Ab(r)) => matches!(
            (side, r.choice),
            (Side::Left, AbChoice::Left) | (Side::Right, AbChoice::Right)
        ),
        (GroundTruth::KeepOriginal, Response::Timeline(r)) => !r.accepted_helper,
        _ => false,
    }
}

pub fn control_violation(session: &SessionRecord, units: &[TestUnit]) -> bool {
    let by_id: BTreeMap<&str, &TestUnit> = units.iter().map(|u| (u.id.as_str(), u)).collect();
    control_violation_indexed(session, &by_id)
}

fn control_violation_indexed(session: &SessionRecord, units: &BTreeMap<&str, &TestUnit>) -> bool {
    session.assigned.iter().any(|a| {
        let Some(truth) = units.get(a.unit_id.as_str()).and_then(|u| u.ground_truth) else {
            return false;
        };
        session
            .response_for(&a.unit_id)
            .is_some_and(|r| !control_passed(truth, r))
    })
}

/// Evaluates every rule for every session. Reasons accumulate.
pub fn apply_filters(
    sessions: &[SessionRecord],
    units: &[TestUnit],
    config: &FilterConfig,
) -> Vec<FilterVerdict> {
    let by_id: BTreeMap<&str, &TestUnit> = units.iter().map(|u| (u.id.as_str(), u)).collect();
    sessions
        .iter()
        .map(|s| {
            let mut reasons = BTreeSet::new();
            if action_count_violation(s, config) {
                reasons.insert(Reason::EngagementActions);
            }
            if out_of_focus_violation(s, config) {
                reasons.insert(Reason::EngagementFocus);
            }
            if soft_rule_violation(s) {
                reasons.insert(Reason::SoftSkip);
            }
            if control_violation_indexed(s, &by_id) {
                reasons.insert(Reason::ControlFail);
            }
            FilterVerdict {
                session_id: s.session_id.clone(),
                kept: reasons.is_empty(),
                reasons,
            }
        })
        .collect()
}
