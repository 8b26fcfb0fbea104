//! Campaign definitions: timeline and A/B test units, spliced composites,
//! control questions, assignment and broken-video flagging.

mod assign;
mod control;
mod splice;

pub use assign::{assign_videos, Assignment, CampaignState};
pub use control::{make_control_ab, make_control_timeline, DEFAULT_CONTROL_DELAY_MS};
pub use splice::{composite_half, splice_ab, SplicedComposite, DIVIDER_COLOR, DIVIDER_PX};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::PltMetrics;

pub const DEFAULT_VIDEOS_PER_PARTICIPANT: u32 = 6;
pub const DEFAULT_CONTROLS_PER_PARTICIPANT: u32 = 1;
pub const DEFAULT_FLAG_BAN_THRESHOLD: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignKind {
    Timeline,
    Ab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Timeline,
    Ab,
    ControlTimeline,
    ControlAb,
}

impl UnitKind {
    pub fn is_control(self) -> bool {
        matches!(self, UnitKind::ControlTimeline | UnitKind::ControlAb)
    }

    pub fn is_timeline(self) -> bool {
        matches!(self, UnitKind::Timeline | UnitKind::ControlTimeline)
    }

    pub fn campaign_kind(self) -> CampaignKind {
        if self.is_timeline() {
            CampaignKind::Timeline
        } else {
            CampaignKind::Ab
        }
    }
}

/// Screen side of a side-by-side composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Experimental condition. A is the baseline, B the treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    A,
    B,
}

/// Which screen side shows condition A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelMap {
    pub a_side: Side,
}

impl LabelMap {
    pub fn condition_at(&self, side: Side) -> Condition {
        if side == self.a_side {
            Condition::A
        } else {
            Condition::B
        }
    }

    pub fn side_of(&self, condition: Condition) -> Side {
        match condition {
            Condition::A => self.a_side,
            Condition::B => self.a_side.other(),
        }
    }
}

/// Known answer of a control unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "side")]
pub enum GroundTruth {
    /// A/B control: the side that was not delayed.
    NonDelayedSide(Side),
    /// Timeline control: the participant must reject the blank rewind suggestion.
    KeepOriginal,
}

/// Media references are paths relative to the campaign's media root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum UnitMedia {
    Filmstrip {
        path: String,
    },
    /// The same pair spliced in both orientations.
    Composite {
        a_left: String,
        b_left: String,
    },
    ControlComposite {
        path: String,
        delayed: Side,
    },
}

impl UnitMedia {
    pub fn paths(&self) -> Vec<&str> {
        match self {
            UnitMedia::Filmstrip { path } | UnitMedia::ControlComposite { path, .. } => {
                alloc::vec![path.as_str()]
            }
            UnitMedia::Composite { a_left, b_left } => alloc::vec![a_left.as_str(), b_left.as_str()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestUnit {
    pub id: String,
    pub kind: UnitKind,
    pub media: UnitMedia,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    /// Timeline units: one entry. A/B units: `[A, B]`.
    #[serde(default)]
    pub metrics: Vec<PltMetrics>,
    #[serde(default)]
    pub banned: bool,
    #[serde(default)]
    pub flags: BTreeSet<String>,
}

impl TestUnit {
    pub fn validate(&self, ban_threshold: u32) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidUnit(self.id.clone(), msg));
        if self.id.is_empty() {
            return bad("empty id".into());
        }
        let media_ok = matches!(
            (self.kind, &self.media),
            (UnitKind::Timeline | UnitKind::ControlTimeline, UnitMedia::Filmstrip { .. })
                | (UnitKind::Ab, UnitMedia::Composite { .. })
                | (UnitKind::ControlAb, UnitMedia::ControlComposite { .. })
        );
        if !media_ok {
            return bad(format!("media does not match kind {:?}", self.kind));
        }
        match (self.kind, self.ground_truth) {
            (UnitKind::Timeline | UnitKind::Ab, None) => {}
            (UnitKind::ControlTimeline, Some(GroundTruth::KeepOriginal)) => {}
            (UnitKind::ControlAb, Some(GroundTruth::NonDelayedSide(side))) => {
                if let UnitMedia::ControlComposite { delayed, .. } = self.media {
                    if delayed == side {
                        return bad("ground truth names the delayed side".into());
                    }
                }
            }
            _ => return bad("control units need a matching ground truth, others none".into()),
        }
        let expected_metrics = match self.kind {
            UnitKind::Ab => 2,
            _ => 1,
        };
        if !self.metrics.is_empty() && self.metrics.len() != expected_metrics {
            return bad(format!("expected {expected_metrics} metric sets"));
        }
        if self.banned != (self.flags.len() as u64 >= ban_threshold as u64) {
            return bad("banned must equal flags reaching the ban threshold".into());
        }
        Ok(())
    }

    /// Records a broken-video report. Returns true when this report banned the unit.
    pub fn flag(&mut self, participant: &str, ban_threshold: u32) -> bool {
        self.flags.insert(participant.into());
        let was = self.banned;
        self.banned = self.flags.len() as u64 >= ban_threshold as u64;
        self.banned && !was
    }
}

/// Adds a flag to `unit`, banning it once enough distinct participants reported it.
pub fn flag_video(unit: &mut TestUnit, participant: &str, ban_threshold: u32) -> bool {
    unit.flag(participant, ban_threshold)
}

fn default_videos() -> u32 {
    DEFAULT_VIDEOS_PER_PARTICIPANT
}

fn default_controls() -> u32 {
    DEFAULT_CONTROLS_PER_PARTICIPANT
}

fn default_ban() -> u32 {
    DEFAULT_FLAG_BAN_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub id: String,
    pub kind: CampaignKind,
    pub test_units: Vec<TestUnit>,
    pub target_participants: u32,
    #[serde(default = "default_videos")]
    pub videos_per_participant: u32,
    #[serde(default = "default_controls")]
    pub controls_per_participant: u32,
    #[serde(default = "default_ban")]
    pub flag_ban_threshold: u32,
}

impl Campaign {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::InvalidCampaign(msg.into()));
        if self.target_participants == 0 {
            return bad("target_participants must be positive");
        }
        if self.videos_per_participant == 0 {
            return bad("videos_per_participant must be positive");
        }
        if self.flag_ban_threshold == 0 {
            return bad("flag_ban_threshold must be positive");
        }
        if self.controls_per_participant >= self.videos_per_participant {
            return bad("controls_per_participant must be below videos_per_participant");
        }
        let total = self.test_units.len() as u64;
        if self.videos_per_participant as u64 > total + self.controls_per_participant as u64 {
            return bad("videos_per_participant exceeds available units plus controls");
        }
        let mut ids = BTreeSet::new();
        for unit in &self.test_units {
            if !ids.insert(unit.id.as_str()) {
                return Err(ExperimentError::DuplicateUnit(unit.id.clone()));
            }
            if unit.kind.campaign_kind() != self.kind {
                return Err(ExperimentError::InvalidUnit(
                    unit.id.clone(),
                    format!("{:?} unit in a {:?} campaign", unit.kind, self.kind),
                ));
            }
            unit.validate(self.flag_ban_threshold)?;
        }
        let controls = self.test_units.iter().filter(|u| u.kind.is_control()).count() as u64;
        if controls < self.controls_per_participant as u64 {
            return bad("not enough control units for controls_per_participant");
        }
        let regular = total - controls;
        if regular < (self.videos_per_participant - self.controls_per_participant) as u64 {
            return bad("not enough non-control units for one participant");
        }
        Ok(())
    }

    pub fn unit(&self, id: &str) -> Option<&TestUnit> {
        self.test_units.iter().find(|u| u.id == id)
    }

    pub fn unit_mut(&mut self, id: &str) -> Option<&mut TestUnit> {
        self.test_units.iter_mut().find(|u| u.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentError {
    InvalidCampaign(String),
    InvalidUnit(String, String),
    DuplicateUnit(String),
    UnknownUnit(String),
    DimensionMismatch,
    Exhausted,
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::InvalidCampaign(msg) => write!(f, "invalid campaign: {msg}"),
            ExperimentError::InvalidUnit(id, msg) => write!(f, "invalid unit {id}: {msg}"),
            ExperimentError::DuplicateUnit(id) => write!(f, "duplicate unit id {id}"),
            ExperimentError::UnknownUnit(id) => write!(f, "unknown unit {id}"),
            ExperimentError::DimensionMismatch => {
                write!(f, "filmstrips to splice have different viewports")
            }
            ExperimentError::Exhausted => write!(f, "campaign has no assignable units left"),
        }
    }
}

impl core::error::Error for ExperimentError {}
