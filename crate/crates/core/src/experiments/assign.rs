use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Campaign, ExperimentError, GroundTruth, LabelMap, Side, TestUnit, UnitKind};

/// One unit in a participant's ordered assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub unit_id: String,
    pub kind: UnitKind,
    /// Presentation of conditions for A/B units; `None` for timeline units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<LabelMap>,
}

/// Picks a session's units.
///
/// Non-control units are taken least-served first (ties broken at random), so
/// serve counts never drift more than one apart while no unit is banned.
/// Controls are drawn the same way from the control pool and the final order
/// is shuffled, which puts them at uniformly random positions. `served` is
/// updated in place.
pub fn assign_videos<R: Rng + ?Sized>(
    campaign: &Campaign,
    served: &mut BTreeMap<String, u64>,
    rng: &mut R,
) -> Result<Vec<Assignment>, ExperimentError> {
    let controls = campaign.controls_per_participant as usize;
    let regular = campaign.videos_per_participant as usize - controls;

    let available = |control: bool| -> Vec<&TestUnit> {
        campaign
            .test_units
            .iter()
            .filter(|u| !u.banned && u.kind.is_control() == control)
            .collect()
    };
    let mut chosen = least_served(available(false), regular, served, rng)?;
    chosen.extend(least_served(available(true), controls, served, rng)?);
    chosen.shuffle(rng);

    let out = chosen
        .into_iter()
        .map(|unit| {
            *served.entry(unit.id.clone()).or_insert(0) += 1;
            let label_map = match (unit.kind, unit.ground_truth) {
                (UnitKind::Ab, _) => Some(LabelMap {
                    a_side: if rng.gen_bool(0.5) { Side::Left } else { Side::Right },
                }),
                (UnitKind::ControlAb, Some(GroundTruth::NonDelayedSide(side))) => {
                    Some(LabelMap { a_side: side })
                }
                _ => None,
            };
            Assignment {
                unit_id: unit.id.clone(),
                kind: unit.kind,
                label_map,
            }
        })
        .collect();
    Ok(out)
}

fn least_served<'a, R: Rng + ?Sized>(
    mut pool: Vec<&'a TestUnit>,
    k: usize,
    served: &BTreeMap<String, u64>,
    rng: &mut R,
) -> Result<Vec<&'a TestUnit>, ExperimentError> {
    if pool.len() < k {
        return Err(ExperimentError::Exhausted);
    }
    pool.shuffle(rng);
    pool.sort_by_key(|u| served.get(&u.id).copied().unwrap_or(0));
    pool.truncate(k);
    Ok(pool)
}

/// A campaign plus the mutable counters that assignment and flagging maintain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    pub campaign: Campaign,
    pub served: BTreeMap<String, u64>,
}

impl CampaignState {
    pub fn new(campaign: Campaign) -> Result<Self, ExperimentError> {
        campaign.validate()?;
        Ok(Self {
            campaign,
            served: BTreeMap::new(),
        })
    }

    pub fn assign<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Assignment>, ExperimentError> {
        assign_videos(&self.campaign, &mut self.served, rng)
    }

    /// Returns serve slots of units an abandoned session never answered.
    pub fn release<'a>(&mut self, unit_ids: impl IntoIterator<Item = &'a str>) {
        for id in unit_ids {
            if let Some(n) = self.served.get_mut(id) {
                *n = n.saturating_sub(1);
            }
        }
    }

    pub fn served_count(&self, unit_id: &str) -> u64 {
        self.served.get(unit_id).copied().unwrap_or(0)
    }

    /// Returns true when the flag banned the unit.
    pub fn flag(&mut self, unit_id: &str, participant: &str) -> Result<bool, ExperimentError> {
        let threshold = self.campaign.flag_ban_threshold;
        let unit = self
            .campaign
            .unit_mut(unit_id)
            .ok_or_else(|| ExperimentError::UnknownUnit(unit_id.into()))?;
        Ok(unit.flag(participant, threshold))
    }
}
