//! Campaign-level report: the pure end of the pipeline from raw sessions to
//! the figures' underlying data.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    agreement_vs_delta, aggregate_video, delta_cdf, pair_delta, pearson, spearman, BinAgreement,
    CdfPoint, EmpiricalCdf, PairDelta, VideoAggregate, DEFAULT_DELTA_EDGES,
};
use crate::experiments::{Campaign, CampaignKind, UnitKind};
use crate::metrics::MetricName;
use crate::responses::{trim_percentiles, FilterConfig, FilterVerdict, Response, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Metric defining Δ for A/B pairs.
    pub metric: MetricName,
    pub delta_edges: Vec<f64>,
    pub correlation: CorrelationMethod,
    pub histogram_bin_ms: f64,
    pub filter: FilterConfig,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            metric: MetricName::SpeedIndex,
            delta_edges: DEFAULT_DELTA_EDGES.to_vec(),
            correlation: CorrelationMethod::Pearson,
            histogram_bin_ms: 500.0,
            filter: FilterConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub sessions: usize,
    pub kept: usize,
    pub dropped: usize,
    /// Sessions failing each rule; one session may appear under several.
    pub by_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub metric: MetricName,
    pub method: CorrelationMethod,
    /// `None` when undefined (fewer than two videos or a constant series).
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCdf {
    pub metric: MetricName,
    pub points: Vec<CdfPoint>,
    pub within_100ms: f64,
}

/// Counts of submitted answers per bin, starting at `first_bin_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitHistogram {
    pub unit_id: String,
    pub first_bin_ms: f64,
    pub bin_ms: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub campaign_id: String,
    pub kind: CampaignKind,
    pub filtering: FilterSummary,
    pub videos: Vec<VideoAggregate>,
    pub correlations: Vec<CorrelationEntry>,
    pub delta_cdfs: Vec<MetricCdf>,
    pub histograms: Vec<UnitHistogram>,
    pub pairs: Vec<PairDelta>,
    pub agreement_bins: Vec<BinAgreement>,
    pub score_cdf: Vec<CdfPoint>,
}

pub fn build_report(
    campaign: &Campaign,
    sessions: &[SessionRecord],
    verdicts: &[FilterVerdict],
    options: &ReportOptions,
) -> CampaignReport {
    let kept: BTreeMap<&str, bool> = verdicts
        .iter()
        .map(|v| (v.session_id.as_str(), v.kept))
        .collect();
    let kept_sessions: Vec<&SessionRecord> = sessions
        .iter()
        .filter(|s| kept.get(s.session_id.as_str()).copied().unwrap_or(false))
        .collect();

    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for v in verdicts {
        for r in &v.reasons {
            *by_reason.entry(r.as_str().to_string()).or_insert(0) += 1;
        }
    }
    let kept_count = verdicts.iter().filter(|v| v.kept).count();
    let filtering = FilterSummary {
        sessions: verdicts.len(),
        kept: kept_count,
        dropped: verdicts.len() - kept_count,
        by_reason,
    };

    let mut units: Vec<_> = campaign
        .test_units
        .iter()
        .filter(|u| !u.kind.is_control())
        .collect();
    units.sort_by(|a, b| a.id.cmp(&b.id));

    let mut report = CampaignReport {
        campaign_id: campaign.id.clone(),
        kind: campaign.kind,
        filtering,
        videos: Vec::new(),
        correlations: Vec::new(),
        delta_cdfs: Vec::new(),
        histograms: Vec::new(),
        pairs: Vec::new(),
        agreement_bins: Vec::new(),
        score_cdf: Vec::new(),
    };

    for unit in &units {
        let answers: Vec<&Response> = kept_sessions
            .iter()
            .filter_map(|s| s.response_for(&unit.id))
            .collect();
        match unit.kind {
            UnitKind::Timeline => {
                let submitted: Vec<f64> = answers
                    .iter()
                    .filter_map(|r| match r {
                        Response::Timeline(t) => Some(t.submitted_ms as f64),
                        _ => None,
                    })
                    .collect();
                if submitted.is_empty() {
                    continue;
                }
                report
                    .histograms
                    .push(histogram(&unit.id, &submitted, options.histogram_bin_ms));
                let trimmed = trim_percentiles(&submitted, &options.filter);
                if let Some(&m) = unit.metrics.first() {
                    if let Ok(agg) = aggregate_video(&unit.id, &trimmed, m) {
                        report.videos.push(agg);
                    }
                }
            }
            UnitKind::Ab => {
                let choices: Vec<_> = answers
                    .iter()
                    .filter_map(|r| match r {
                        Response::Ab(a) => Some(a.resolved_choice),
                        _ => None,
                    })
                    .collect();
                if let [a, b] = unit.metrics.as_slice() {
                    if let Ok(p) = pair_delta(&unit.id, a, b, options.metric, &choices) {
                        report.pairs.push(p);
                    }
                }
            }
            UnitKind::ControlTimeline | UnitKind::ControlAb => {}
        }
    }

    if !report.videos.is_empty() {
        let uplt: Vec<f64> = report.videos.iter().map(|v| v.user_perceived_plt_ms).collect();
        for metric in MetricName::ALL {
            let values: Vec<f64> = report.videos.iter().map(|v| v.metrics.get(metric)).collect();
            let value = match options.correlation {
                CorrelationMethod::Pearson => pearson(&uplt, &values),
                CorrelationMethod::Spearman => spearman(&uplt, &values),
            }
            .ok();
            report.correlations.push(CorrelationEntry {
                metric,
                method: options.correlation,
                value,
            });
            let cdf = delta_cdf(&report.videos, metric);
            report.delta_cdfs.push(MetricCdf {
                metric,
                points: cdf.points(),
                within_100ms: cdf.fraction_within(-100.0, 100.0),
            });
        }
    }

    if campaign.kind == CampaignKind::Ab {
        report.agreement_bins = agreement_vs_delta(&report.pairs, &options.delta_edges);
        report.score_cdf =
            EmpiricalCdf::new(report.pairs.iter().filter_map(|p| p.score).collect()).points();
    }
    report
}

fn histogram(unit_id: &str, values: &[f64], bin_ms: f64) -> UnitHistogram {
    let bin_ms = if bin_ms > 0.0 { bin_ms } else { 500.0 };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let first = libm::floor(lo / bin_ms) * bin_ms;
    let mut counts: Vec<u64> = Vec::new();
    for &v in values {
        let i = libm::floor((v - first) / bin_ms) as usize;
        if counts.len() <= i {
            counts.resize(i + 1, 0);
        }
        counts[i] += 1;
    }
    UnitHistogram {
        unit_id: unit_id.into(),
        first_bin_ms: first,
        bin_ms,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let h = histogram("u", &[1200.0, 1499.0, 1500.0, 2600.0], 500.0);
        assert_eq!(h.first_bin_ms, 1000.0);
        assert_eq!(h.counts, alloc::vec![2, 1, 0, 1]);
    }
}
