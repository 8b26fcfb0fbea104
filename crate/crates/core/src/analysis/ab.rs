use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{median, AnalysisError};
use crate::metrics::{MetricName, PltMetrics};
use crate::responses::ResolvedChoice;

/// Δ bin edges in ms: `[0, 200]`, `(200, 800]`, `(800, ∞)`.
pub const DEFAULT_DELTA_EDGES: [f64; 3] = [0.0, 200.0, 800.0];

fn counts(choices: &[ResolvedChoice]) -> (usize, usize, usize) {
    choices.iter().fold((0, 0, 0), |(a, b, nd), c| match c {
        ResolvedChoice::A => (a + 1, b, nd),
        ResolvedChoice::B => (a, b + 1, nd),
        ResolvedChoice::NoDifference => (a, b, nd + 1),
    })
}

/// Share of responses matching the most popular of the three answers.
pub fn agreement(choices: &[ResolvedChoice]) -> Result<f64, AnalysisError> {
    if choices.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let (a, b, nd) = counts(choices);
    Ok(a.max(b).max(nd) as f64 / choices.len() as f64)
}

/// Share of side-picking responses that favour condition B (the treatment).
/// "No difference" answers are left out; 0.5 is a split decision.
pub fn ab_score(choices: &[ResolvedChoice]) -> Result<f64, AnalysisError> {
    let (a, b, _) = counts(choices);
    if a + b == 0 {
        return Err(AnalysisError::UndefinedScore);
    }
    Ok(b as f64 / (a + b) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub unit_id: String,
    pub metric: MetricName,
    /// |metric(A) − metric(B)|
    pub delta_ms: f64,
    pub agreement: f64,
    /// `None` when every response was "no difference".
    pub score: Option<f64>,
    pub response_count: usize,
}

pub fn pair_delta(
    unit_id: &str,
    a: &PltMetrics,
    b: &PltMetrics,
    metric: MetricName,
    choices: &[ResolvedChoice],
) -> Result<PairDelta, AnalysisError> {
    Ok(PairDelta {
        unit_id: unit_id.into(),
        metric,
        delta_ms: (a.get(metric) - b.get(metric)).abs(),
        agreement: agreement(choices)?,
        score: ab_score(choices).ok(),
        response_count: choices.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAgreement {
    pub lo_ms: f64,
    /// `None` for the open-ended last bin.
    pub hi_ms: Option<f64>,
    pub pairs: usize,
    /// Absent when no pair falls in the bin.
    pub median_agreement: Option<f64>,
}

/// Median agreement per Δ bin. The first bin is closed `[e0, e1]`, later bins
/// are `(e_i, e_{i+1}]` and the last one is unbounded. Pairs below `e0` are
/// ignored.
pub fn agreement_vs_delta(pairs: &[PairDelta], edges: &[f64]) -> Vec<BinAgreement> {
    let mut out = Vec::with_capacity(edges.len());
    for (i, &lo) in edges.iter().enumerate() {
        let hi = edges.get(i + 1).copied();
        let in_bin = |d: f64| {
            let above = if i == 0 { d >= lo } else { d > lo };
            above && hi.is_none_or(|h| d <= h)
        };
        let values: Vec<f64> = pairs
            .iter()
            .filter(|p| in_bin(p.delta_ms))
            .map(|p| p.agreement)
            .collect();
        out.push(BinAgreement {
            lo_ms: lo,
            hi_ms: hi,
            pairs: values.len(),
            median_agreement: median(&values),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use ResolvedChoice::{NoDifference as ND, A, B};

    #[test]
    fn agreement_examples() {
        assert_eq!(agreement(&[A, A, B]).unwrap(), 2.0 / 3.0);
        assert_eq!(agreement(&[A, B, ND]).unwrap(), 1.0 / 3.0);
        assert_eq!(agreement(&[A, A, A, A]).unwrap(), 1.0);
        assert_eq!(agreement(&[]), Err(AnalysisError::Empty));
    }

    #[test]
    fn score_examples() {
        assert_eq!(ab_score(&[B, B, ND, A]).unwrap(), 2.0 / 3.0);
        assert_eq!(ab_score(&[A, A]).unwrap(), 0.0);
        assert_eq!(ab_score(&[A, B]).unwrap(), 0.5);
        assert_eq!(ab_score(&[ND, ND]), Err(AnalysisError::UndefinedScore));
    }

    fn pair(delta: f64, agreement: f64) -> PairDelta {
        PairDelta {
            unit_id: "p".into(),
            metric: MetricName::SpeedIndex,
            delta_ms: delta,
            agreement,
            score: None,
            response_count: 1,
        }
    }

    #[test]
    fn binning() {
        let bins = agreement_vs_delta(&[pair(100.0, 0.9)], &DEFAULT_DELTA_EDGES);
        assert_eq!(bins.len(), 3);
        assert_eq!(bins[0].median_agreement, Some(0.9));
        assert_eq!(bins[1].median_agreement, None);
        assert_eq!(bins[2].median_agreement, None);
        assert_eq!(bins[2].hi_ms, None);

        let bins = agreement_vs_delta(
            &[pair(0.0, 0.4), pair(200.0, 0.5), pair(200.5, 0.5), pair(800.0, 0.75), pair(5000.0, 1.0)],
            &DEFAULT_DELTA_EDGES,
        );
        assert_eq!(bins.iter().map(|b| b.pairs).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(bins[0].median_agreement, Some(0.45));
        assert_eq!(bins[1].median_agreement, Some(0.625));
    }

    #[test]
    fn delta_is_absolute() {
        let m = |v: f64| PltMetrics {
            onload_ms: v,
            speed_index_ms: v * 2.0,
            first_visual_change_ms: 0.0,
            last_visual_change_ms: 0.0,
        };
        let p = pair_delta("u", &m(1000.0), &m(1500.0), MetricName::SpeedIndex, &[A, ND]).unwrap();
        assert_eq!(p.delta_ms, 1000.0);
        assert_eq!(p.score, Some(0.0));
        let p = pair_delta("u", &m(1500.0), &m(1000.0), MetricName::OnLoad, &[ND]).unwrap();
        assert_eq!(p.delta_ms, 500.0);
        assert_eq!(p.score, None);
    }
}
