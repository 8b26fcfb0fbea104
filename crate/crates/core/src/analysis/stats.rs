use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::metrics::{MetricName, PltMetrics};

/// Per-video summary of (already trimmed) timeline responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAggregate {
    pub unit_id: String,
    pub user_perceived_plt_ms: f64,
    pub response_count: usize,
    /// Population standard deviation.
    pub response_std_ms: f64,
    pub metrics: PltMetrics,
}

pub fn aggregate_video(
    unit_id: &str,
    responses_ms: &[f64],
    metrics: PltMetrics,
) -> Result<VideoAggregate, AnalysisError> {
    if responses_ms.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = responses_ms.len() as f64;
    let mean = responses_ms.iter().sum::<f64>() / n;
    let var = responses_ms.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(VideoAggregate {
        unit_id: unit_id.into(),
        user_perceived_plt_ms: mean,
        response_count: responses_ms.len(),
        response_std_ms: libm::sqrt(var),
        metrics,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooFewPoints);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    pearson(&ranks(x), &ranks(y))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = alloc::vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Median of a non-empty sample; mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    /// Fraction of samples ≤ value.
    pub level: f64,
}

/// Empirical distribution of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self { sorted: samples }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// F(x): fraction of samples ≤ x.
    pub fn at(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Fraction of samples in the closed interval `[lo, hi]`.
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        let below = self.sorted.partition_point(|&v| v < lo);
        let upto = self.sorted.partition_point(|&v| v <= hi);
        upto.saturating_sub(below) as f64 / self.sorted.len() as f64
    }

    /// One point per distinct value, at the level reached after that value.
    pub fn points(&self) -> Vec<CdfPoint> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<CdfPoint> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let level = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(p) if p.value == v => p.level = level,
                _ => out.push(CdfPoint { value: v, level }),
            }
        }
        out
    }
}

/// Distribution of `user_perceived_plt − metric` across videos. Negative
/// values mean participants picked a moment before the metric.
pub fn delta_cdf(aggregates: &[VideoAggregate], metric: MetricName) -> EmpiricalCdf {
    EmpiricalCdf::new(
        aggregates
            .iter()
            .map(|a| a.user_perceived_plt_ms - a.metrics.get(metric))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn metrics(v: f64) -> PltMetrics {
        PltMetrics {
            onload_ms: v,
            speed_index_ms: v,
            first_visual_change_ms: v,
            last_visual_change_ms: v,
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate_video("u", &[2000.0, 3000.0, 4000.0], metrics(0.0)).unwrap();
        assert_eq!(a.user_perceived_plt_ms, 3000.0);
        assert!((a.response_std_ms - 816.496_580_927_726).abs() < 1e-9);
        let a = aggregate_video("u", &[1234.0], metrics(0.0)).unwrap();
        assert_eq!(a.response_std_ms, 0.0);
        assert_eq!(aggregate_video("u", &[], metrics(0.0)), Err(AnalysisError::Empty));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 5]), Err(AnalysisError::ZeroVariance));
        assert_eq!(pearson(&[1.0], &[2.0]), Err(AnalysisError::TooFewPoints));
        assert!(matches!(pearson(&x, &[1.0]), Err(AnalysisError::LengthMismatch { .. })));
    }

    #[test]
    fn spearman_handles_ties_and_monotone_maps() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0];
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn delta_cdf_examples() {
        let aggs: Vec<VideoAggregate> = [1000.0, 2500.0, 4000.0]
            .iter()
            .map(|&m| VideoAggregate {
                unit_id: "u".into(),
                user_perceived_plt_ms: m,
                response_count: 1,
                response_std_ms: 0.0,
                metrics: metrics(m),
            })
            .collect();
        let cdf = delta_cdf(&aggs, MetricName::OnLoad);
        assert_eq!(cdf.points(), vec![CdfPoint { value: 0.0, level: 1.0 }]);

        let shifted: Vec<VideoAggregate> = aggs
            .iter()
            .cloned()
            .map(|mut a| {
                a.user_perceived_plt_ms -= 100.0;
                a
            })
            .collect();
        let cdf = delta_cdf(&shifted, MetricName::SpeedIndex);
        assert_eq!(cdf.points(), vec![CdfPoint { value: -100.0, level: 1.0 }]);
        assert_eq!(cdf.at(-100.0), 1.0);
        assert_eq!(cdf.at(-100.5), 0.0);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
