//! Aggregating filtered responses and comparing them with load-time metrics.

mod ab;
mod report;
mod stats;

pub use ab::{ab_score, agreement, agreement_vs_delta, pair_delta, BinAgreement, PairDelta, DEFAULT_DELTA_EDGES};
pub use report::{
    build_report, CampaignReport, CorrelationEntry, CorrelationMethod, FilterSummary, MetricCdf,
    ReportOptions, UnitHistogram,
};
pub use stats::{aggregate_video, delta_cdf, median, pearson, spearman, CdfPoint, EmpiricalCdf, VideoAggregate};

use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    Empty,
    LengthMismatch { left: usize, right: usize },
    TooFewPoints,
    /// Correlation is undefined when a variable is constant.
    ZeroVariance,
    /// Every answer was "no difference".
    UndefinedScore,
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::Empty => write!(f, "no values to aggregate"),
            AnalysisError::LengthMismatch { left, right } => {
                write!(f, "paired samples differ in length ({left} vs {right})")
            }
            AnalysisError::TooFewPoints => write!(f, "correlation needs at least two points"),
            AnalysisError::ZeroVariance => write!(f, "correlation undefined for a constant sample"),
            AnalysisError::UndefinedScore => {
                write!(f, "score undefined: no response picked a side")
            }
        }
    }
}

impl core::error::Error for AnalysisError {}
