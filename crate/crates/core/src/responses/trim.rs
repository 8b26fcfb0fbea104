use alloc::vec::Vec;

use super::FilterConfig;

/// Percentile of a sorted, non-empty sample by linear interpolation between
/// closest ranks (rank = p/100 × (n − 1)).
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = libm::floor(rank) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Responses within `[P_lo, P_hi]`, inclusive, in their original order.
pub fn trim_percentiles(responses: &[f64], config: &FilterConfig) -> Vec<f64> {
    if responses.is_empty() {
        return Vec::new();
    }
    let mut sorted = responses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile(&sorted, config.trim_lo_pct);
    let hi = percentile(&sorted, config.trim_hi_pct);
    responses
        .iter()
        .copied()
        .filter(|&r| lo <= r && r <= hi)
        .collect()
}
