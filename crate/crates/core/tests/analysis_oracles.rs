use proptest::prelude::*;
use qoe_core::analysis::{
    ab_score, agreement, aggregate_video, delta_cdf, pearson, spearman, EmpiricalCdf,
};
use qoe_core::responses::ResolvedChoice;
use qoe_core::PltMetrics;

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

proptest! {
    #[test]
    fn pearson_matches_textbook_formula(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            let o = pearson_oracle(&x, &y);
            prop_assert!((r - o).abs() <= 1e-9, "{r} vs {o}");
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps(x in prop::collection::vec(-100.0f64..100.0, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        if let Ok(r) = spearman(&x, &y) {
            prop_assert!((r - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_mean_matches_naive_sum(values in prop::collection::vec(0.0f64..30_000.0, 1..80)) {
        let m = PltMetrics { onload_ms: 1.0, speed_index_ms: 2.0, first_visual_change_ms: 0.5, last_visual_change_ms: 3.0 };
        let agg = aggregate_video("v", &values, m).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((agg.user_perceived_plt_ms - mean).abs() <= 1e-9 * mean.max(1.0));
        prop_assert_eq!(agg.response_count, values.len());
    }

    #[test]
    fn cdf_counts_match_direct_counting(samples in prop::collection::vec(-1000.0f64..1000.0, 1..50), x in -1200.0f64..1200.0) {
        let cdf = EmpiricalCdf::new(samples.clone());
        let below = samples.iter().filter(|&&s| s <= x).count() as f64 / samples.len() as f64;
        prop_assert_eq!(cdf.at(x), below);
        let within = samples.iter().filter(|&&s| (-100.0..=100.0).contains(&s)).count() as f64 / samples.len() as f64;
        prop_assert_eq!(cdf.fraction_within(-100.0, 100.0), within);
    }
}

#[test]
fn delta_cdf_uses_uplt_minus_metric() {
    let m = |si: f64| PltMetrics { onload_ms: 0.0, speed_index_ms: si, first_visual_change_ms: 0.0, last_visual_change_ms: 0.0 };
    let aggs = vec![
        aggregate_video("a", &[1000.0], m(900.0)).unwrap(),
        aggregate_video("b", &[1000.0], m(1200.0)).unwrap(),
        aggregate_video("c", &[1000.0], m(1050.0)).unwrap(),
    ];
    let cdf = delta_cdf(&aggs, qoe_core::metrics::MetricName::SpeedIndex);
    assert_eq!(cdf.samples(), &[-200.0, -50.0, 100.0]);
    assert!((cdf.fraction_within(-100.0, 100.0) - 2.0 / 3.0).abs() < 1e-12);
}

fn multisets(max: usize) -> Vec<Vec<ResolvedChoice>> {
    let opts = [ResolvedChoice::A, ResolvedChoice::B, ResolvedChoice::NoDifference];
    let mut out = Vec::new();
    for n in 1..=max {
        for a in 0..=n {
            for b in 0..=n - a {
                let nd = n - a - b;
                let mut v = vec![opts[0]; a];
                v.extend(vec![opts[1]; b]);
                v.extend(vec![opts[2]; nd]);
                out.push(v);
            }
        }
    }
    out
}

#[test]
fn agreement_and_score_enumeration() {
    for set in multisets(4) {
        let n = set.len() as f64;
        let a = set.iter().filter(|c| **c == ResolvedChoice::A).count() as f64;
        let b = set.iter().filter(|c| **c == ResolvedChoice::B).count() as f64;
        let nd = n - a - b;
        let agr = agreement(&set).unwrap();
        assert_eq!(agr, a.max(b).max(nd) / n, "{set:?}");
        assert!(agr >= 1.0 / 3.0);
        match ab_score(&set) {
            Ok(s) => assert_eq!(s, b / (a + b)),
            Err(_) => assert_eq!(a + b, 0.0),
        }
    }
}
