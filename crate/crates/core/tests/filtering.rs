use proptest::prelude::*;
use qoe_core::experiments::{Assignment, UnitKind};
use qoe_core::responses::{
    apply_filters, percentile, time_on_site, trim_percentiles, EventKind, EventPayload,
    FilterConfig, Response, SessionRecord, TelemetryEvent, TimelineResponse,
};

/// Sort-and-interpolate percentile, written independently of the library.
fn oracle_percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() as f64 - 1.0) * pct / 100.0;
    let below = h.floor();
    let i = below as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (h - below) * (v[i + 1] - v[i])
}

fn std_pop(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn trimming_matches_sort_interpolate_oracle(values in prop::collection::vec(0.0f64..20_000.0, 1..60)) {
        let cfg = FilterConfig::default();
        let lo = oracle_percentile(&values, 25.0);
        let hi = oracle_percentile(&values, 75.0);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert!((percentile(&sorted, 25.0) - lo).abs() <= 1e-9 * lo.abs().max(1.0));
        prop_assert!((percentile(&sorted, 75.0) - hi).abs() <= 1e-9 * hi.abs().max(1.0));

        let kept = trim_percentiles(&values, &cfg);
        let expected: Vec<f64> = values.iter().copied().filter(|&v| lo <= v && v <= hi).collect();
        prop_assert_eq!(&kept, &expected);
        if kept.is_empty() {
            return Ok(());
        }
        let kmin = kept.iter().copied().fold(f64::INFINITY, f64::min);
        let kmax = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kmax - kmin <= hi - lo + 1e-9);
        prop_assert!(std_pop(&kept) <= hi - lo + 1e-9);
    }
}

fn ev(seq: u64, unit: &str, kind: EventKind, at_ms: u64) -> TelemetryEvent {
    TelemetryEvent {
        session_id: "s".into(),
        seq,
        unit_id: Some(unit.into()),
        kind,
        at_ms,
        payload: EventPayload::default(),
    }
}

fn base_session(units: usize) -> SessionRecord {
    let mut events = Vec::new();
    let mut responses = Vec::new();
    let mut seq = 0;
    for u in 0..units {
        let id = format!("u{u}");
        let start = u as u64 * 60_000;
        for (kind, dt) in [(EventKind::VideoLoaded, 500), (EventKind::Play, 1_000), (EventKind::Seek, 5_000)] {
            events.push(ev(seq, &id, kind, start + dt));
            seq += 1;
        }
        responses.push(Response::Timeline(TimelineResponse {
            unit_id: id,
            slider_ms: 3000,
            helper_ms: 2900,
            submitted_ms: 3000,
            accepted_helper: false,
            video_load_time_s: 0.5,
            page_loaded_at: start,
            submitted_at: start + 30_000,
        }));
    }
    SessionRecord {
        session_id: "s".into(),
        assigned: (0..units)
            .map(|u| Assignment {
                unit_id: format!("u{u}"),
                kind: UnitKind::Timeline,
                label_map: None,
            })
            .collect(),
        events,
        responses,
    }
}

#[test]
fn well_behaved_session_is_kept_deterministically() {
    let s = base_session(6);
    assert!((time_on_site(&s) - 3.0).abs() < 1e-12);
    let cfg = FilterConfig::default();
    let a = apply_filters(std::slice::from_ref(&s), &[], &cfg);
    let b = apply_filters(std::slice::from_ref(&s), &[], &cfg);
    assert_eq!(a, b);
    assert!(a[0].kept);
}

fn random_event(unit: usize, kind: u8, at: u64, seq: u64) -> TelemetryEvent {
    let kinds = [
        EventKind::Play,
        EventKind::Pause,
        EventKind::Seek,
        EventKind::Blur,
        EventKind::Focus,
        EventKind::VideoLoaded,
    ];
    ev(seq, &format!("u{unit}"), kinds[kind as usize % kinds.len()], at)
}

proptest! {
    /// Adding events to a dropped session never makes it kept again.
    #[test]
    fn verdicts_are_monotone_under_added_violations(
        extra in prop::collection::vec((0usize..6, 0u8..6, 0u64..400_000), 0..700)
    ) {
        let cfg = FilterConfig::default();
        // start from a dropped session: one unit never played
        let mut s = base_session(6);
        s.events.retain(|e| !(e.unit_id.as_deref() == Some("u3") && e.kind != EventKind::VideoLoaded));
        let before = apply_filters(std::slice::from_ref(&s), &[], &cfg);
        prop_assert!(!before[0].kept);
        // only add non-engaging violation events (pause, blur) to keep the planted skip intact
        for (i, (unit, kind, at)) in extra.into_iter().enumerate() {
            let mut e = random_event(unit, kind, at, 10_000 + i as u64);
            if matches!(e.kind, EventKind::Play | EventKind::Seek | EventKind::Focus | EventKind::VideoLoaded) {
                e.kind = if kind % 2 == 0 { EventKind::Pause } else { EventKind::Blur };
            }
            s.events.push(e);
        }
        let after = apply_filters(std::slice::from_ref(&s), &[], &cfg);
        prop_assert!(!after[0].kept);
        prop_assert!(before[0].reasons.is_subset(&after[0].reasons));
    }
}
