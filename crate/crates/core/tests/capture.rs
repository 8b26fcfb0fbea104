use qoe_core::capture::{
    run_capture, select_median, synthetic_load, CaptureError, CaptureJob, DrawOp, LoadPurpose,
    LoadScript, ProtocolMode, SyntheticDriver, UrlStatus, CACHE_CONTROL_HEADER,
};
use qoe_core::metrics::first_visual_change;
use qoe_core::Viewport;
use std::collections::BTreeSet;

fn job(urls: &[&str], loads: u32) -> CaptureJob {
    let mut job = CaptureJob::new(urls.iter().map(|u| u.to_string()).collect(), Viewport::new(16, 12));
    job.loads_per_site = loads;
    job.post_onload_record_s = 1.0;
    job
}

fn script(url: &str) -> LoadScript {
    LoadScript {
        url: url.into(),
        viewport: Viewport::new(16, 12),
        frame_interval_ms: 100,
        post_onload_ms: 0,
        background: [255, 255, 255],
        ops: vec![DrawOp {
            at_ms: 500,
            x: 0,
            y: 0,
            width: 8,
            height: 12,
            color: [0, 0, 0],
        }],
        onload_ms: 1000.0,
        entries: vec![],
        navigation_start: 0,
    }
}

#[test]
fn five_loads_plus_primer() {
    let mut driver = SyntheticDriver::new();
    let out = run_capture(&job(&["https://a.test/"], 5), &mut driver).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].recordings.len(), 5);
    assert_eq!(out[0].status, UrlStatus::Complete);
    assert_eq!(driver.invocations().len(), 6);
    assert_eq!(driver.invocations()[0].purpose, LoadPurpose::Primer);
    let runs: Vec<u32> = out[0].recordings.iter().map(|r| r.run_index).collect();
    assert_eq!(runs, vec![1, 2, 3, 4, 5]);
    for inv in driver.invocations() {
        assert!(inv.fresh_state && inv.disable_local_caches);
        assert_eq!(
            inv.headers,
            vec![(CACHE_CONTROL_HEADER.0.to_string(), CACHE_CONTROL_HEADER.1.to_string())]
        );
    }
}

#[test]
fn single_load_job() {
    let mut driver = SyntheticDriver::new();
    let out = run_capture(&job(&["https://a.test/"], 1), &mut driver).unwrap();
    assert_eq!(out[0].recordings.len(), 1);
    assert_eq!(driver.invocations().len(), 2);
}

#[test]
fn scripted_onloads_are_reproduced() {
    let onloads = vec![1300.0, 900.0, 2100.0, 1700.0, 1100.0];
    let mut driver = SyntheticDriver::new().with_site(script("https://a.test/"), onloads.clone());
    let out = run_capture(&job(&["https://a.test/"], 5), &mut driver).unwrap();
    let got: Vec<f64> = out[0].recordings.iter().map(|r| r.har.onload_ms).collect();
    assert_eq!(got, onloads);
    assert_eq!(select_median(&out[0].recordings).unwrap().har.onload_ms, 1300.0);
    for r in &out[0].recordings {
        // covers onload plus the post-onload tail
        assert!(r.filmstrip.last_timestamp_ms() as f64 >= r.har.onload_ms + 1000.0);
        assert_eq!(first_visual_change(&r.filmstrip), 500);
        assert_eq!(r.capture_config, job(&["https://a.test/"], 5).config());
        let gaps: BTreeSet<u64> = r
            .filmstrip
            .frames()
            .windows(2)
            .map(|w| w[1].timestamp_ms() - w[0].timestamp_ms())
            .collect();
        assert_eq!(gaps, BTreeSet::from([100]));
    }
}

#[test]
fn state_ids_are_fresh_across_urls() {
    let mut driver = SyntheticDriver::new();
    let out = run_capture(&job(&["https://a.test/", "https://b.test/"], 3), &mut driver).unwrap();
    let ids: BTreeSet<&str> = out
        .iter()
        .flat_map(|u| u.recordings.iter().map(|r| r.browser_state_id.as_str()))
        .collect();
    assert_eq!(ids.len(), 6);
}

#[test]
fn failed_load_is_retried_once() {
    // invocation 0 is the primer, 2 is run 2's first attempt
    let mut driver = SyntheticDriver::new().fail_invocation(2);
    let out = run_capture(&job(&["https://a.test/"], 3), &mut driver).unwrap();
    assert_eq!(out[0].recordings.len(), 3);
    assert_eq!(driver.invocations().len(), 5);
}

#[test]
fn twice_failed_load_marks_url_incomplete() {
    let mut driver = SyntheticDriver::new().fail_invocation(2).fail_invocation(3);
    let out = run_capture(&job(&["https://a.test/", "https://b.test/"], 3), &mut driver).unwrap();
    assert!(matches!(out[0].status, UrlStatus::Incomplete { run_index: 2, .. }));
    assert_eq!(out[0].recordings.len(), 1);
    assert_eq!(out[1].status, UrlStatus::Complete);
    assert_eq!(out[1].recordings.len(), 3);
}

#[test]
fn primer_failure_is_ignored() {
    let mut driver = SyntheticDriver::new().fail_invocation(0);
    let out = run_capture(&job(&["https://a.test/"], 2), &mut driver).unwrap();
    assert_eq!(out[0].recordings.len(), 2);
    assert_eq!(driver.invocations().len(), 3);
}

struct NoPinning(SyntheticDriver);

impl qoe_core::capture::BrowserDriver for NoPinning {
    fn capabilities(&self) -> qoe_core::capture::Capabilities {
        qoe_core::capture::Capabilities {
            protocol_pinning: false,
            ..self.0.capabilities()
        }
    }

    fn load(
        &mut self,
        request: &qoe_core::capture::LoadRequest<'_>,
    ) -> Result<qoe_core::capture::RawLoad, qoe_core::capture::DriverError> {
        self.0.load(request)
    }
}

#[test]
fn unsupported_capability_rejects_before_loading() {
    let mut j = job(&["https://a.test/"], 5);
    j.protocol_mode = ProtocolMode::H1Only;
    let mut driver = NoPinning(SyntheticDriver::new());
    assert!(matches!(run_capture(&j, &mut driver), Err(CaptureError::Unsupported(_))));
    assert!(driver.0.invocations().is_empty());
}

#[test]
fn synthetic_runs_are_identical() {
    let run = || {
        let mut driver = SyntheticDriver::new();
        run_capture(&job(&["https://a.test/", "https://z.test/x"], 2), &mut driver).unwrap()
    };
    assert_eq!(run(), run());
    assert_eq!(synthetic_load(&script("u")).unwrap(), synthetic_load(&script("u")).unwrap());
}
