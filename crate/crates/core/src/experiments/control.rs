use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::splice::splice_delayed;
use super::{ExperimentError, GroundTruth, LabelMap, Side, SplicedComposite, TestUnit, UnitKind, UnitMedia};
use crate::capture::PageLoadRecording;
use crate::frame::Frame;
use crate::metrics::PltMetrics;

pub const DEFAULT_CONTROL_DELAY_MS: u64 = 3000;

/// Near-blank backgrounds offered as a fake rewind suggestion.
const BLANK_PALETTE: [[u8; 3]; 3] = [[255, 255, 255], [250, 250, 250], [242, 242, 242]];

/// A/B control: the recording spliced with itself, one side delayed.
///
/// The delayed side is drawn uniformly. Condition A is labelled on the
/// non-delayed side, so a correct answer also resolves to A.
pub fn make_control_ab<R: Rng + ?Sized>(
    unit_id: &str,
    recording: &PageLoadRecording,
    media_path: &str,
    delay_ms: u64,
    rng: &mut R,
) -> Result<(TestUnit, SplicedComposite), ExperimentError> {
    let delayed = if rng.gen_bool(0.5) { Side::Right } else { Side::Left };
    let strip = &recording.filmstrip;
    let (left_delay, right_delay) = match delayed {
        Side::Left => (delay_ms, 0),
        Side::Right => (0, delay_ms),
    };
    let filmstrip = splice_delayed(strip, left_delay, strip, right_delay)?;
    let source: String = recording.url.clone();
    let composite = SplicedComposite {
        left_source: source.clone(),
        right_source: source,
        delay_right_ms: right_delay,
        filmstrip,
        label_map: LabelMap {
            a_side: delayed.other(),
        },
    };
    let unit = TestUnit {
        id: unit_id.into(),
        kind: UnitKind::ControlAb,
        media: UnitMedia::ControlComposite {
            path: media_path.into(),
            delayed,
        },
        ground_truth: Some(GroundTruth::NonDelayedSide(delayed.other())),
        metrics: Vec::from([PltMetrics::compute(strip, &recording.har)]),
        banned: false,
        flags: Default::default(),
    };
    Ok((unit, composite))
}

/// Uniform near-blank frame shown instead of the real rewind suggestion.
///
/// Picks the palette color least present in `chosen`; with three candidates at
/// most a third of the pixels can match, so the suggestion differs from the
/// chosen frame on more than half of its pixels.
pub fn make_control_timeline(chosen: &Frame) -> Frame {
    let mut counts = [0u64; BLANK_PALETTE.len()];
    for px in chosen.rgb_pixels() {
        for (i, c) in BLANK_PALETTE.iter().enumerate() {
            if px == c {
                counts[i] += 1;
            }
        }
    }
    let best = (0..BLANK_PALETTE.len())
        .min_by_key(|&i| counts[i])
        .expect("palette is non-empty");
    Frame::solid(
        chosen.timestamp_ms(),
        chosen.width(),
        chosen.height(),
        BLANK_PALETTE[best],
    )
}
