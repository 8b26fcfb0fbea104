use alloc::string::String;
use alloc::vec::Vec;

use super::{ExperimentError, LabelMap, Side};
use crate::frame::{Channels, Filmstrip, Frame};

/// Width of the separator between the two halves of a composite.
pub const DIVIDER_PX: u32 = 2;
pub const DIVIDER_COLOR: [u8; 3] = [0, 0, 0];

/// Two page loads merged side by side into one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SplicedComposite {
    pub left_source: String,
    pub right_source: String,
    pub delay_right_ms: u64,
    pub filmstrip: Filmstrip,
    pub label_map: LabelMap,
}

impl SplicedComposite {
    pub fn build(
        left: (&str, &Filmstrip),
        right: (&str, &Filmstrip),
        delay_right_ms: u64,
        a_side: Side,
    ) -> Result<Self, ExperimentError> {
        Ok(Self {
            left_source: left.0.into(),
            right_source: right.0.into(),
            delay_right_ms,
            filmstrip: splice_ab(left.1, right.1, delay_right_ms)?,
            label_map: LabelMap { a_side },
        })
    }
}

/// `a` on the left, `b` delayed by `delay_b_ms` on the right.
pub fn splice_ab(a: &Filmstrip, b: &Filmstrip, delay_b_ms: u64) -> Result<Filmstrip, ExperimentError> {
    splice_delayed(a, 0, b, delay_b_ms)
}

/// Each side is shown step-held at `t - delay`, its first frame before that.
/// The composite timeline is the union of both (shifted) timelines, so the
/// shorter side holds its final frame until the longer one ends.
pub(crate) fn splice_delayed(
    left: &Filmstrip,
    left_delay_ms: u64,
    right: &Filmstrip,
    right_delay_ms: u64,
) -> Result<Filmstrip, ExperimentError> {
    if left.viewport() != right.viewport() {
        return Err(ExperimentError::DimensionMismatch);
    }
    let mut times: Vec<u64> = left
        .timestamps()
        .map(|t| t + left_delay_ms)
        .chain(right.timestamps().map(|t| t + right_delay_ms))
        .collect();
    times.sort_unstable();
    times.dedup();

    let vp = left.viewport();
    let out_w = vp.width * 2 + DIVIDER_PX;
    let side_at = |strip: &Filmstrip, delay: u64, t: u64| -> usize {
        t.checked_sub(delay)
            .and_then(|local| strip.index_at(local))
            .unwrap_or(0)
    };

    let mut frames = Vec::with_capacity(times.len());
    for t in times {
        let l = &left.frames()[side_at(left, left_delay_ms, t)];
        let r = &right.frames()[side_at(right, right_delay_ms, t)];
        let mut px = Vec::with_capacity(out_w as usize * vp.height as usize * 3);
        for y in 0..vp.height {
            for x in 0..vp.width {
                px.extend_from_slice(&l.rgb_at(x, y));
            }
            for _ in 0..DIVIDER_PX {
                px.extend_from_slice(&DIVIDER_COLOR);
            }
            for x in 0..vp.width {
                px.extend_from_slice(&r.rgb_at(x, y));
            }
        }
        frames.push(Frame::new(t, out_w, vp.height, Channels::Rgb, px).expect("composite size"));
    }
    Ok(Filmstrip::new(frames, left.navigation_start()).expect("union timeline increases"))
}

/// Left or right half of a composite frame.
pub fn composite_half(frame: &Frame, side: Side) -> Frame {
    let half = (frame.width() - DIVIDER_PX) / 2;
    let x0 = match side {
        Side::Left => 0,
        Side::Right => half + DIVIDER_PX,
    };
    let mut px = Vec::with_capacity(half as usize * frame.height() as usize * 3);
    for y in 0..frame.height() {
        for x in x0..x0 + half {
            px.extend_from_slice(&frame.rgb_at(x, y));
        }
    }
    Frame::new(frame.timestamp_ms(), half, frame.height(), Channels::Rgb, px).expect("half size")
}
