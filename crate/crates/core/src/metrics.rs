//! Frame differencing, visual completeness and the four page-load-time metrics.
//!
//! A pixel "differs" between two rasters when any RGB channel differs by more
//! than a per-channel tolerance (default 0, exact equality). Alpha is ignored.
//! Filmstrips are treated as already cropped to the above-the-fold viewport.
//!
//! SpeedIndex integrates the completeness curve with step interpolation:
//! completeness is 0 before the first frame and each frame's value holds until
//! the next one. The interval sum is carried out in integers (pixel counts ×
//! milliseconds) and divided once, so step curves produce exact results.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::frame::{Filmstrip, Frame, Viewport};
use crate::har::HarLog;

/// Default similarity threshold for the rewind helper (1% of pixels).
pub const DEFAULT_REWIND_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    DimensionMismatch { left: Viewport, right: Viewport },
    BeforeFirstFrame { chosen_ms: u64, first_ms: u64 },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::DimensionMismatch { left, right } => write!(
                f,
                "malformed filmstrip: frame sizes {}x{} and {}x{} differ",
                left.width, left.height, right.width, right.height
            ),
            MetricsError::BeforeFirstFrame { chosen_ms, first_ms } => write!(
                f,
                "chosen time {chosen_ms} ms precedes the first frame at {first_ms} ms"
            ),
        }
    }
}

impl core::error::Error for MetricsError {}

/// Pixel comparison predicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelDiff {
    /// Largest per-channel absolute difference still considered equal.
    pub tolerance: u8,
}

impl PixelDiff {
    pub const EXACT: PixelDiff = PixelDiff { tolerance: 0 };

    pub const fn with_tolerance(tolerance: u8) -> Self {
        Self { tolerance }
    }

    /// Number of pixel positions whose color differs.
    pub fn differing_pixels(&self, a: &Frame, b: &Frame) -> Result<u64, MetricsError> {
        if a.viewport() != b.viewport() {
            return Err(MetricsError::DimensionMismatch {
                left: a.viewport(),
                right: b.viewport(),
            });
        }
        let tol = self.tolerance;
        let count = a
            .rgb_pixels()
            .zip(b.rgb_pixels())
            .filter(|(p, q)| {
                if tol == 0 {
                    p != q
                } else {
                    p.iter().zip(q.iter()).any(|(x, y)| x.abs_diff(*y) > tol)
                }
            })
            .count();
        Ok(count as u64)
    }

    pub fn difference(&self, a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
        let diff = self.differing_pixels(a, b)?;
        Ok(diff as f64 / a.pixel_count() as f64)
    }

    /// Differing-pixel count against a filmstrip member; dimensions are guaranteed equal.
    fn strip_diff(&self, a: &Frame, b: &Frame) -> u64 {
        self.differing_pixels(a, b)
            .expect("frames of one filmstrip share a viewport")
    }

    pub fn completeness_curve(&self, strip: &Filmstrip) -> CompletenessCurve {
        let last = strip.last();
        let total = last.pixel_count();
        let points = strip
            .frames()
            .iter()
            .map(|f| CurvePoint {
                timestamp_ms: f.timestamp_ms(),
                complete_pixels: total - self.strip_diff(f, last),
            })
            .collect();
        CompletenessCurve {
            total_pixels: total,
            points,
        }
    }

    pub fn speed_index(&self, strip: &Filmstrip) -> f64 {
        self.completeness_curve(strip).speed_index()
    }

    pub fn first_visual_change(&self, strip: &Filmstrip) -> u64 {
        let first = strip.first();
        strip.frames()[1..]
            .iter()
            .find(|f| self.strip_diff(f, first) > 0)
            .map_or(first.timestamp_ms(), Frame::timestamp_ms)
    }

    pub fn last_visual_change(&self, strip: &Filmstrip) -> u64 {
        strip
            .frames()
            .windows(2)
            .rev()
            .find(|w| self.strip_diff(&w[0], &w[1]) > 0)
            .map_or(strip.first_timestamp_ms(), |w| w[1].timestamp_ms())
    }

    /// Earliest frame of the unbroken backward run whose difference from the
    /// frame shown at `chosen_ms` stays within `threshold`.
    pub fn rewind_frame(
        &self,
        strip: &Filmstrip,
        chosen_ms: u64,
        threshold: f64,
    ) -> Result<u64, MetricsError> {
        let chosen = strip
            .index_at(chosen_ms)
            .ok_or(MetricsError::BeforeFirstFrame {
                chosen_ms,
                first_ms: strip.first_timestamp_ms(),
            })?;
        let frames = strip.frames();
        let target = &frames[chosen];
        let total = target.pixel_count() as f64;
        let mut earliest = chosen;
        while earliest > 0 {
            let diff = self.strip_diff(&frames[earliest - 1], target);
            if diff as f64 / total > threshold {
                break;
            }
            earliest -= 1;
        }
        Ok(frames[earliest].timestamp_ms())
    }

    /// Rewind suggestion for every frame, as `(frame timestamp, rewind timestamp)`.
    ///
    /// Consecutive pixel-identical frames are collapsed first: they have the
    /// same difference to any other frame, so the backward scans only need to
    /// visit one representative per run.
    pub fn rewind_table(&self, strip: &Filmstrip, threshold: f64) -> Vec<(u64, u64)> {
        let frames = strip.frames();
        // (first index, last index) of each run of identical rasters
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for (i, f) in frames.iter().enumerate() {
            match runs.last_mut() {
                Some(run) if frames[run.1].same_raster(f) => run.1 = i,
                _ => runs.push((i, i)),
            }
        }
        let total = strip.viewport().pixel_count() as f64;
        let mut table = Vec::with_capacity(frames.len());
        for (r, &(start, end)) in runs.iter().enumerate() {
            let target = &frames[start];
            let mut earliest_run = r;
            while earliest_run > 0 {
                let candidate = &frames[runs[earliest_run - 1].0];
                if self.strip_diff(candidate, target) as f64 / total > threshold {
                    break;
                }
                earliest_run -= 1;
            }
            let rewind_ts = frames[runs[earliest_run].0].timestamp_ms();
            for f in &frames[start..=end] {
                table.push((f.timestamp_ms(), rewind_ts));
            }
        }
        table
    }

    pub fn plt_metrics(&self, strip: &Filmstrip, har: &HarLog) -> PltMetrics {
        PltMetrics {
            onload_ms: har.onload_ms,
            speed_index_ms: self.speed_index(strip),
            first_visual_change_ms: self.first_visual_change(strip) as f64,
            last_visual_change_ms: self.last_visual_change(strip) as f64,
        }
    }
}

/// Fraction of pixel positions that differ between two equally sized frames.
pub fn frame_difference(a: &Frame, b: &Frame) -> Result<f64, MetricsError> {
    PixelDiff::EXACT.difference(a, b)
}

pub fn completeness_curve(strip: &Filmstrip) -> CompletenessCurve {
    PixelDiff::EXACT.completeness_curve(strip)
}

pub fn speed_index(strip: &Filmstrip) -> f64 {
    PixelDiff::EXACT.speed_index(strip)
}

pub fn first_visual_change(strip: &Filmstrip) -> u64 {
    PixelDiff::EXACT.first_visual_change(strip)
}

pub fn last_visual_change(strip: &Filmstrip) -> u64 {
    PixelDiff::EXACT.last_visual_change(strip)
}

pub fn rewind_frame(strip: &Filmstrip, chosen_ms: u64, threshold: f64) -> Result<u64, MetricsError> {
    PixelDiff::EXACT.rewind_frame(strip, chosen_ms, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestamp_ms: u64,
    /// Pixels matching the final frame.
    pub complete_pixels: u64,
}

/// Visual completeness over time, one point per filmstrip frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessCurve {
    pub total_pixels: u64,
    pub points: Vec<CurvePoint>,
}

impl CompletenessCurve {
    pub fn fraction_at(&self, index: usize) -> f64 {
        self.points[index].complete_pixels as f64 / self.total_pixels as f64
    }

    pub fn fractions(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (0..self.points.len()).map(|i| (self.points[i].timestamp_ms, self.fraction_at(i)))
    }

    /// Area above the step-interpolated curve from 0 to the last timestamp, in ms.
    pub fn speed_index(&self) -> f64 {
        let total = self.total_pixels as u128;
        let Some(first) = self.points.first() else {
            return 0.0;
        };
        let mut area = first.timestamp_ms as u128 * total;
        for w in self.points.windows(2) {
            let span = (w[1].timestamp_ms - w[0].timestamp_ms) as u128;
            area += span * (total - w[0].complete_pixels as u128);
        }
        area as f64 / total as f64
    }
}

/// The four automatically computable load-time metrics, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PltMetrics {
    pub onload_ms: f64,
    pub speed_index_ms: f64,
    pub first_visual_change_ms: f64,
    pub last_visual_change_ms: f64,
}

/// Selects one of the [`PltMetrics`] fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    #[serde(rename = "onload")]
    OnLoad,
    #[serde(rename = "speedindex")]
    SpeedIndex,
    #[serde(rename = "fvc")]
    FirstVisualChange,
    #[serde(rename = "lvc")]
    LastVisualChange,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        MetricName::OnLoad,
        MetricName::SpeedIndex,
        MetricName::FirstVisualChange,
        MetricName::LastVisualChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::OnLoad => "onload",
            MetricName::SpeedIndex => "speedindex",
            MetricName::FirstVisualChange => "fvc",
            MetricName::LastVisualChange => "lvc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim();
        Self::ALL.into_iter().find(|m| {
            m.as_str().eq_ignore_ascii_case(lower)
                || match m {
                    MetricName::OnLoad => lower.eq_ignore_ascii_case("onload_ms"),
                    MetricName::SpeedIndex => {
                        lower.eq_ignore_ascii_case("speed_index")
                            || lower.eq_ignore_ascii_case("si")
                    }
                    MetricName::FirstVisualChange => {
                        lower.eq_ignore_ascii_case("first_visual_change")
                    }
                    MetricName::LastVisualChange => {
                        lower.eq_ignore_ascii_case("last_visual_change")
                    }
                }
        })
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl PltMetrics {
    pub fn compute(strip: &Filmstrip, har: &HarLog) -> Self {
        PixelDiff::EXACT.plt_metrics(strip, har)
    }

    pub fn get(&self, metric: MetricName) -> f64 {
        match metric {
            MetricName::OnLoad => self.onload_ms,
            MetricName::SpeedIndex => self.speed_index_ms,
            MetricName::FirstVisualChange => self.first_visual_change_ms,
            MetricName::LastVisualChange => self.last_visual_change_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Channels;
    use alloc::vec;

    const BLACK: [u8; 3] = [0, 0, 0];
    const WHITE: [u8; 3] = [255, 255, 255];

    fn solid(t: u64, rgb: [u8; 3]) -> Frame {
        Frame::solid(t, 4, 4, rgb)
    }

    /// 4x4 frame whose first `white` pixels are white and the rest black.
    fn partial(t: u64, white: usize) -> Frame {
        let mut px = vec![0u8; 16 * 3];
        for p in px.chunks_exact_mut(3).take(white) {
            p.copy_from_slice(&WHITE);
        }
        Frame::new(t, 4, 4, Channels::Rgb, px).unwrap()
    }

    fn strip(frames: Vec<Frame>) -> Filmstrip {
        Filmstrip::new(frames, 0).unwrap()
    }

    #[test]
    fn difference_basics() {
        let black = solid(0, BLACK);
        let white = solid(0, WHITE);
        assert_eq!(frame_difference(&black, &black).unwrap(), 0.0);
        assert_eq!(frame_difference(&black, &white).unwrap(), 1.0);
        assert_eq!(frame_difference(&black, &partial(0, 8)).unwrap(), 0.5);
        let other = Frame::solid(0, 3, 4, BLACK);
        assert!(matches!(
            frame_difference(&black, &other),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tolerance_absorbs_small_channel_noise() {
        let a = solid(0, [100, 100, 100]);
        let b = solid(0, [103, 100, 98]);
        assert_eq!(frame_difference(&a, &b).unwrap(), 1.0);
        assert_eq!(PixelDiff::with_tolerance(3).difference(&a, &b).unwrap(), 0.0);
        assert_eq!(PixelDiff::with_tolerance(2).difference(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn completeness_examples() {
        let single = strip(vec![solid(40, BLACK)]);
        let c = completeness_curve(&single);
        assert_eq!(c.fractions().collect::<Vec<_>>(), vec![(40, 1.0)]);

        let two = strip(vec![solid(0, BLACK), solid(100, WHITE)]);
        let c = completeness_curve(&two);
        assert_eq!(c.fractions().collect::<Vec<_>>(), vec![(0, 0.0), (100, 1.0)]);

        // 30% of the final frame's pixels: use a 10x1 raster, 3 of 10 pixels.
        let mut px = vec![0u8; 30];
        for p in px.chunks_exact_mut(3).take(3) {
            p.copy_from_slice(&WHITE);
        }
        let partial30 = Frame::new(0, 10, 1, Channels::Rgb, px).unwrap();
        let s = strip(vec![partial30, Frame::solid(500, 10, 1, WHITE)]);
        assert_eq!(completeness_curve(&s).fraction_at(0), 0.3);
    }

    #[test]
    fn speed_index_examples() {
        let s = strip(vec![solid(0, BLACK), solid(2000, WHITE)]);
        assert_eq!(speed_index(&s), 2000.0);

        let s = strip(vec![solid(0, BLACK), partial(1000, 8), solid(3000, WHITE)]);
        assert_eq!(speed_index(&s), 2000.0);

        let s = strip(vec![solid(0, WHITE)]);
        assert_eq!(speed_index(&s), 0.0);

        // incomplete before the first frame
        let s = strip(vec![solid(500, WHITE)]);
        assert_eq!(speed_index(&s), 500.0);
    }

    #[test]
    fn visual_change_examples() {
        let static_strip = strip(vec![solid(10, BLACK), solid(20, BLACK), solid(30, BLACK)]);
        assert_eq!(first_visual_change(&static_strip), 10);
        assert_eq!(last_visual_change(&static_strip), 10);

        let s = strip(vec![
            solid(0, BLACK),
            solid(400, BLACK),
            partial(800, 2),
            partial(4000, 5),
            partial(4100, 9),
            partial(4200, 9),
        ]);
        assert_eq!(first_visual_change(&s), 800);
        assert_eq!(last_visual_change(&s), 4100);

        let s = strip(vec![partial(0, 1), partial(100, 2), partial(200, 3)]);
        assert_eq!(first_visual_change(&s), 100);
        assert_eq!(last_visual_change(&s), 200);

        // a return to the initial raster still counts as a change
        let s = strip(vec![solid(0, BLACK), solid(100, WHITE), solid(200, BLACK)]);
        assert_eq!(last_visual_change(&s), 200);
    }

    #[test]
    fn rewind_examples() {
        let mut frames = Vec::new();
        for i in 0..5u64 {
            frames.push(partial(i * 100, i as usize + 1));
        }
        for i in 5..=10u64 {
            frames.push(partial(i * 100, 10));
        }
        let s = strip(frames);
        assert_eq!(rewind_frame(&s, 1000, 0.01).unwrap(), 500);
        // chosen_ms maps to the frame at or before it
        assert_eq!(rewind_frame(&s, 1099, 0.01).unwrap(), 500);
        assert_eq!(rewind_frame(&s, 250, 0.01).unwrap(), 200);

        let before = Filmstrip::new(vec![partial(100, 0), partial(200, 1)], 0).unwrap();
        assert!(matches!(
            rewind_frame(&before, 50, 0.01),
            Err(MetricsError::BeforeFirstFrame { .. })
        ));
    }

    #[test]
    fn rewind_stops_at_five_percent_predecessor() {
        // 20x10 raster: 10 of 200 pixels = 5%
        let base = Frame::solid(0, 20, 10, BLACK);
        let mut px = base.pixels().to_vec();
        for p in px.chunks_exact_mut(3).take(10) {
            p.copy_from_slice(&WHITE);
        }
        let changed = Frame::new(100, 20, 10, Channels::Rgb, px).unwrap();
        let s = strip(vec![base, changed]);
        assert_eq!(rewind_frame(&s, 100, 0.01).unwrap(), 100);
        assert_eq!(rewind_frame(&s, 100, 0.05).unwrap(), 0);
    }

    #[test]
    fn rewind_table_matches_pointwise_rewind() {
        let s = strip(vec![
            partial(0, 0),
            partial(100, 0),
            partial(200, 3),
            partial(300, 3),
            partial(400, 3),
            partial(500, 4),
            partial(600, 4),
        ]);
        for threshold in [0.0, 0.01, 0.07, 0.2, 1.0] {
            let table = PixelDiff::EXACT.rewind_table(&s, threshold);
            assert_eq!(table.len(), s.len());
            for (ts, rewind) in table {
                assert_eq!(rewind, rewind_frame(&s, ts, threshold).unwrap());
            }
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in MetricName::ALL {
            assert_eq!(MetricName::parse(m.as_str()), Some(m));
        }
        assert_eq!(MetricName::parse("SpeedIndex"), Some(MetricName::SpeedIndex));
        assert_eq!(MetricName::parse("ttfb"), None);
    }
}
