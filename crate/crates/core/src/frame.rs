//! Rasters and filmstrips.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Pixel layout of a [`Frame`] buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channels {
    Rgb,
    Rgba,
}

impl Channels {
    pub const fn count(self) -> usize {
        match self {
            Channels::Rgb => 3,
            Channels::Rgba => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub const fn pixel_count(self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    EmptyDimensions,
    BufferLength { expected: usize, actual: usize },
    EmptyFilmstrip,
    NonIncreasingTimestamps { index: usize },
    ViewportMismatch { index: usize },
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::EmptyDimensions => write!(f, "frame width and height must be positive"),
            FrameError::BufferLength { expected, actual } => {
                write!(f, "pixel buffer has {actual} bytes, expected {expected}")
            }
            FrameError::EmptyFilmstrip => write!(f, "filmstrip has no frames"),
            FrameError::NonIncreasingTimestamps { index } => {
                write!(f, "frame {index} does not have a strictly increasing timestamp")
            }
            FrameError::ViewportMismatch { index } => {
                write!(f, "frame {index} dimensions differ from the filmstrip viewport")
            }
        }
    }
}

impl core::error::Error for FrameError {}

/// One timestamped screenshot of the above-the-fold region.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    timestamp_ms: u64,
    width: u32,
    height: u32,
    channels: Channels,
    pixels: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("timestamp_ms", &self.timestamp_ms)
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(
        timestamp_ms: u64,
        width: u32,
        height: u32,
        channels: Channels,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions);
        }
        let expected = width as usize * height as usize * channels.count();
        if pixels.len() != expected {
            return Err(FrameError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            timestamp_ms,
            width,
            height,
            channels,
            pixels,
        })
    }

    /// A frame filled with one RGB color.
    pub fn solid(timestamp_ms: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(timestamp_ms, width.max(1), height.max(1), Channels::Rgb, pixels)
            .expect("solid frame dimensions are consistent")
    }

    pub fn timestamp_ms(&self) -> u64 {
        self.timestamp_ms
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn viewport(&self) -> Viewport {
        Viewport::new(self.width, self.height)
    }

    pub fn channels(&self) -> Channels {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel_count(&self) -> u64 {
        self.viewport().pixel_count()
    }

    /// RGB triple at `(x, y)`; alpha is dropped.
    pub fn rgb_at(&self, x: u32, y: u32) -> [u8; 3] {
        let c = self.channels.count();
        let i = (y as usize * self.width as usize + x as usize) * c;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Iterator over the RGB part of every pixel, row-major.
    pub fn rgb_pixels(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.pixels
            .chunks_exact(self.channels.count())
            .map(|px| &px[..3])
    }

    /// Same raster with a different timestamp.
    pub fn with_timestamp(mut self, timestamp_ms: u64) -> Self {
        self.timestamp_ms = timestamp_ms;
        self
    }

    /// Identical RGB content (alpha ignored), timestamps not compared.
    pub fn same_raster(&self, other: &Frame) -> bool {
        if self.viewport() != other.viewport() {
            return false;
        }
        if self.channels == other.channels {
            return self.pixels == other.pixels;
        }
        self.rgb_pixels().eq(other.rgb_pixels())
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Ordered sequence of screenshots of one page load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filmstrip {
    frames: Vec<Frame>,
    navigation_start: i64,
    viewport: Viewport,
}

impl Filmstrip {
    pub fn new(frames: Vec<Frame>, navigation_start: i64) -> Result<Self, FrameError> {
        let first = frames.first().ok_or(FrameError::EmptyFilmstrip)?;
        let viewport = first.viewport();
        for (i, pair) in frames.windows(2).enumerate() {
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(FrameError::NonIncreasingTimestamps { index: i + 1 });
            }
        }
        if let Some(index) = frames.iter().position(|f| f.viewport() != viewport) {
            return Err(FrameError::ViewportMismatch { index });
        }
        Ok(Self {
            frames,
            navigation_start,
            viewport,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn navigation_start(&self) -> i64 {
        self.navigation_start
    }

    pub fn viewport(&self) -> Viewport {
        self.viewport
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first(&self) -> &Frame {
        &self.frames[0]
    }

    pub fn last(&self) -> &Frame {
        &self.frames[self.frames.len() - 1]
    }

    pub fn first_timestamp_ms(&self) -> u64 {
        self.first().timestamp_ms
    }

    pub fn last_timestamp_ms(&self) -> u64 {
        self.last().timestamp_ms
    }

    /// Index of the last frame shown at `t_ms` (step-held), `None` before the first frame.
    pub fn index_at(&self, t_ms: u64) -> Option<usize> {
        match self.frames.partition_point(|f| f.timestamp_ms <= t_ms) {
            0 => None,
            n => Some(n - 1),
        }
    }

    pub fn timestamps(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.iter().map(|f| f.timestamp_ms)
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(
            Frame::new(0, 2, 2, Channels::Rgb, vec![0; 11]),
            Err(FrameError::BufferLength {
                expected: 12,
                actual: 11
            })
        );
        assert_eq!(
            Frame::new(0, 0, 2, Channels::Rgb, vec![]),
            Err(FrameError::EmptyDimensions)
        );
        assert!(Frame::new(0, 2, 2, Channels::Rgba, vec![0; 16]).is_ok());
    }

    #[test]
    fn filmstrip_invariants() {
        assert_eq!(Filmstrip::new(vec![], 0), Err(FrameError::EmptyFilmstrip));
        let a = Frame::solid(100, 2, 2, [0, 0, 0]);
        let b = Frame::solid(100, 2, 2, [0, 0, 0]);
        assert_eq!(
            Filmstrip::new(vec![a.clone(), b], 0),
            Err(FrameError::NonIncreasingTimestamps { index: 1 })
        );
        let c = Frame::solid(200, 3, 2, [0, 0, 0]);
        assert_eq!(
            Filmstrip::new(vec![a, c], 0),
            Err(FrameError::ViewportMismatch { index: 1 })
        );
    }

    #[test]
    fn index_at_is_step_held() {
        let strip = Filmstrip::new(
            vec![
                Frame::solid(100, 1, 1, [0, 0, 0]),
                Frame::solid(200, 1, 1, [1, 1, 1]),
            ],
            0,
        )
        .unwrap();
        assert_eq!(strip.index_at(99), None);
        assert_eq!(strip.index_at(100), Some(0));
        assert_eq!(strip.index_at(199), Some(0));
        assert_eq!(strip.index_at(5000), Some(1));
    }

    #[test]
    fn alpha_is_ignored_for_raster_equality() {
        let rgb = Frame::new(0, 1, 1, Channels::Rgb, vec![1, 2, 3]).unwrap();
        let rgba = Frame::new(0, 1, 1, Channels::Rgba, vec![1, 2, 3, 0]).unwrap();
        assert!(rgb.same_raster(&rgba));
    }
}
