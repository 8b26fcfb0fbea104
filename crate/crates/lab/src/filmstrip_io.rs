//! Filmstrip directories: `manifest.json` plus one PNG per frame.
//!
//! ```json
//! {
//!   "navigation_start": 0,
//!   "viewport": {"width": 1280, "height": 720},
//!   "frames": [{"timestamp_ms": 0, "file": "frame-0000.png"}]
//! }
//! ```
//!
//! Frames are written as 8-bit RGB. Reading accepts 8-bit RGB or RGBA.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use qoe_core::{Channels, Filmstrip, Frame, FrameError, Viewport};
use serde::{Deserialize, Serialize};

use crate::json::write_pretty;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum FilmstripIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Decode { path: PathBuf, source: png::DecodingError },
    #[error("{path}: {source}")]
    Encode { path: PathBuf, source: png::EncodingError },
    #[error("{path}: unsupported PNG layout {color:?}/{depth:?}")]
    Layout { path: PathBuf, color: png::ColorType, depth: png::BitDepth },
    #[error("{path}: frame is {got:?}, manifest says {want:?}")]
    Size { path: PathBuf, got: Viewport, want: Viewport },
    #[error("frame file name {0:?} escapes the filmstrip directory")]
    BadFileName(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub timestamp_ms: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub navigation_start: i64,
    pub viewport: Viewport,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, FilmstripIoError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|source| FilmstripIoError::Io { path: path.clone(), source })?;
        serde_json::from_slice(&bytes).map_err(|source| FilmstripIoError::Manifest { path, source })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FilmstripIoError + '_ {
    move |source| FilmstripIoError::Io { path: path.to_path_buf(), source }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame-{index:04}.png")
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width(), frame.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        let rgb: Vec<u8> = match frame.channels() {
            Channels::Rgb => frame.pixels().to_vec(),
            Channels::Rgba => frame.rgb_pixels().flatten().copied().collect(),
        };
        w.write_image_data(&rgb)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8], timestamp_ms: u64, path: &Path) -> Result<Frame, FilmstripIoError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|source| FilmstripIoError::Decode { path: path.into(), source })?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|source| FilmstripIoError::Decode { path: path.into(), source })?;
    buf.truncate(info.buffer_size());
    let channels = match (info.color_type, info.bit_depth) {
        (png::ColorType::Rgb, png::BitDepth::Eight) => Channels::Rgb,
        (png::ColorType::Rgba, png::BitDepth::Eight) => Channels::Rgba,
        (color, depth) => {
            return Err(FilmstripIoError::Layout { path: path.into(), color, depth });
        }
    };
    Ok(Frame::new(timestamp_ms, info.width, info.height, channels, buf)?)
}

fn check_name(name: &str) -> Result<(), FilmstripIoError> {
    let p = Path::new(name);
    if name.is_empty() || p.is_absolute() || p.components().count() != 1 || name == ".." {
        return Err(FilmstripIoError::BadFileName(name.into()));
    }
    Ok(())
}

pub fn read_filmstrip(dir: &Path) -> Result<Filmstrip, FilmstripIoError> {
    let manifest = Manifest::read(dir)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for mf in &manifest.frames {
        check_name(&mf.file)?;
        let path = dir.join(&mf.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let frame = decode_png(&bytes, mf.timestamp_ms, &path)?;
        if frame.viewport() != manifest.viewport {
            return Err(FilmstripIoError::Size { path, got: frame.viewport(), want: manifest.viewport });
        }
        frames.push(frame);
    }
    Ok(Filmstrip::new(frames, manifest.navigation_start)?)
}

/// Writes `strip` into `dir`, creating it if needed. Output bytes depend only
/// on the filmstrip contents.
pub fn write_filmstrip(dir: &Path, strip: &Filmstrip) -> Result<Manifest, FilmstripIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(strip.len());
    for (i, frame) in strip.frames().iter().enumerate() {
        let file = frame_file_name(i);
        let path = dir.join(&file);
        let bytes = encode_png(frame).map_err(|source| FilmstripIoError::Encode { path: path.clone(), source })?;
        fs::write(&path, bytes).map_err(io_err(&path))?;
        entries.push(ManifestFrame { timestamp_ms: frame.timestamp_ms(), file });
    }
    let manifest = Manifest {
        navigation_start: strip.navigation_start(),
        viewport: strip.viewport(),
        frames: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    write_pretty(BufWriter::new(file), &manifest).map_err(io_err(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> Filmstrip {
        let mut px = Vec::new();
        for i in 0..12u8 {
            px.extend_from_slice(&[i, 255 - i, i / 2, 200]);
        }
        Filmstrip::new(
            vec![
                Frame::solid(0, 4, 3, [255, 255, 255]),
                Frame::new(100, 4, 3, Channels::Rgba, px).unwrap(),
            ],
            7,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_drops_alpha_only() {
        let dir = tempfile::tempdir().unwrap();
        let s = strip();
        write_filmstrip(dir.path(), &s).unwrap();
        let back = read_filmstrip(dir.path()).unwrap();
        assert_eq!(back.navigation_start(), 7);
        assert_eq!(back.timestamps().collect::<Vec<_>>(), vec![0, 100]);
        for (a, b) in s.frames().iter().zip(back.frames()) {
            assert!(a.same_raster(b));
        }
    }

    #[test]
    fn writes_are_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_filmstrip(d1.path(), &strip()).unwrap();
        write_filmstrip(d2.path(), &strip()).unwrap();
        for name in ["manifest.json", "frame-0000.png", "frame-0001.png"] {
            assert_eq!(
                fs::read(d1.path().join(name)).unwrap(),
                fs::read(d2.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_escaping_file_names_and_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_filmstrip(dir.path(), &strip()).unwrap();
        let mut m = Manifest::read(dir.path()).unwrap();
        m.frames[0].file = "../x.png".into();
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_filmstrip(dir.path()), Err(FilmstripIoError::BadFileName(_))));

        m.frames[0].file = frame_file_name(0);
        m.viewport = Viewport::new(5, 3);
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_filmstrip(dir.path()), Err(FilmstripIoError::Size { .. })));
    }
}
