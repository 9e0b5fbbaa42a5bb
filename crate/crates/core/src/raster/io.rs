//! File interchange: lossless PFM for depth, PNG for RGB input and 16-bit
//! depth export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use thiserror::Error;

use super::{DepthMap, RasterImage};

/// Largest PFM payload we agree to allocate (in samples).
const MAX_PFM_SAMPLES: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum PfmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PFM header: {0}")]
    MalformedHeader(String),
    #[error("PFM dimensions {width}x{height} overflow the supported size")]
    DimensionOverflow { width: u64, height: u64 },
    #[error("truncated PFM payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("PFM holds {0} channels, a depth map needs 1")]
    UnsupportedChannels(usize),
    #[error("PFM payload contains a non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
    #[error("expected a {expected}-channel image, got {got}")]
    Channels { expected: usize, got: usize },
}

/// Serializes a depth map as little-endian single-channel PFM
/// (`Pf\n<w> <h>\n-1.0\n`, rows bottom-to-top).
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = depth.dims();
    let header = format!("Pf\n{w} {h}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + w * h * 4);
    out.extend_from_slice(header.as_bytes());
    for row in depth.values().chunks_exact(w).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(mut reader: impl BufRead) -> Result<DepthMap, PfmError> {
    let magic = read_header_line(&mut reader)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(PfmError::MalformedHeader(format!("bad magic {other:?}"))),
    };
    let dims_line = read_header_line(&mut reader)?;
    let dims: Vec<&str> = dims_line.split_whitespace().collect();
    let [w, h] = dims[..] else {
        return Err(PfmError::MalformedHeader(format!(
            "bad dimension line {dims_line:?}"
        )));
    };
    let parse_dim = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| PfmError::MalformedHeader(format!("bad dimension {s:?}")))
    };
    let (width, height) = (parse_dim(w)?, parse_dim(h)?);
    if width == 0 || height == 0 {
        return Err(PfmError::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    let samples = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels as u64))
        .filter(|&n| n <= MAX_PFM_SAMPLES as u64)
        .ok_or(PfmError::DimensionOverflow { width, height })? as usize;

    let scale_line = read_header_line(&mut reader)?;
    let scale: f32 = scale_line
        .parse()
        .map_err(|_| PfmError::MalformedHeader(format!("bad scale {scale_line:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(PfmError::MalformedHeader(format!("bad scale {scale_line:?}")));
    }
    if channels != 1 {
        return Err(PfmError::UnsupportedChannels(channels));
    }
    let little_endian = scale < 0.0;

    let expected = samples * 4;
    let mut payload = Vec::with_capacity(expected);
    reader.take(expected as u64).read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(PfmError::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let mut values = vec![0.0f32; samples];
    for (row_idx, row) in payload.chunks_exact(w * 4).enumerate() {
        let y = h - 1 - row_idx;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            if !v.is_finite() {
                return Err(PfmError::NonFinite(y * w + x));
            }
            values[y * w + x] = v;
        }
    }
    Ok(DepthMap::from_raw(w, h, values))
}

fn read_header_line(reader: &mut impl BufRead) -> Result<String, PfmError> {
    let mut raw = Vec::new();
    // Headers are short; cap the read so a binary file cannot make us buffer it all.
    reader.take(256).read_until(b'\n', &mut raw)?;
    if raw.last() != Some(&b'\n') {
        return Err(PfmError::MalformedHeader("unterminated header line".into()));
    }
    let line = std::str::from_utf8(&raw)
        .map_err(|_| PfmError::MalformedHeader("header is not ASCII".into()))?;
    Ok(line.trim().to_string())
}

pub fn save_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<(), PfmError> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(&encode_pfm(depth))?;
    file.flush()?;
    Ok(())
}

pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap, PfmError> {
    decode_pfm(BufReader::new(File::open(path)?))
}

/// Loads any PNG as 3-channel RGB with samples in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage, ImageIoError> {
    let rgb = image::open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(RasterImage::from_raw(w as usize, h as usize, 3, data))
}

/// Saves a 3-channel image as 8-bit RGB PNG.
pub fn save_image(path: impl AsRef<Path>, img: &RasterImage) -> Result<(), ImageIoError> {
    let bytes = rgb8_bytes(img)?;
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, bytes)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub(crate) fn rgb8_bytes(img: &RasterImage) -> Result<Vec<u8>, ImageIoError> {
    if img.channels() != 3 {
        return Err(ImageIoError::Channels {
            expected: 3,
            got: img.channels(),
        });
    }
    Ok(img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect())
}

/// `[0, 1]` → `[0, 65535]`, round half up, clamped.
pub fn quantize_u16(v: f32) -> u16 {
    ((v.clamp(0.0, 1.0) as f64) * 65535.0 + 0.5).floor() as u16
}

/// Lossy 16-bit grayscale PNG export of a `[0, 1]` depth map.
pub fn save_depth_png16(path: impl AsRef<Path>, depth: &DepthMap) -> Result<(), ImageIoError> {
    let samples: Vec<u16> = depth.values().iter().map(|&v| quantize_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, samples)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_depth_png16(path: impl AsRef<Path>) -> Result<DepthMap, ImageIoError> {
    let gray = image::open(path)?.to_luma16();
    let (w, h) = gray.dimensions();
    let values = gray
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 65535.0)
        .collect();
    Ok(DepthMap::from_raw(w as usize, h as usize, values))
}
