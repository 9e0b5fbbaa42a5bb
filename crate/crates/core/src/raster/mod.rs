//! Dense 2-D image primitives shared by every stage of the pipeline.
//!
//! Samples are stored row-major as `f32`. Processing happens on floats in
//! `[0, 1]`; 8-bit and 16-bit quantization only happens at the file boundary
//! (see [`io`]).

mod filter;
pub mod io;
mod morph;

use std::ops::Deref;

use thiserror::Error;

pub use filter::{gaussian_blur, gaussian_kernel, gradient_magnitude};
pub use morph::{dilate_box, distance_to_set, threshold_mean, DistanceField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("sample buffer holds {got} values, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("expected {expected} channel(s), got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("rectangle {rect:?} does not fit in a {width}x{height} image")]
    OutOfBounds {
        rect: Rect,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

/// Pixel-aligned rectangle: origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// Row-major multi-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or(RasterError::InvalidDimensions {
                width,
                height,
                channels,
            })?;
        if data.len() != expected {
            return Err(RasterError::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0 && channels > 0 && value.is_finite());
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image from `f(x, y, channel)`. Panics on a non-finite sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(width > 0 && height > 0 && channels > 0);
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    assert!(v.is_finite(), "non-finite sample at ({x}, {y}, {c})");
                    data.push(v);
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, c: usize) -> RasterImage {
        assert!(c < self.channels);
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Self::from_raw(self.width, self.height, 1, data)
    }

    pub fn crop(&self, rect: Rect) -> Result<RasterImage, RasterError> {
        if !rect.fits_in(self.width, self.height) {
            return Err(RasterError::OutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            });
        }
        let mut data = Vec::with_capacity(rect.area() * self.channels);
        for y in rect.y..rect.y + rect.h {
            let start = (y * self.width + rect.x) * self.channels;
            data.extend_from_slice(&self.data[start..start + rect.w * self.channels]);
        }
        Ok(Self::from_raw(rect.w, rect.h, self.channels, data))
    }

    /// Bilinear resampling with center-aligned pixel grids and clamped borders.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RasterImage {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        self.resize_region(
            0.0,
            0.0,
            self.width as f64,
            self.height as f64,
            width,
            height,
        )
    }

    /// Bilinearly resamples the source window `[x0, x0+w) x [y0, y0+h)` (in
    /// source pixel units, may be fractional) to `out_w x out_h`.
    pub fn resize_region(
        &self,
        x0: f64,
        y0: f64,
        w: f64,
        h: f64,
        out_w: usize,
        out_h: usize,
    ) -> RasterImage {
        assert!(out_w > 0 && out_h > 0 && w > 0.0 && h > 0.0);
        let xs = sample_positions(x0, w, out_w, self.width);
        let ys = sample_positions(y0, h, out_h, self.height);
        let ch = self.channels;
        let mut data = Vec::with_capacity(out_w * out_h * ch);
        for &(y_lo, y_hi, ty) in &ys {
            let row_lo = &self.data[y_lo * self.width * ch..(y_lo + 1) * self.width * ch];
            let row_hi = &self.data[y_hi * self.width * ch..(y_hi + 1) * self.width * ch];
            for &(x_lo, x_hi, tx) in &xs {
                for c in 0..ch {
                    let top = lerp(row_lo[x_lo * ch + c], row_lo[x_hi * ch + c], tx);
                    let bottom = lerp(row_hi[x_lo * ch + c], row_hi[x_hi * ch + c], tx);
                    data.push(lerp(top, bottom, ty));
                }
            }
        }
        Self::from_raw(out_w, out_h, ch, data)
    }

    /// Pads to a square by replicating the last row/column. Returns the image
    /// unchanged when it is already square.
    pub fn pad_to_square(&self) -> RasterImage {
        let side = self.width.max(self.height);
        if self.width == self.height {
            return self.clone();
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(side * side * ch);
        for y in 0..side {
            let sy = y.min(self.height - 1);
            for x in 0..side {
                let sx = x.min(self.width - 1);
                let i = (sy * self.width + sx) * ch;
                data.extend_from_slice(&self.data[i..i + ch]);
            }
        }
        Self::from_raw(side, side, ch, data)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// For each output index, the two source taps and the interpolation weight.
fn sample_positions(origin: f64, extent: f64, out: usize, src: usize) -> Vec<(usize, usize, f32)> {
    let step = extent / out as f64;
    let max = (src - 1) as f64;
    (0..out)
        .map(|i| {
            let s = (origin + (i as f64 + 0.5) * step - 0.5).clamp(0.0, max);
            let lo = s.floor();
            let t = (s - lo) as f32;
            let lo = lo as usize;
            (lo, (lo + 1).min(src - 1), t)
        })
        .collect()
}

/// Single-channel map of relative inverse depth (larger = closer).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap(RasterImage);

impl Deref for DepthMap {
    type Target = RasterImage;

    fn deref(&self) -> &RasterImage {
        &self.0
    }
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, RasterError> {
        RasterImage::new(width, height, 1, values).map(Self)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self(RasterImage::filled(width, height, 1, value))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        Self(RasterImage::from_fn(width, height, 1, |x, y, _| f(x, y)))
    }

    pub fn from_raster(raster: RasterImage) -> Result<Self, RasterError> {
        if raster.channels() != 1 {
            return Err(RasterError::ChannelMismatch {
                expected: 1,
                got: raster.channels(),
            });
        }
        Ok(Self(raster))
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f32>) -> Self {
        Self(RasterImage::from_raw(width, height, 1, values))
    }

    pub fn as_raster(&self) -> &RasterImage {
        &self.0
    }

    pub fn into_raster(self) -> RasterImage {
        self.0
    }

    pub fn values(&self) -> &[f32] {
        self.0.data()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.0.data[y * self.0.width + x]
    }

    pub fn resized(&self, width: usize, height: usize) -> DepthMap {
        Self(self.0.resize_bilinear(width, height))
    }

    pub fn blurred(&self, sigma: f64) -> DepthMap {
        Self(gaussian_blur(&self.0, sigma))
    }

    pub fn cropped(&self, rect: Rect) -> Result<DepthMap, RasterError> {
        self.0.crop(rect).map(Self)
    }

    /// Applies `f` to every value. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> DepthMap {
        let values: Vec<f32> = self.values().iter().map(|&v| f(v)).collect();
        assert!(values.iter().all(|v| v.is_finite()));
        Self::from_raw(self.width(), self.height(), values)
    }

    /// Min-max normalization to `[0, 1]`; a constant map becomes all 0.5.
    pub fn normalized(&self) -> DepthMap {
        let (lo, hi) = self.min_max();
        let range = hi as f64 - lo as f64;
        if range <= 0.0 || !range.is_finite() {
            return DepthMap::filled(self.width(), self.height(), 0.5);
        }
        let values = self
            .values()
            .iter()
            .map(|&v| (((v as f64 - lo as f64) / range) as f32).clamp(0.0, 1.0))
            .collect();
        Self::from_raw(self.width(), self.height(), values)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.0.data
    }
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                channels: 1,
            });
        }
        if bits.len() != width * height {
            return Err(RasterError::LengthMismatch {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0);
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn crop(&self, rect: Rect) -> Result<BinaryMask, RasterError> {
        if !rect.fits_in(self.width, self.height) {
            return Err(RasterError::OutOfBounds {
                rect,
                width: self.width,
                height: self.height,
            });
        }
        let mut bits = Vec::with_capacity(rect.area());
        for y in rect.y..rect.y + rect.h {
            let start = y * self.width + rect.x;
            bits.extend_from_slice(&self.bits[start..start + rect.w]);
        }
        Ok(Self {
            width: rect.w,
            height: rect.h,
            bits,
        })
    }

    /// Nearest-neighbour resampling (center-aligned).
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        if (width, height) == (self.width, self.height) {
            return self.clone();
        }
        let map = |i: usize, out: usize, src: usize| {
            (((i as f64 + 0.5) * src as f64 / out as f64) as usize).min(src - 1)
        };
        let xs: Vec<usize> = (0..width).map(|x| map(x, width, self.width)).collect();
        BinaryMask::from_fn(width, height, |x, y| {
            self.get(xs[x], map(y, height, self.height))
        })
    }

    /// 0.0 / 1.0 single-channel image.
    pub fn to_raster(&self) -> RasterImage {
        RasterImage::from_raw(
            self.width,
            self.height,
            1,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}
