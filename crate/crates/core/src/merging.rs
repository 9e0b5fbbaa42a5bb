//! Detail transfer between estimates and feathered patch compositing.

use serde::Serialize;
use thiserror::Error;

use crate::estimator::{external_merge, EstimateError, ExternalMergeCommand};
use crate::raster::{DepthMap, Rect};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("merge inputs differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("rect {rect:?} does not fit a {width}x{height} canvas")]
    OutOfBounds {
        rect: Rect,
        width: usize,
        height: usize,
    },
    #[error("external merger failed: {0}")]
    External(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeParams {
    /// Window half-size in merge-resolution pixels.
    pub radius: usize,
    pub eps: f64,
    /// Square working resolution; `None` merges at the requested output size.
    pub merge_res: Option<usize>,
}

impl MergeParams {
    pub fn for_receptive(receptive: usize) -> Self {
        Self {
            radius: (receptive / 8).max(1),
            ..Self::default()
        }
    }
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            radius: 48,
            eps: 1e-4,
            merge_res: Some(1024),
        }
    }
}

// Inclusive prefix sums with a zero border: table[(y+1)*(w+1) + x+1].
struct Integral {
    w: usize,
    table: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y * w + x);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Self { w, table }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.w + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }
}

/// Box window of half-size `r` around `(x, y)`, clipped to the image.
fn window(x: usize, y: usize, w: usize, h: usize, r: usize) -> (usize, usize, usize, usize) {
    (x.saturating_sub(r), y.saturating_sub(r), (x + r + 1).min(w), (y + r + 1).min(h))
}

fn box_mean(values: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let integral = Integral::new(w, h, |i| values[i]);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (x0, y0, x1, y1) = window(x, y, w, h, r);
            out.push(integral.sum(x0, y0, x1, y1) / ((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Per-pixel affine fit of `detail` onto `base` in local windows; output
/// `a * detail + b` with box-smoothed coefficients, clamped to `[0, 1]`.
///
/// The ridge term pulls the gain towards 1 rather than 0:
/// `a = (cov + eps) / (var + eps)`. A flat detail window therefore keeps
/// `a = 1` and lands on the local base mean, and merging a map with itself
/// is exact. `detail` is min-max normalized first, so any positive affine
/// re-ranging of it yields the same result.
pub fn local_affine_merge(
    base: &DepthMap,
    detail: &DepthMap,
    p: &MergeParams,
) -> Result<DepthMap, MergeError> {
    if base.dims() != detail.dims() {
        return Err(MergeError::DimensionMismatch(base.dims(), detail.dims()));
    }
    assert!(p.radius >= 1 && p.eps > 0.0);
    let (w, h) = base.dims();
    let d = detail.normalized();
    let dv = d.values();
    let bv = base.values();

    let sd = Integral::new(w, h, |i| dv[i] as f64);
    let sb = Integral::new(w, h, |i| bv[i] as f64);
    let sdd = Integral::new(w, h, |i| (dv[i] as f64).powi(2));
    let sdb = Integral::new(w, h, |i| dv[i] as f64 * bv[i] as f64);

    let mut a = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (x0, y0, x1, y1) = window(x, y, w, h, p.radius);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let md = sd.sum(x0, y0, x1, y1) / n;
            let mb = sb.sum(x0, y0, x1, y1) / n;
            let var = (sdd.sum(x0, y0, x1, y1) / n - md * md).max(0.0);
            let cov = sdb.sum(x0, y0, x1, y1) / n - md * mb;
            let ai = (cov + p.eps) / (var + p.eps);
            a.push(ai);
            b.push(mb - ai * md);
        }
    }
    let a = box_mean(&a, w, h, p.radius);
    let b = box_mean(&b, w, h, p.radius);
    let values = (0..w * h)
        .map(|i| (a[i] * dv[i] as f64 + b[i]).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(DepthMap::new(w, h, values).expect("merge output is finite"))
}

/// Combines a structurally consistent `base` with a detailed estimate.
pub trait Merger: Send + Sync {
    fn merge(
        &self,
        base: &DepthMap,
        detail: &DepthMap,
        out: (usize, usize),
    ) -> Result<DepthMap, MergeError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticMerger {
    pub params: MergeParams,
}

impl Merger for AnalyticMerger {
    fn merge(
        &self,
        base: &DepthMap,
        detail: &DepthMap,
        out: (usize, usize),
    ) -> Result<DepthMap, MergeError> {
        let (mw, mh) = self.params.merge_res.map_or(out, |m| (m, m));
        let merged = local_affine_merge(
            &base.resized(mw, mh),
            &detail.resized(mw, mh),
            &self.params,
        )?;
        Ok(merged.resized(out.0, out.1))
    }
}

/// Delegates to an external learned merger at a fixed square resolution.
#[derive(Debug, Clone)]
pub struct ExternalMerger {
    pub command: ExternalMergeCommand,
    pub merge_res: usize,
}

impl Merger for ExternalMerger {
    fn merge(
        &self,
        base: &DepthMap,
        detail: &DepthMap,
        out: (usize, usize),
    ) -> Result<DepthMap, MergeError> {
        let m = self.merge_res;
        let merged = external_merge(&self.command, &base.resized(m, m), &detail.resized(m, m))?;
        Ok(merged.resized(out.0, out.1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatherMask {
    width: usize,
    height: usize,
    weights: Vec<f32>,
}

impl FeatherMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.weights[y * self.width + x]
    }
}

/// Separable border ramp: `min` over axes of
/// `clamp(dist_to_border / (band * min(w, h)), 0, 1)`.
pub fn feather_mask(w: usize, h: usize, band: f64) -> FeatherMask {
    assert!(band > 0.0 && band < 0.5, "band must lie in (0, 0.5)");
    assert!(w > 0 && h > 0);
    let width_px = band * w.min(h) as f64;
    let ramp = |i: usize, n: usize| (i.min(n - 1 - i) as f64 / width_px).clamp(0.0, 1.0);
    let weights = (0..h)
        .flat_map(|y| (0..w).map(move |x| ramp(x, w).min(ramp(y, h)) as f32))
        .collect();
    FeatherMask {
        width: w,
        height: h,
        weights,
    }
}

/// `canvas[rect] = mask * patch + (1 - mask) * canvas[rect]`.
pub fn composite_patch(
    canvas: &mut DepthMap,
    patch: &DepthMap,
    rect: Rect,
    mask: &FeatherMask,
) -> Result<(), MergeError> {
    let (cw, ch) = canvas.dims();
    if !rect.fits_in(cw, ch) {
        return Err(MergeError::OutOfBounds {
            rect,
            width: cw,
            height: ch,
        });
    }
    if patch.dims() != (rect.w, rect.h) {
        return Err(MergeError::DimensionMismatch(patch.dims(), (rect.w, rect.h)));
    }
    if (mask.width, mask.height) != (rect.w, rect.h) {
        return Err(MergeError::DimensionMismatch((mask.width, mask.height), (rect.w, rect.h)));
    }
    let values = canvas.values_mut();
    for y in 0..rect.h {
        for x in 0..rect.w {
            let m = mask.at(x, y);
            let dst = &mut values[(rect.y + y) * cw + rect.x + x];
            *dst = m * patch.at(x, y) + (1.0 - m) * *dst;
        }
    }
    Ok(())
}
