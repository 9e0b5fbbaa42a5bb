//! Evaluation of relative depth predictions against ground truth.
//!
//! Inputs are disparity-like maps (larger = closer). RMSE is measured in
//! disparity; δ1.25, ORD and D³R in depth, `1 / max(v, 1e-6)`.
//!
//! ORD and D³R compare ratios, which a shift in disparity does not preserve,
//! so both first match the prediction's mean and standard deviation to the
//! ground truth's with a positive scale. Order is kept, inverted predictions
//! stay inverted, and a constant prediction lands on the GT mean.

mod slic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::raster::{BinaryMask, DepthMap};

pub use slic::{slic, Centroid, SlicParams, SuperpixelLabeling};

pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no valid pixels to evaluate")]
    EmptyMask,
    #[error("maps differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("cannot build {k} superpixels on {pixels} pixels")]
    SuperpixelCount { k: usize, pixels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[inline]
pub fn to_depth(disparity: f64) -> f64 {
    1.0 / disparity.max(DEPTH_EPS)
}

/// Pixels that are inside `mask` (if any) and finite in both maps.
fn valid_indices(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
) -> Result<Vec<usize>, MetricError> {
    if pred.dims() != gt.dims() {
        return Err(MetricError::DimensionMismatch(pred.dims(), gt.dims()));
    }
    if let Some(m) = mask {
        if m.dims() != gt.dims() {
            return Err(MetricError::DimensionMismatch(m.dims(), gt.dims()));
        }
    }
    let (p, g) = (pred.values(), gt.values());
    let idx: Vec<usize> = (0..g.len())
        .filter(|&i| mask.map_or(true, |m| m.bits()[i]) && p[i].is_finite() && g[i].is_finite())
        .collect();
    if idx.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    Ok(idx)
}

/// Least-squares `s * pred + t ≈ gt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alignment {
    pub scale: f64,
    pub shift: f64,
    /// Prediction had no variance (or fewer than two pixels): `s = 0`.
    pub degenerate: bool,
}

impl Alignment {
    pub const IDENTITY: Alignment = Alignment {
        scale: 1.0,
        shift: 0.0,
        degenerate: false,
    };

    fn fit(p: &[f32], g: &[f32], idx: &[usize]) -> Self {
        let n = idx.len() as f64;
        let mp = idx.iter().map(|&i| p[i] as f64).sum::<f64>() / n;
        let mg = idx.iter().map(|&i| g[i] as f64).sum::<f64>() / n;
        let (mut cov, mut var) = (0.0, 0.0);
        for &i in idx {
            let dp = p[i] as f64 - mp;
            cov += dp * (g[i] as f64 - mg);
            var += dp * dp;
        }
        if idx.len() < 2 || var <= f64::EPSILON * mp.abs().max(1.0).powi(2) * n {
            return Self {
                scale: 0.0,
                shift: mg,
                degenerate: true,
            };
        }
        let scale = cov / var;
        Self {
            scale,
            shift: mg - scale * mp,
            degenerate: false,
        }
    }

    /// Positive affine map matching the prediction's mean and standard
    /// deviation to the GT's.
    fn moments(p: &[f32], g: &[f32], idx: &[usize]) -> Self {
        let n = idx.len() as f64;
        let stats = |v: &[f32]| {
            let m = idx.iter().map(|&i| v[i] as f64).sum::<f64>() / n;
            let var = idx.iter().map(|&i| (v[i] as f64 - m).powi(2)).sum::<f64>() / n;
            (m, var.sqrt())
        };
        let ((mp, sp), (mg, sg)) = (stats(p), stats(g));
        if sp <= f64::EPSILON * mp.abs().max(1.0) {
            return Self {
                scale: 0.0,
                shift: mg,
                degenerate: true,
            };
        }
        let scale = sg / sp;
        Self {
            scale,
            shift: mg - scale * mp,
            degenerate: false,
        }
    }

    #[inline]
    pub fn apply(&self, v: f32) -> f64 {
        self.scale * v as f64 + self.shift
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub map: DepthMap,
    pub alignment: Alignment,
}

/// Closed-form scale-and-shift fit of `pred` to `gt` over the valid pixels.
pub fn align_scale_shift(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
) -> Result<Aligned, MetricError> {
    let idx = valid_indices(pred, gt, mask)?;
    let alignment = Alignment::fit(pred.values(), gt.values(), &idx);
    let map = DepthMap::from_fn(pred.width(), pred.height(), |x, y| {
        alignment.apply(pred.at(x, y)) as f32
    });
    Ok(Aligned { map, alignment })
}

pub fn rmse(pred: &DepthMap, gt: &DepthMap, mask: Option<&BinaryMask>) -> Result<f64, MetricError> {
    let idx = valid_indices(pred, gt, mask)?;
    let (p, g) = (pred.values(), gt.values());
    let sum: f64 = idx.iter().map(|&i| (p[i] as f64 - g[i] as f64).powi(2)).sum();
    Ok((sum / idx.len() as f64).sqrt())
}

/// Fraction of pixels whose depth ratio `max(z/z*, z*/z)` exceeds `thresh`.
pub fn delta_error(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
    thresh: f64,
) -> Result<f64, MetricError> {
    let idx = valid_indices(pred, gt, mask)?;
    let (p, g) = (pred.values(), gt.values());
    let bad = idx
        .iter()
        .filter(|&&i| ratio(to_depth(p[i] as f64), to_depth(g[i] as f64)) > thresh)
        .count();
    Ok(bad as f64 / idx.len() as f64)
}

/// Fraction of pixels within the ratio threshold.
pub fn delta_accuracy(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
    thresh: f64,
) -> Result<f64, MetricError> {
    delta_error(pred, gt, mask, thresh).map(|e| 1.0 - e)
}

#[inline]
fn ratio(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordinal {
    Closer,
    Farther,
    Equal,
}

/// Relation of depth `a` to depth `b`; equal when within the ratio `1 + sigma`.
pub fn ordinal(a: f64, b: f64, sigma: f64) -> Ordinal {
    if a == b || ratio(a, b) < 1.0 + sigma {
        Ordinal::Equal
    } else if a < b {
        Ordinal::Closer
    } else {
        Ordinal::Farther
    }
}

/// Depths of the moment-matched prediction, plus GT depths.
fn ordinal_depths(
    pred: &DepthMap,
    gt: &DepthMap,
    idx: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let (p, g) = (pred.values(), gt.values());
    let a = Alignment::moments(p, g, idx);
    let pd = p.iter().map(|&v| to_depth(a.apply(v))).collect();
    let gd = g.iter().map(|&v| to_depth(v as f64)).collect();
    (pd, gd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairScore {
    pub disagreements: usize,
    pub pairs: usize,
}

impl PairScore {
    pub fn ratio(&self) -> f64 {
        self.disagreements as f64 / self.pairs as f64
    }
}

/// Ordinal error over `pairs` seeded random pairs of distinct valid pixels.
fn check_sigma(sigma: f64) -> Result<(), MetricError> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(MetricError::InvalidParameter(format!("sigma {sigma}")))
    }
}

pub fn ord_error(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
    pairs: usize,
    sigma: f64,
    seed: u64,
) -> Result<PairScore, MetricError> {
    if pairs == 0 {
        return Err(MetricError::InvalidParameter("pairs must be at least 1".into()));
    }
    check_sigma(sigma)?;
    let idx = valid_indices(pred, gt, mask)?;
    if idx.len() < 2 {
        return Err(MetricError::EmptyMask);
    }
    let (pd, gd) = ordinal_depths(pred, gt, &idx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut disagreements = 0;
    for _ in 0..pairs {
        let a = idx[rng.gen_range(0..idx.len())];
        let b = loop {
            let b = idx[rng.gen_range(0..idx.len())];
            if b != a {
                break b;
            }
        };
        if ordinal(pd[a], pd[b], sigma) != ordinal(gd[a], gd[b], sigma) {
            disagreements += 1;
        }
    }
    Ok(PairScore {
        disagreements,
        pairs,
    })
}

/// Ordinal error over every unordered pair of valid pixels. Quadratic; meant
/// for small maps.
pub fn ord_error_exhaustive(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&BinaryMask>,
    sigma: f64,
) -> Result<PairScore, MetricError> {
    check_sigma(sigma)?;
    let idx = valid_indices(pred, gt, mask)?;
    if idx.len() < 2 {
        return Err(MetricError::EmptyMask);
    }
    let (pd, gd) = ordinal_depths(pred, gt, &idx);
    let mut score = PairScore {
        disagreements: 0,
        pairs: 0,
    };
    for (k, &a) in idx.iter().enumerate() {
        for &b in &idx[k + 1..] {
            score.pairs += 1;
            if ordinal(pd[a], pd[b], sigma) != ordinal(gd[a], gd[b], sigma) {
                score.disagreements += 1;
            }
        }
    }
    Ok(score)
}

/// Depth-discontinuity disagreement over adjacent superpixels of `labeling`.
///
/// Each superpixel is represented by its centroid pixel (the member pixel
/// nearest its centroid). A pair is a discontinuity when the GT depths there
/// differ by at least the ratio `1 + disc_thresh`; it counts as a
/// disagreement when the prediction at the same pixels orders them
/// differently or stays within that ratio. `None` when there is no
/// discontinuity pair.
pub fn d3r(
    pred: &DepthMap,
    gt: &DepthMap,
    labeling: &SuperpixelLabeling,
    disc_thresh: f64,
) -> Result<Option<PairScore>, MetricError> {
    if !(disc_thresh > 0.0) {
        return Err(MetricError::InvalidParameter(format!("disc_thresh {disc_thresh}")));
    }
    let idx = valid_indices(pred, gt, None)?;
    if (labeling.width, labeling.height) != gt.dims() {
        return Err(MetricError::DimensionMismatch(
            (labeling.width, labeling.height),
            gt.dims(),
        ));
    }
    let a = Alignment::moments(pred.values(), gt.values(), &idx);
    let sample = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
        labeling
            .centroids
            .iter()
            .map(|c| f(c.pixel.0, c.pixel.1))
            .collect()
    };
    let pred_depth = sample(&|x, y| to_depth(a.apply(pred.at(x, y))));
    let gt_depth = sample(&|x, y| to_depth(gt.at(x, y) as f64));

    let mut score = PairScore {
        disagreements: 0,
        pairs: 0,
    };
    for &(i, j) in &labeling.adjacency {
        let (gi, gj) = (gt_depth[i as usize], gt_depth[j as usize]);
        if ratio(gi, gj) < 1.0 + disc_thresh {
            continue;
        }
        score.pairs += 1;
        if ordinal(pred_depth[i as usize], pred_depth[j as usize], disc_thresh)
            != ordinal(gi, gj, disc_thresh)
        {
            score.disagreements += 1;
        }
    }
    Ok((score.pairs > 0).then_some(score))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricConfig {
    pub pairs: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Superpixel count; `None` means one per 64x64 pixels.
    pub slic_k: Option<usize>,
    pub compactness: f64,
    pub slic_iters: usize,
    pub disc_thresh: f64,
    pub delta_thresh: f64,
    /// Fit scale and shift before RMSE and δ.
    pub align: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            pairs: 50_000,
            sigma: 0.03,
            seed: 0,
            slic_k: None,
            compactness: 0.1,
            slic_iters: 10,
            disc_thresh: 0.1,
            delta_thresh: 1.25,
            align: true,
        }
    }
}

impl MetricConfig {
    pub fn superpixels(&self, width: usize, height: usize) -> usize {
        self.slic_k
            .unwrap_or_else(|| (width * height).div_ceil(64 * 64))
            .max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCounts {
    pub ord_pairs: usize,
    pub d3r_pairs: usize,
    pub superpixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub rmse: f64,
    /// Fraction of pixels with δ > threshold.
    pub delta125: f64,
    pub ord: f64,
    /// `None` when the ground truth has no discontinuity pair.
    pub d3r: Option<f64>,
    pub aligned: bool,
    pub alignment: Alignment,
    pub pair_counts: PairCounts,
}

/// Reusable per-GT state: the superpixel labeling is the expensive part.
#[derive(Debug, Clone)]
pub struct Evaluator {
    gt: DepthMap,
    labeling: SuperpixelLabeling,
    config: MetricConfig,
}

impl Evaluator {
    pub fn new(gt: DepthMap, config: MetricConfig) -> Result<Self, MetricError> {
        let (w, h) = gt.dims();
        let k = config.superpixels(w, h).min(w * h);
        let labeling = slic(
            &gt,
            SlicParams {
                k,
                compactness: config.compactness,
                iters: config.slic_iters,
            },
        )?;
        Ok(Self {
            gt,
            labeling,
            config,
        })
    }

    pub fn labeling(&self) -> &SuperpixelLabeling {
        &self.labeling
    }

    pub fn gt(&self) -> &DepthMap {
        &self.gt
    }

    /// Scores `pred`, resampled bilinearly to the GT size when it differs.
    pub fn evaluate(&self, pred: &DepthMap) -> Result<MetricReport, MetricError> {
        let cfg = &self.config;
        let gt = &self.gt;
        let resampled;
        let pred = if pred.dims() == gt.dims() {
            pred
        } else {
            resampled = pred.resized(gt.width(), gt.height());
            &resampled
        };
        let (aligned_map, alignment) = if cfg.align {
            let a = align_scale_shift(pred, gt, None)?;
            (a.map, a.alignment)
        } else {
            (pred.clone(), Alignment::IDENTITY)
        };
        let ord = ord_error(pred, gt, None, cfg.pairs, cfg.sigma, cfg.seed)?;
        let d3r = d3r(pred, gt, &self.labeling, cfg.disc_thresh)?;
        Ok(MetricReport {
            rmse: rmse(&aligned_map, gt, None)?,
            delta125: delta_error(&aligned_map, gt, None, cfg.delta_thresh)?,
            ord: ord.ratio(),
            d3r: d3r.map(|s| s.ratio()),
            aligned: cfg.align,
            alignment,
            pair_counts: PairCounts {
                ord_pairs: ord.pairs,
                d3r_pairs: d3r.map_or(0, |s| s.pairs),
                superpixels: self.labeling.k_actual,
            },
        })
    }
}

/// One-shot evaluation; builds the superpixels of `gt` on every call.
pub fn evaluate(
    pred: &DepthMap,
    gt: &DepthMap,
    config: &MetricConfig,
) -> Result<MetricReport, MetricError> {
    Evaluator::new(gt.clone(), *config)?.evaluate(pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn row(values: &[f32]) -> DepthMap {
        DepthMap::new(values.len(), 1, values.to_vec()).unwrap()
    }

    fn lcg_map(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DepthMap::from_fn(w, h, |_, _| rng.gen_range(0.05f32..1.0))
    }

    fn objective(p: &[f32], g: &[f32], s: f64, t: f64) -> f64 {
        p.iter()
            .zip(g)
            .map(|(&p, &g)| (s * p as f64 + t - g as f64).powi(2))
            .sum()
    }

    /// Coordinate-free grid refinement of the squared-error objective.
    fn grid_minimize(p: &[f32], g: &[f32]) -> (f64, f64) {
        let (mut s, mut t) = (0.0, 0.0);
        let mut span = 8.0;
        while span > 1e-10 {
            let mut best = (objective(p, g, s, t), s, t);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (cs, ct) = (s + span * i as f64 / 10.0, t + span * j as f64 / 10.0);
                    let v = objective(p, g, cs, ct);
                    if v < best.0 {
                        best = (v, cs, ct);
                    }
                }
            }
            (s, t) = (best.1, best.2);
            span *= 0.5;
        }
        (s, t)
    }

    #[test]
    fn alignment_trivial_cases() {
        let gt = lcg_map(8, 8, 1);
        let a = align_scale_shift(&gt, &gt, None).unwrap();
        assert!((a.alignment.scale - 1.0).abs() < 1e-12 && a.alignment.shift.abs() < 1e-12);
        let pred = gt.map(|v| 2.0 * v - 0.3);
        let a = align_scale_shift(&pred, &gt, None).unwrap();
        for (x, y) in a.map.values().iter().zip(gt.values()) {
            assert!((x - y).abs() < 1e-6);
        }
        let flat = DepthMap::filled(8, 8, 0.4);
        let a = align_scale_shift(&flat, &gt, None).unwrap();
        assert!(a.alignment.degenerate && a.alignment.scale == 0.0);
    }

    #[test]
    fn alignment_matches_numeric_minimizer() {
        for seed in 0..10 {
            let (p, g) = (lcg_map(8, 8, seed), lcg_map(8, 8, seed + 100));
            let a = align_scale_shift(&p, &g, None).unwrap().alignment;
            let (s, t) = grid_minimize(p.values(), g.values());
            assert!((a.scale - s).abs() < 1e-6, "{} vs {s}", a.scale);
            assert!((a.shift - t).abs() < 1e-6, "{} vs {t}", a.shift);
        }
    }

    #[test]
    fn rmse_and_delta_trivial_cases() {
        let gt = lcg_map(16, 16, 3);
        assert_eq!(rmse(&gt, &gt, None).unwrap(), 0.0);
        assert_eq!(delta_error(&gt, &gt, None, 1.25).unwrap(), 0.0);
        let shifted = DepthMap::from_fn(16, 16, |x, y| (gt.at(x, y) as f64 + 0.1) as f32);
        assert!((rmse(&shifted, &gt, None).unwrap() - 0.1).abs() < 1e-6);
        // 1.3x farther everywhere.
        let far = gt.map(|v| v / 1.3);
        assert_eq!(delta_error(&far, &gt, None, 1.25).unwrap(), 1.0);
        assert_eq!(delta_accuracy(&far, &gt, None, 1.25).unwrap(), 0.0);
    }

    #[test]
    fn mask_selects_pixels_and_empty_mask_errors() {
        let gt = row(&[0.5, 0.5, 0.5, 0.5]);
        let pred = row(&[0.5, 0.5, 0.9, 0.9]);
        let left = BinaryMask::from_fn(4, 1, |x, _| x < 2);
        assert_eq!(rmse(&pred, &gt, Some(&left)).unwrap(), 0.0);
        let none = BinaryMask::empty(4, 1);
        assert_eq!(rmse(&pred, &gt, Some(&none)), Err(MetricError::EmptyMask));
        assert!(matches!(
            rmse(&row(&[0.1]), &gt, None),
            Err(MetricError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn ord_trivial_cases() {
        let gt = lcg_map(32, 32, 5);
        for seed in 0..5 {
            assert_eq!(ord_error(&gt, &gt, None, 5000, 0.03, seed).unwrap().disagreements, 0);
        }
        // Distinct values spaced beyond sigma in ratio, then fully inverted.
        let gt = DepthMap::from_fn(16, 16, |x, y| 0.1 * 1.01f32.powi((y * 16 + x) as i32));
        let inv = gt.map(|v| 1.0 - v);
        assert_eq!(ord_error(&inv, &gt, None, 5000, 0.005, 9).unwrap().ratio(), 1.0);
        assert!(matches!(
            ord_error(&gt, &gt, None, 10, -0.1, 0),
            Err(MetricError::InvalidParameter(_))
        ));
        assert!(ord_error_exhaustive(&gt, &gt, None, f64::NAN).is_err());
    }

    #[test]
    fn ord_hand_enumerated_toy() {
        let gt = row(&[1.0, 2.0, 3.0]);
        // (1,2,3) vs (1,3,2): only the last pair swaps.
        let s = ord_error_exhaustive(&row(&[1.0, 3.0, 2.0]), &gt, None, 0.0).unwrap();
        assert_eq!((s.disagreements, s.pairs), (1, 3));
        // (1,2,3) vs (3,1,2): the first two pairs swap.
        let s = ord_error_exhaustive(&row(&[3.0, 1.0, 2.0]), &gt, None, 0.0).unwrap();
        assert_eq!((s.disagreements, s.pairs), (2, 3));
        assert!((s.ratio() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ordinal_labels() {
        assert_eq!(ordinal(1.0, 1.0, 0.0), Ordinal::Equal);
        assert_eq!(ordinal(1.0, 1.02, 0.03), Ordinal::Equal);
        assert_eq!(ordinal(1.0, 1.04, 0.03), Ordinal::Closer);
        assert_eq!(ordinal(1.04, 1.0, 0.03), Ordinal::Farther);
    }

    fn step_scene() -> (DepthMap, SuperpixelLabeling) {
        let gt = DepthMap::from_fn(64, 32, |x, _| if x < 32 { 0.2 } else { 0.8 });
        let l = slic(&gt, SlicParams::new(2)).unwrap();
        (gt, l)
    }

    #[test]
    fn d3r_step_cases() {
        let (gt, l) = step_scene();
        assert_eq!(d3r(&gt, &gt, &l, 0.1).unwrap().unwrap().ratio(), 0.0);
        let inverted = gt.map(|v| 1.0 - v);
        assert_eq!(d3r(&inverted, &gt, &l, 0.1).unwrap().unwrap().ratio(), 1.0);
        let flat = DepthMap::filled(64, 32, 0.5);
        let s = d3r(&flat, &gt, &l, 0.1).unwrap().unwrap();
        assert_eq!((s.disagreements, s.pairs), (1, 1));
    }

    #[test]
    fn d3r_without_discontinuities_is_not_applicable() {
        let gt = DepthMap::filled(64, 64, 0.5);
        let l = slic(&gt, SlicParams::new(4)).unwrap();
        assert_eq!(d3r(&gt, &gt, &l, 0.1).unwrap(), None);
        assert!(d3r(&gt, &gt, &l, 0.0).is_err());
    }

    /// Blocky multi-level GT where each block is one superpixel-sized region.
    fn blocks(seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels: Vec<f32> = (0..16).map(|_| rng.gen_range(0.1f32..1.0)).collect();
        DepthMap::from_fn(64, 64, |x, y| levels[(y / 16) * 4 + x / 16])
    }

    #[test]
    fn d3r_grows_with_corruption() {
        let gt = blocks(11);
        let l = slic(&gt, SlicParams::new(16)).unwrap();
        let base = d3r(&gt, &gt, &l, 0.1).unwrap().unwrap();
        assert_eq!(base.disagreements, 0);
        // Flatten progressively more regions to the global mean.
        let mean = gt.mean() as f32;
        let mut last = 0.0;
        for cut in 1..=16u32 {
            let pred = DepthMap::from_fn(64, 64, |x, y| {
                if l.label(x, y) < cut { mean } else { gt.at(x, y) }
            });
            let r = d3r(&pred, &gt, &l, 0.1).unwrap().unwrap().ratio();
            assert!(r >= last, "cut {cut}: {r} < {last}");
            last = r;
        }
        assert!(last > 0.5);
    }

    #[test]
    fn truth_scores_zero_on_generated_scenes() {
        use crate::estimator::{generate_scene, SceneSpec};
        for seed in 0..4 {
            let (_, gt) = generate_scene(&SceneSpec::random(seed, 192, 128, 0.5));
            let cfg = MetricConfig { pairs: 2000, slic_k: Some(24), ..Default::default() };
            let r = evaluate(&gt, &gt, &cfg).unwrap();
            assert_eq!((r.ord, r.d3r.unwrap_or(0.0), r.delta125), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn evaluate_perfect_prediction() {
        let gt = blocks(2);
        let r = evaluate(&gt, &gt, &MetricConfig::default()).unwrap();
        assert!(r.rmse < 1e-6);
        assert_eq!((r.delta125, r.ord, r.d3r), (0.0, 0.0, Some(0.0)));
        assert!(r.pair_counts.d3r_pairs > 0);
        // Lower-resolution predictions are resampled to the GT size.
        let small = gt.resized(32, 32);
        let r = evaluate(&small, &gt, &MetricConfig::default()).unwrap();
        assert!(r.ord < 0.2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ordinal_metrics_ignore_positive_affine(seed in any::<u64>(), s in 0.1f32..10.0, t in -1.0f32..1.0) {
            let gt = blocks(seed);
            let pred = lcg_map(64, 64, seed ^ 0xabc).map(|v| 0.3 * v).blurred(1.0);
            let moved = pred.map(|v| s * v + t);
            let l = slic(&gt, SlicParams::new(16)).unwrap();
            prop_assert_eq!(
                ord_error(&pred, &gt, None, 2000, 0.03, 1).unwrap(),
                ord_error(&moved, &gt, None, 2000, 0.03, 1).unwrap()
            );
            prop_assert_eq!(d3r(&pred, &gt, &l, 0.1).unwrap(), d3r(&moved, &gt, &l, 0.1).unwrap());
        }

        #[test]
        fn aligned_scores_ignore_positive_affine(seed in any::<u64>(), s in 0.1f32..10.0, t in -1.0f32..1.0) {
            let gt = lcg_map(16, 16, seed);
            let pred = lcg_map(16, 16, seed + 1);
            let a = align_scale_shift(&pred, &gt, None).unwrap().map;
            let b = align_scale_shift(&pred.map(|v| s * v + t), &gt, None).unwrap().map;
            let (ra, rb) = (rmse(&a, &gt, None).unwrap(), rmse(&b, &gt, None).unwrap());
            prop_assert!((ra - rb).abs() < 1e-5);
        }

        #[test]
        fn fractions_stay_in_range(seed in any::<u64>()) {
            let gt = blocks(seed);
            let pred = lcg_map(64, 64, seed.wrapping_add(7));
            let r = evaluate(&pred, &gt, &MetricConfig { pairs: 500, ..Default::default() }).unwrap();
            prop_assert!(r.rmse >= 0.0);
            for f in [r.delta125, r.ord, r.d3r.unwrap_or(0.0)] {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
    }
}
