//! Contextual-cue proxy (thresholded RGB gradients) and the content-adaptive
//! resolution search built on its distance field.

use serde::Serialize;

use crate::raster::{
    distance_to_set, gradient_magnitude, threshold_mean, BinaryMask, DistanceField, RasterImage,
    Rect,
};

/// Candidate estimation sizes live on this grid (max dimension).
pub const GRID: usize = 32;

/// Edge proxy `M` at a fixed reference resolution plus its Chebyshev
/// distance field.
#[derive(Debug, Clone)]
pub struct ContextMap {
    edges: BinaryMask,
    dist: DistanceField,
    // hist[d] = number of pixels at finite distance d.
    hist: Vec<u64>,
}

impl ContextMap {
    pub fn from_edges(edges: BinaryMask) -> Self {
        let dist = distance_to_set(&edges);
        let mut hist = Vec::new();
        for &d in dist.values() {
            if d == DistanceField::UNREACHABLE {
                continue;
            }
            let d = d as usize;
            if d >= hist.len() {
                hist.resize(d + 1, 0);
            }
            hist[d] += 1;
        }
        Self {
            edges,
            dist,
            hist,
        }
    }

    pub fn edges(&self) -> &BinaryMask {
        &self.edges
    }

    pub fn dist(&self) -> &DistanceField {
        &self.dist
    }

    pub fn ref_width(&self) -> usize {
        self.edges.width()
    }

    pub fn ref_height(&self) -> usize {
        self.edges.height()
    }

    pub fn ref_maxdim(&self) -> usize {
        self.ref_width().max(self.ref_height())
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn pixel_count(&self) -> u64 {
        (self.ref_width() * self.ref_height()) as u64
    }

    /// Number of pixels whose distance exceeds `t`.
    fn count_beyond(&self, t: u64) -> u64 {
        let within: u64 = self.hist.iter().take((t + 1).min(self.hist.len() as u64) as usize).sum();
        self.pixel_count() - within
    }

    /// `C_whole`: edge fraction of the full map.
    pub fn context_percentage(&self) -> f64 {
        self.edges.fraction()
    }

    /// Edge fraction inside a rect given in reference pixels.
    pub fn context_percentage_in(&self, rect: Rect) -> f64 {
        let mut count = 0usize;
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                count += self.edges.get(x, y) as usize;
            }
        }
        count as f64 / rect.area() as f64
    }

    /// Exact uncovered fraction when the reference map is rendered with max
    /// dimension `maxdim`: a pixel is uncovered iff `d * 2 * maxdim > receptive * ref_maxdim`.
    pub fn uncovered_at(&self, maxdim: usize, receptive: usize) -> f64 {
        assert!(maxdim > 0);
        let t = (receptive * self.ref_maxdim()) as u64 / (2 * maxdim) as u64;
        self.count_beyond(t) as f64 / self.pixel_count() as f64
    }
}

/// Builds the edge proxy at `ref_scale` times the image size.
pub fn compute_context_map(rgb: &RasterImage, ref_scale: f64) -> ContextMap {
    assert!(ref_scale > 0.0 && ref_scale.is_finite());
    let (w, h) = rgb.dims();
    let rw = ((w as f64 * ref_scale).round() as usize).max(1);
    let rh = ((h as f64 * ref_scale).round() as usize).max(1);
    let resized = rgb.resize_bilinear(rw, rh);
    ContextMap::from_edges(threshold_mean(&gradient_magnitude(&resized)))
}

/// Reference scale used for context maps: `min(cap, rmax / maxdim)`.
pub fn reference_scale(original: (usize, usize), cap: f64, rmax: usize) -> f64 {
    let m = original.0.max(original.1) as f64;
    cap.min(rmax as f64 / m)
}

/// Fraction of pixels left uncovered by a receptive-sized box dilation of
/// the edges when rendered at `scale` times the reference resolution.
pub fn uncovered_fraction(ctx: &ContextMap, scale: f64, receptive: usize) -> f64 {
    assert!(scale > 0.0);
    let limit = receptive as f64 / (2.0 * scale);
    let beyond = ctx
        .dist
        .values()
        .iter()
        .filter(|&&d| d as f64 > limit)
        .count();
    beyond as f64 / ctx.pixel_count() as f64
}

/// Share of reference pixels within a quarter-receptive dilation of edges (`K`).
pub fn influence_ratio(ctx: &ContextMap, receptive: usize) -> f64 {
    assert!(receptive >= 4);
    let radius = ((receptive / 4) / 2) as u64;
    let within = ctx.pixel_count() - ctx.count_beyond(radius);
    within as f64 / ctx.pixel_count() as f64
}

/// `(width, height)` with the given max dimension and the aspect of `original`.
pub fn dims_for_maxdim(original: (usize, usize), maxdim: usize) -> (usize, usize) {
    let (w, h) = original;
    let minor = |a: usize, b: usize| ((maxdim as f64 * a as f64 / b as f64).round() as usize).max(1);
    if w >= h {
        (maxdim, minor(h, w))
    } else {
        (minor(w, h), maxdim)
    }
}

fn maxdim(d: (usize, usize)) -> usize {
    d.0.max(d.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionPlan {
    pub original: (usize, usize),
    pub training_res: usize,
    pub r0: (usize, usize),
    pub rx: (usize, usize),
    pub x_percent: f64,
    pub upsample_cap: f64,
    pub rmax: usize,
    /// Set when the edge map is empty and the search could not run.
    pub degenerate: bool,
}

impl ResolutionPlan {
    /// Dimensions of the training-size request for this image.
    pub fn training_dims(&self) -> (usize, usize) {
        dims_for_maxdim(self.original, self.training_res)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBounds {
    pub training_res: usize,
    pub upsample_cap: f64,
    pub rmax: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            training_res: 384,
            upsample_cap: 3.0,
            rmax: 3000,
        }
    }
}

impl SearchBounds {
    /// Candidate max dimensions, ascending: `training_res ..= floor32(min(cap * orig, rmax))`.
    pub fn candidates(&self, original: (usize, usize)) -> Vec<usize> {
        let top = (self.upsample_cap * maxdim(original) as f64).min(self.rmax as f64);
        let hi = ((top as usize) / GRID * GRID).max(self.training_res);
        (self.training_res..=hi).step_by(GRID).collect()
    }
}

/// Largest grid resolutions with zero (`r0`) and at most `x` (`rx`)
/// uncovered pixels. The receptive field equals `training_res`.
pub fn find_resolution(
    ctx: &ContextMap,
    x: f64,
    original: (usize, usize),
    bounds: SearchBounds,
) -> ResolutionPlan {
    assert!((0.0..1.0).contains(&x), "x must lie in [0, 1)");
    assert!(bounds.training_res >= GRID && bounds.training_res % GRID == 0);
    let candidates = bounds.candidates(original);
    let receptive = bounds.training_res;
    let mut plan = ResolutionPlan {
        original,
        training_res: bounds.training_res,
        r0: dims_for_maxdim(original, bounds.training_res),
        rx: dims_for_maxdim(original, bounds.training_res),
        x_percent: x,
        upsample_cap: bounds.upsample_cap,
        rmax: bounds.rmax,
        degenerate: ctx.is_empty(),
    };
    if plan.degenerate {
        return plan;
    }
    // Uncovered fraction only grows with resolution, so each admissible set
    // is a prefix of the candidate list.
    let last_admissible = |limit: f64| {
        let n = candidates.partition_point(|&m| ctx.uncovered_at(m, receptive) <= limit);
        candidates[n.saturating_sub(1)]
    };
    plan.r0 = dims_for_maxdim(original, last_admissible(0.0));
    plan.rx = dims_for_maxdim(original, last_admissible(x));
    plan
}

/// `(maxdim, uncovered fraction)` for every candidate size.
pub fn uncovered_curve(
    ctx: &ContextMap,
    original: (usize, usize),
    bounds: SearchBounds,
) -> Vec<(usize, f64)> {
    bounds
        .candidates(original)
        .into_iter()
        .map(|m| (m, ctx.uncovered_at(m, bounds.training_res)))
        .collect()
}

/// Enlarged base size `max(1, rmax / (4 K maxdim(r20)))` times `r20`,
/// grid-rounded and clamped to `rmax`. Never shrinks its input.
pub fn target_resolution(r20: (usize, usize), k: f64, rmax: usize) -> (usize, usize) {
    assert!((0.0..=1.0).contains(&k));
    let m20 = maxdim(r20);
    if k == 0.0 {
        return r20;
    }
    let mult = (rmax as f64 / (4.0 * k * m20 as f64)).max(1.0);
    if mult == 1.0 {
        return r20;
    }
    let grid = ((m20 as f64 * mult / GRID as f64).round() as usize) * GRID;
    let target = grid.min(rmax).max(m20);
    dims_for_maxdim(r20, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_pixel(n: usize) -> ContextMap {
        let mut m = BinaryMask::empty(n, n);
        m.set(n / 2, n / 2, true);
        ContextMap::from_edges(m)
    }

    #[test]
    fn constant_image_gives_empty_map() {
        let ctx = compute_context_map(&RasterImage::filled(20, 10, 3, 0.3), 1.0);
        assert!(ctx.is_empty());
        assert!(ctx
            .dist()
            .values()
            .iter()
            .all(|&d| d == DistanceField::UNREACHABLE));
    }

    #[test]
    fn half_split_image_has_one_edge_band() {
        let img = RasterImage::from_fn(10, 4, 3, |x, _, _| if x >= 5 { 1.0 } else { 0.0 });
        let ctx = compute_context_map(&img, 1.0);
        assert_eq!(ctx.edges(), &BinaryMask::from_fn(10, 4, |x, _| x == 4 || x == 5));
        for y in 0..4 {
            for x in 0..10usize {
                let expected = if x < 4 { 4 - x } else { x.saturating_sub(5) };
                assert_eq!(ctx.dist().get(x, y), expected as u32);
            }
        }
    }

    #[test]
    fn uncovered_cases() {
        let full = ContextMap::from_edges(BinaryMask::filled(8, 8, true));
        let empty = ContextMap::from_edges(BinaryMask::empty(8, 8));
        for s in [0.1, 1.0, 7.5] {
            assert_eq!(uncovered_fraction(&full, s, 384), 0.0);
            assert_eq!(uncovered_fraction(&empty, s, 384), 1.0);
        }
        assert_eq!(uncovered_fraction(&single_pixel(11), 1.0, 4), 96.0 / 121.0);
        assert_eq!(single_pixel(11).uncovered_at(11, 4), 96.0 / 121.0);
    }

    #[test]
    fn influence_cases() {
        assert_eq!(
            influence_ratio(&ContextMap::from_edges(BinaryMask::filled(5, 5, true)), 384),
            1.0
        );
        assert_eq!(
            influence_ratio(&ContextMap::from_edges(BinaryMask::empty(5, 5)), 384),
            0.0
        );
        assert_eq!(influence_ratio(&single_pixel(11), 8), 9.0 / 121.0);
    }

    #[test]
    fn full_edges_hit_the_cap() {
        let ctx = ContextMap::from_edges(BinaryMask::filled(300, 200, true));
        let plan = find_resolution(&ctx, 0.2, (1000, 600), SearchBounds::default());
        assert_eq!(plan.r0, (2976, 1786));
        assert_eq!(plan.rx, plan.r0);
        // The 3x cap binds before rmax here.
        let plan = find_resolution(&ctx, 0.2, (500, 500), SearchBounds::default());
        assert_eq!(plan.r0, (1500 / 32 * 32, 1500 / 32 * 32));
    }

    #[test]
    fn empty_edges_degenerate_to_training_size() {
        let ctx = ContextMap::from_edges(BinaryMask::empty(64, 48));
        let plan = find_resolution(&ctx, 0.2, (640, 480), SearchBounds::default());
        assert!(plan.degenerate);
        assert_eq!(plan.r0, (384, 288));
        assert_eq!(plan.rx, (384, 288));
    }

    #[test]
    fn aspect_is_preserved() {
        assert_eq!(dims_for_maxdim((640, 480), 384), (384, 288));
        assert_eq!(dims_for_maxdim((480, 640), 384), (288, 384));
        assert_eq!(dims_for_maxdim((1000, 3), 32), (32, 1));
    }

    #[test]
    fn target_resolution_cases() {
        assert_eq!(target_resolution((1000, 1000), 0.25, 3000), (3000, 3000));
        assert_eq!(target_resolution((2000, 1500), 0.9, 3000), (2000, 1500));
        assert_eq!(target_resolution((1024, 768), 0.0, 3000), (1024, 768));
        // m = 3000 / (4 * 0.5 * 1024) = 1.4648..., 1500 rounds to 1504.
        assert_eq!(target_resolution((1024, 768), 0.5, 3000), (1504, 1128));
    }

    // Independent route: place every edge pixel at its block centre in an
    // integer-upscaled grid, dilate with the receptive box, read coverage back
    // at the block centres.
    fn rescale_then_dilate_fraction(edges: &BinaryMask, factor: usize, receptive: usize) -> f64 {
        let (w, h) = edges.dims();
        let c = factor / 2;
        let big = BinaryMask::from_fn(w * factor, h * factor, |x, y| {
            x % factor == c && y % factor == c && edges.get(x / factor, y / factor)
        });
        let dilated = crate::raster::dilate_box(&big, receptive);
        let uncovered = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| !dilated.get(x * factor + c, y * factor + c))
            .count();
        uncovered as f64 / (w * h) as f64
    }

    #[test]
    fn integer_upscale_matches_rescale_then_dilate() {
        let edges = BinaryMask::from_fn(12, 9, |x, y| (x * 7 + y * 3) % 17 == 0);
        let ctx = ContextMap::from_edges(edges.clone());
        for factor in 1..=4 {
            for receptive in [2, 4, 6, 10, 16] {
                let a = ctx.uncovered_at(12 * factor, receptive);
                let b = rescale_then_dilate_fraction(&edges, factor, receptive);
                assert_eq!(a, b, "factor {factor} receptive {receptive}");
            }
        }
    }

    fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
        (4usize..48, 4usize..48, 0.0f64..0.05, any::<u64>()).prop_map(|(w, h, p, seed)| {
            let mut s = seed | 1;
            BinaryMask::from_fn(w, h, |_, _| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s % 100_000) as f64 / 100_000.0 < p
            })
        })
    }

    proptest! {
        #[test]
        fn uncovered_is_monotone_in_scale(mask in mask_strategy(), receptive in 2usize..64) {
            let ctx = ContextMap::from_edges(mask);
            let mut prev = 0.0;
            for m in 1..200 {
                let f = ctx.uncovered_at(m, receptive);
                prop_assert!(f >= prev);
                prev = f;
            }
        }

        #[test]
        fn adding_edges_never_lowers_resolutions(mask in mask_strategy(), extra in any::<u64>()) {
            let (w, h) = mask.dims();
            let bounds = SearchBounds { training_res: 32, upsample_cap: 30.0, rmax: 3000 };
            let mut more = mask.clone();
            more.set((extra as usize) % w, (extra as usize / w) % h, true);
            let a = find_resolution(&ContextMap::from_edges(mask), 0.2, (w * 10, h * 10), bounds);
            let b = find_resolution(&ContextMap::from_edges(more), 0.2, (w * 10, h * 10), bounds);
            if !a.degenerate {
                prop_assert!(b.r0.0 >= a.r0.0 && b.rx.0 >= a.rx.0);
            }
        }

        #[test]
        fn search_matches_linear_scan(mask in mask_strategy(), x in 0.0f64..0.9) {
            let (w, h) = mask.dims();
            let ctx = ContextMap::from_edges(mask);
            let bounds = SearchBounds { training_res: 32, upsample_cap: 20.0, rmax: 3000 };
            let orig = (w * 8, h * 8);
            let plan = find_resolution(&ctx, x, orig, bounds);
            if !plan.degenerate {
                let scan = |limit: f64| {
                    let mut best = 32;
                    let mut m = 32;
                    while m <= bounds.candidates(orig).last().copied().unwrap() {
                        let beyond = ctx.dist().values().iter()
                            .filter(|&&d| d as f64 * 2.0 * m as f64 > (32 * ctx.ref_maxdim()) as f64)
                            .count() as f64 / (w * h) as f64;
                        if beyond <= limit { best = m; }
                        m += 32;
                    }
                    dims_for_maxdim(orig, best)
                };
                prop_assert_eq!(plan.r0, scan(0.0));
                prop_assert_eq!(plan.rx, scan(x));
            }
        }

        #[test]
        fn target_never_shrinks(w in 32usize..3000, h in 32usize..3000, k in 0.0f64..=1.0) {
            let t = target_resolution((w, h), k, 3000);
            prop_assert!(t.0.max(t.1) >= w.max(h));
            prop_assert!(t.0.max(t.1) <= 3000.max(w.max(h)));
        }
    }
}
