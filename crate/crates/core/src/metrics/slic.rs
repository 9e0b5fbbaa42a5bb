//! SLIC superpixels on a single-channel map.

use std::collections::HashMap;

use serde::Serialize;

use super::MetricError;
use crate::raster::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlicParams {
    /// Requested superpixel count.
    pub k: usize,
    /// Weight of the spatial term against the range-normalized intensity.
    pub compactness: f64,
    pub iters: usize,
}

impl SlicParams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            compactness: 0.1,
            iters: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Centroid {
    pub x: f64,
    pub y: f64,
    /// Mean of the labeled map over the region.
    pub mean: f64,
    /// Member pixel closest to `(x, y)`; differs from the rounded centroid
    /// only for non-convex regions.
    pub pixel: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabeling {
    pub width: usize,
    pub height: usize,
    /// Row-major, contiguous `0..k_actual`.
    pub labels: Vec<u32>,
    pub centroids: Vec<Centroid>,
    pub k_requested: usize,
    pub k_actual: usize,
    /// Label pairs `(a, b)`, `a < b`, sharing a 4-connected boundary. Sorted.
    pub adjacency: Vec<(u32, u32)>,
}

impl SuperpixelLabeling {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Center {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

pub(crate) struct Slic {
    pub w: usize,
    pub h: usize,
    /// Intensity scaled to `[0, 1]` by range.
    pub g: Vec<f64>,
    pub s: f64,
    pub m: f64,
}

impl Slic {
    pub fn new(gt: &DepthMap, k: usize, m: f64) -> Self {
        let (w, h) = gt.dims();
        let (lo, hi) = gt.min_max();
        let range = (hi - lo) as f64;
        let g = gt
            .values()
            .iter()
            .map(|&v| if range > 0.0 { (v - lo) as f64 / range } else { 0.0 })
            .collect();
        Self {
            w,
            h,
            g,
            s: ((w * h) as f64 / k as f64).sqrt(),
            m,
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, c: &Center) -> f64 {
        let (x, y) = ((i % self.w) as f64, (i / self.w) as f64);
        let spatial = ((x - c.x).powi(2) + (y - c.y).powi(2)).sqrt();
        (self.g[i] - c.v).abs() + self.m * spatial / self.s
    }

    fn grad(&self, x: usize, y: usize) -> f64 {
        let at = |x: usize, y: usize| self.g[y * self.w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(self.w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(self.h - 1));
        (at(xr, y) - at(xl, y)).powi(2) + (at(x, yd) - at(x, yu)).powi(2)
    }

    /// Regular grid of `ny x nx ≈ k` seeds, each moved to the lowest-gradient
    /// pixel of its 3x3 neighbourhood. Labels start as grid cells.
    pub fn init(&self, k: usize) -> (Vec<Center>, Vec<u32>) {
        let (w, h) = (self.w, self.h);
        let ny = ((k as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
        let nx = ((k as f64 / ny as f64).round() as usize).clamp(1, w);
        let mut centers = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let cx = ((i as f64 + 0.5) * w as f64 / nx as f64) as usize;
                let cy = ((j as f64 + 0.5) * h as f64 / ny as f64) as usize;
                let mut best = (f64::INFINITY, cx, cy);
                for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                    for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                        let gr = self.grad(x, y);
                        if gr < best.0 {
                            best = (gr, x, y);
                        }
                    }
                }
                let (_, x, y) = best;
                centers.push(Center {
                    x: x as f64,
                    y: y as f64,
                    v: self.g[y * w + x],
                });
            }
        }
        let labels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let ci = (x * nx / w).min(nx - 1);
                let cj = (y * ny / h).min(ny - 1);
                (cj * nx + ci) as u32
            })
            .collect();
        (centers, labels)
    }

    /// Reassigns every pixel to the closest centre within a `±2S` window,
    /// keeping its current centre as the incumbent.
    pub fn assign(&self, centers: &[Center], labels: &mut [u32]) {
        let mut best: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.dist(i, &centers[l as usize]))
            .collect();
        let reach = 2.0 * self.s;
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - reach).floor().max(0.0) as usize;
            let y0 = (c.y - reach).floor().max(0.0) as usize;
            let x1 = ((c.x + reach).ceil() as usize).min(self.w - 1);
            let y1 = ((c.y + reach).ceil() as usize).min(self.h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * self.w + x;
                    let d = self.dist(i, c);
                    if d < best[i] {
                        best[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
    }

    /// Moves each non-empty cluster's centre to its member mean.
    pub fn update(&self, centers: &mut [Center], labels: &[u32]) {
        let mut acc = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            a.0 += (i % self.w) as f64;
            a.1 += (i / self.w) as f64;
            a.2 += self.g[i];
            a.3 += 1;
        }
        for (c, (sx, sy, sv, n)) in centers.iter_mut().zip(acc) {
            if n > 0 {
                let n = n as f64;
                *c = Center {
                    x: sx / n,
                    y: sy / n,
                    v: sv / n,
                };
            }
        }
    }

    #[cfg(test)]
    pub fn energy(&self, centers: &[Center], labels: &[u32]) -> f64 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.dist(i, &centers[l as usize]))
            .sum()
    }
}

/// Keeps the largest 4-connected component of every label; every other
/// fragment joins its largest neighbouring component. Returns contiguous
/// labels in raster order of first appearance.
fn enforce_connectivity(w: usize, h: usize, labels: &[u32]) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![u32::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    let mut comp_label: Vec<u32> = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if comp[seed] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let l = labels[seed];
        comp[seed] = id;
        stack.push(seed);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && labels[j] == l {
                    comp[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
        comp_label.push(l);
    }

    // Largest component per label (first in raster order on ties).
    let mut keeper: HashMap<u32, u32> = HashMap::new();
    for (c, &l) in comp_label.iter().enumerate() {
        let e = keeper.entry(l).or_insert(c as u32);
        if sizes[c] > sizes[*e as usize] {
            *e = c as u32;
        }
    }

    let ncomp = sizes.len();
    let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            for j in [(x + 1 < w).then(|| y * w + x + 1), (y + 1 < h).then(|| (y + 1) * w + x)]
                .into_iter()
                .flatten()
            {
                let b = comp[j];
                if a != b {
                    neighbours[a as usize].push(b);
                    neighbours[b as usize].push(a);
                }
            }
        }
    }

    let mut parent: Vec<u32> = (0..ncomp as u32).collect();
    fn find(parent: &mut [u32], mut c: u32) -> u32 {
        while parent[c as usize] != c {
            let p = parent[c as usize];
            parent[c as usize] = parent[p as usize];
            c = p;
        }
        c
    }
    let mut merged = sizes.clone();
    let mut orphans: Vec<u32> = (0..ncomp as u32)
        .filter(|&c| keeper[&comp_label[c as usize]] != c)
        .collect();
    orphans.sort_by_key(|&c| (sizes[c as usize], c));
    for o in orphans {
        let mut best: Option<(usize, u32)> = None;
        for &nb in &neighbours[o as usize] {
            let r = find(&mut parent, nb);
            if r == find(&mut parent, o) {
                continue;
            }
            let size = merged[r as usize];
            if best.map_or(true, |(s, b)| size > s || (size == s && r < b)) {
                best = Some((size, r));
            }
        }
        if let Some((_, r)) = best {
            let ro = find(&mut parent, o);
            parent[ro as usize] = r;
            merged[r as usize] += merged[ro as usize];
        }
    }

    let mut remap: HashMap<u32, u32> = HashMap::new();
    comp.iter()
        .map(|&c| {
            let r = find(&mut parent, c);
            let next = remap.len() as u32;
            *remap.entry(r).or_insert(next)
        })
        .collect()
}

/// SLIC superpixels of `gt`; centroid means are taken from `gt` itself.
pub fn slic(gt: &DepthMap, params: SlicParams) -> Result<SuperpixelLabeling, MetricError> {
    let (w, h) = gt.dims();
    let n = w * h;
    if params.k < 2 || params.k > n {
        return Err(MetricError::SuperpixelCount { k: params.k, pixels: n });
    }
    if !(params.compactness >= 0.0) {
        return Err(MetricError::InvalidParameter(format!(
            "compactness {}",
            params.compactness
        )));
    }
    let engine = Slic::new(gt, params.k, params.compactness);
    let (mut centers, mut labels) = engine.init(params.k);
    for _ in 0..params.iters {
        engine.assign(&centers, &mut labels);
        engine.update(&mut centers, &labels);
    }
    let labels = enforce_connectivity(w, h, &labels);
    let k_actual = labels.iter().max().map_or(0, |&m| m as usize + 1);

    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); k_actual];
    for (i, &l) in labels.iter().enumerate() {
        let a = &mut acc[l as usize];
        a.0 += (i % w) as f64;
        a.1 += (i / w) as f64;
        a.2 += gt.values()[i] as f64;
        a.3 += 1;
    }
    let mut centroids: Vec<Centroid> = acc
        .into_iter()
        .map(|(sx, sy, sv, c)| {
            let c = c as f64;
            Centroid {
                x: sx / c,
                y: sy / c,
                mean: sv / c,
                pixel: (0, 0),
            }
        })
        .collect();
    let mut nearest = vec![f64::INFINITY; k_actual];
    for (i, &l) in labels.iter().enumerate() {
        let c = &mut centroids[l as usize];
        let (x, y) = (i % w, i / w);
        let d = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
        if d < nearest[l as usize] {
            nearest[l as usize] = d;
            c.pixel = (x, y);
        }
    }

    let mut adjacency = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let a = labels[y * w + x];
            if x + 1 < w {
                let b = labels[y * w + x + 1];
                if a != b {
                    adjacency.push((a.min(b), a.max(b)));
                }
            }
            if y + 1 < h {
                let b = labels[(y + 1) * w + x];
                if a != b {
                    adjacency.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    adjacency.sort_unstable();
    adjacency.dedup();

    Ok(SuperpixelLabeling {
        width: w,
        height: h,
        labels,
        centroids,
        k_requested: params.k,
        k_actual,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_contiguous(l: &SuperpixelLabeling) -> bool {
        let mut seen = vec![false; l.k_actual];
        for &v in &l.labels {
            if v as usize >= l.k_actual {
                return false;
            }
            seen[v as usize] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Every label is a single 4-connected component.
    fn connected(l: &SuperpixelLabeling) -> bool {
        let relabeled = enforce_connectivity(l.width, l.height, &l.labels);
        relabeled.iter().max().map_or(0, |&m| m as usize + 1) == l.k_actual
    }

    #[test]
    fn constant_map_splits_into_equal_quadrants() {
        let gt = DepthMap::filled(64, 64, 0.3);
        let l = slic(&gt, SlicParams::new(4)).unwrap();
        assert_eq!(l.k_actual, 4);
        let mut areas = vec![0usize; 4];
        for &v in &l.labels {
            areas[v as usize] += 1;
        }
        for a in areas {
            assert!((a as f64 - 1024.0).abs() <= 64.0, "area {a}");
        }
    }

    #[test]
    fn step_is_split_exactly() {
        let gt = DepthMap::from_fn(64, 32, |x, _| if x < 32 { 0.2 } else { 0.8 });
        let l = slic(&gt, SlicParams::new(2)).unwrap();
        assert_eq!(l.k_actual, 2);
        for y in 0..32 {
            for x in 0..64 {
                assert_eq!(l.label(x, y), l.label(if x < 32 { 0 } else { 63 }, 0));
            }
        }
        assert_ne!(l.label(0, 0), l.label(63, 0));
        assert_eq!(l.adjacency, vec![(0, 1)]);
        assert!((l.centroids[l.label(0, 0) as usize].mean - 0.2).abs() < 1e-6);
        for (i, c) in l.centroids.iter().enumerate() {
            assert_eq!(l.label(c.pixel.0, c.pixel.1), i as u32);
        }
    }

    #[test]
    fn step_split_has_lower_energy_than_the_grid_split() {
        // Energy comparison of the two candidate two-way partitions.
        let gt = DepthMap::from_fn(64, 32, |x, _| if x < 20 { 0.2 } else { 0.8 });
        let e = Slic::new(&gt, 2, 0.1);
        let partition = |cut: usize| -> f64 {
            let labels: Vec<u32> = (0..64 * 32).map(|i| (i % 64 >= cut) as u32).collect();
            let mut centers = vec![Center { x: 0.0, y: 0.0, v: 0.0 }; 2];
            e.update(&mut centers, &labels);
            e.energy(&centers, &labels)
        };
        assert!(partition(20) < partition(32));
        let l = slic(&gt, SlicParams::new(2)).unwrap();
        for x in 0..64 {
            assert_eq!(l.label(x, 5) == l.label(0, 5), x < 20, "column {x}");
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let gt = DepthMap::filled(4, 4, 0.0);
        assert!(slic(&gt, SlicParams::new(1)).is_err());
        assert!(slic(&gt, SlicParams::new(17)).is_err());
        assert!(slic(&gt, SlicParams::new(16)).is_ok());
    }

    #[test]
    fn fragments_join_their_largest_neighbour() {
        // Label 0 has a one-pixel island inside label 1, next to label 2.
        #[rustfmt::skip]
        let labels = [
            0, 0, 1, 1, 1,
            0, 0, 1, 0, 2,
            0, 0, 1, 1, 2,
        ];
        let out = enforce_connectivity(5, 3, &labels);
        assert_eq!(out[8], out[2]);
        assert_eq!(out.iter().max(), Some(&2));
    }

    fn random_map() -> impl Strategy<Value = DepthMap> {
        (8usize..40, 8usize..40, any::<u64>()).prop_map(|(w, h, seed)| {
            let mut s = seed | 1;
            let blocks = 1 + (seed % 4) as usize;
            DepthMap::from_fn(w, h, |x, y| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                let base = ((x * blocks / w + y * blocks / h) % 3) as f32 * 0.3;
                base + (s % 100) as f32 / 1000.0
            })
        })
    }

    proptest! {
        #[test]
        fn labeling_contract(gt in random_map(), k in 2usize..12) {
            let l = slic(&gt, SlicParams::new(k)).unwrap();
            prop_assert_eq!(l.labels.len(), gt.width() * gt.height());
            prop_assert!(is_contiguous(&l));
            prop_assert!(connected(&l));
            prop_assert_eq!(l.centroids.len(), l.k_actual);
            for (i, c) in l.centroids.iter().enumerate() {
                prop_assert_eq!(l.label(c.pixel.0, c.pixel.1), i as u32);
            }
            for &(a, b) in &l.adjacency {
                prop_assert!(a < b && (b as usize) < l.k_actual);
            }
        }

        #[test]
        fn assignment_never_raises_energy(gt in random_map(), k in 2usize..12, m in 0.0f64..2.0) {
            let e = Slic::new(&gt, k, m);
            let (mut centers, mut labels) = e.init(k);
            for _ in 0..5 {
                let before = e.energy(&centers, &labels);
                e.assign(&centers, &mut labels);
                let after = e.energy(&centers, &labels);
                prop_assert!(after <= before + 1e-9, "{} > {}", after, before);
                e.update(&mut centers, &labels);
            }
        }
    }
}
