use serde::Serialize;

use crate::context::ContextMap;
use crate::raster::{BinaryMask, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchCandidate {
    pub rect: Rect,
    pub context_percentage: f64,
    pub expanded: bool,
}

impl PatchCandidate {
    pub fn area(&self) -> usize {
        self.rect.area()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TilingParams {
    /// Stride as a fraction of the tile side.
    pub stride_ratio: f64,
    /// Growth of the patch side per expansion step.
    pub expand_step: usize,
}

impl Default for TilingParams {
    fn default() -> Self {
        Self {
            stride_ratio: 2.0 / 3.0,
            expand_step: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchSelection {
    /// `C_whole` of the edge map at base resolution.
    pub c_whole: f64,
    pub tiles: usize,
    /// Kept patches, largest first, ties by `(y, x)`, without duplicates.
    pub patches: Vec<PatchCandidate>,
}

/// Tile origins along one axis: multiples of `stride` that fit, plus a last
/// tile flush with the far border.
pub fn grid_positions(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    assert!(stride > 0 && tile > 0);
    if len < tile {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|p| p + tile <= len).collect();
    if *out.last().unwrap() + tile < len {
        out.push(len - tile);
    }
    out
}

struct EdgeCounts {
    w: usize,
    table: Vec<u32>,
}

impl EdgeCounts {
    fn new(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let s = w + 1;
        let mut table = vec![0u32; s * (h + 1)];
        for y in 0..h {
            let mut row = 0;
            for x in 0..w {
                row += mask.get(x, y) as u32;
                table[(y + 1) * s + x + 1] = table[y * s + x + 1] + row;
            }
        }
        Self { w, table }
    }

    fn fraction(&self, r: Rect) -> f64 {
        let s = self.w + 1;
        let (x1, y1) = (r.x + r.w, r.y + r.h);
        let n = self.table[y1 * s + x1] + self.table[r.y * s + r.x]
            - self.table[r.y * s + x1]
            - self.table[y1 * s + r.x];
        n as f64 / r.area() as f64
    }
}

/// Square of side `side` centred on `(cx2/2, cy2/2)`, shifted inside the canvas.
fn centred(cx2: usize, cy2: usize, side: usize, w: usize, h: usize) -> Rect {
    let place = |c2: usize, len: usize| (c2.saturating_sub(side) / 2).min(len - side);
    Rect::new(place(cx2, w), place(cy2, h), side, side)
}

/// Context-driven patch selection on the base canvas of size `base`.
pub fn select_patches(
    ctx: &ContextMap,
    base: (usize, usize),
    receptive: usize,
    params: TilingParams,
) -> PatchSelection {
    let (w, h) = base;
    let edges = ctx.edges().resize_nearest(w, h);
    let c_whole = edges.fraction();
    let stride = ((params.stride_ratio * receptive as f64).ceil() as usize).max(1);
    let xs = grid_positions(w, receptive, stride);
    let ys = grid_positions(h, receptive, stride);
    let tiles = xs.len() * ys.len();
    if edges.is_empty() {
        return PatchSelection {
            c_whole,
            tiles,
            patches: Vec::new(),
        };
    }
    let counts = EdgeCounts::new(&edges);
    let max_side = w.min(h);

    let mut patches = Vec::new();
    for &y in &ys {
        for &x in &xs {
            let mut rect = Rect::new(x, y, receptive, receptive);
            let mut c = counts.fraction(rect);
            if c < c_whole {
                continue;
            }
            let (cx2, cy2) = (2 * x + receptive, 2 * y + receptive);
            while c > c_whole {
                let side = rect.w + params.expand_step;
                if side > max_side {
                    break;
                }
                let grown = centred(cx2, cy2, side, w, h);
                let cg = counts.fraction(grown);
                if cg < c_whole {
                    break;
                }
                rect = grown;
                c = cg;
            }
            patches.push(PatchCandidate {
                rect,
                context_percentage: c,
                expanded: rect.w > receptive,
            });
        }
    }
    patches.sort_by(|a, b| {
        b.area()
            .cmp(&a.area())
            .then(a.rect.y.cmp(&b.rect.y))
            .then(a.rect.x.cmp(&b.rect.x))
    });
    // Tiles that grew into the same clamped square are estimated once.
    patches.dedup_by(|a, b| a.rect == b.rect);
    PatchSelection {
        c_whole,
        tiles,
        patches,
    }
}
