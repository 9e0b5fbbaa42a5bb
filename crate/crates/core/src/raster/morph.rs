use super::{BinaryMask, RasterImage};

/// Sets a pixel iff its value is strictly above the image mean.
pub fn threshold_mean(gray: &RasterImage) -> BinaryMask {
    assert_eq!(gray.channels, 1, "threshold_mean expects a single channel");
    let mean = gray.mean();
    BinaryMask {
        width: gray.width,
        height: gray.height,
        bits: gray.data.iter().map(|&v| v as f64 > mean).collect(),
    }
}

/// Binary dilation with a `k x k` box (k rounded up to odd).
pub fn dilate_box(mask: &BinaryMask, k: usize) -> BinaryMask {
    assert!(k >= 1);
    let radius = k / 2;
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let horizontal = sliding_any(&mask.bits, w, h, radius, true);
    let bits = sliding_any(&horizontal, w, h, radius, false);
    BinaryMask {
        width: w,
        height: h,
        bits,
    }
}

// Running count of set pixels inside a window of `2r+1` along one axis.
fn sliding_any(bits: &[bool], w: usize, h: usize, r: usize, along_x: bool) -> Vec<bool> {
    let (n, lines) = if along_x { (w, h) } else { (h, w) };
    let idx = |line: usize, i: usize| if along_x { line * w + i } else { i * w + line };
    let mut out = vec![false; w * h];
    for line in 0..lines {
        let mut count = 0usize;
        for i in 0..r.min(n) {
            count += bits[idx(line, i)] as usize;
        }
        for i in 0..n {
            if i + r < n {
                count += bits[idx(line, i + r)] as usize;
            }
            if i > r {
                count -= bits[idx(line, i - r - 1)] as usize;
            }
            out[idx(line, i)] = count > 0;
        }
    }
    out
}

/// Chebyshev distance from every pixel to the nearest set pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<u32>,
}

impl DistanceField {
    /// Distance reported everywhere when the mask has no set pixel.
    pub const UNREACHABLE: u32 = u32::MAX;

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.values[y * self.width + x]
    }

    /// Float view; unreachable pixels become `f32::MAX`.
    pub fn to_raster(&self) -> RasterImage {
        RasterImage::from_raw(
            self.width,
            self.height,
            1,
            self.values
                .iter()
                .map(|&d| {
                    if d == Self::UNREACHABLE {
                        f32::MAX
                    } else {
                        d as f32
                    }
                })
                .collect(),
        )
    }
}

/// Exact Chebyshev distance transform (two raster passes, unit 8-neighbour
/// weights).
pub fn distance_to_set(mask: &BinaryMask) -> DistanceField {
    let (w, h) = mask.dims();
    let inf = DistanceField::UNREACHABLE;
    let mut d: Vec<u32> = mask.bits.iter().map(|&b| if b { 0 } else { inf }).collect();
    let step = |v: u32| v.saturating_add(1);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut best = d[i];
            if x > 0 {
                best = best.min(step(d[i - 1]));
            }
            if y > 0 {
                let up = i - w;
                best = best.min(step(d[up]));
                if x > 0 {
                    best = best.min(step(d[up - 1]));
                }
                if x + 1 < w {
                    best = best.min(step(d[up + 1]));
                }
            }
            d[i] = best;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            let mut best = d[i];
            if x + 1 < w {
                best = best.min(step(d[i + 1]));
            }
            if y + 1 < h {
                let down = i + w;
                best = best.min(step(d[down]));
                if x > 0 {
                    best = best.min(step(d[down - 1]));
                }
                if x + 1 < w {
                    best = best.min(step(d[down + 1]));
                }
            }
            d[i] = best;
        }
    }
    // saturating_add leaves u32::MAX untouched, so empty masks stay at the sentinel.
    DistanceField {
        width: w,
        height: h,
        values: d,
    }
}
