//! Turbo colormap for depth previews, from its degree-5 polynomial fit.

use depthboost::raster::{DepthMap, RasterImage};

const R: [f64; 6] = [0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943];
const G: [f64; 6] = [0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604];
const B: [f64; 6] = [0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973];

fn horner(c: &[f64; 6], x: f64) -> f32 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k).clamp(0.0, 1.0) as f32
}

pub fn turbo(x: f64) -> [f32; 3] {
    let x = x.clamp(0.0, 1.0);
    [horner(&R, x), horner(&G, x), horner(&B, x)]
}

/// 256-entry lookup, indexed by the 8-bit quantized depth.
pub fn lut() -> Vec<[f32; 3]> {
    (0..256).map(|i| turbo(i as f64 / 255.0)).collect()
}

pub fn colorize(depth: &DepthMap) -> RasterImage {
    let lut = lut();
    let data = depth
        .values()
        .iter()
        .flat_map(|&v| lut[(v.clamp(0.0, 1.0) * 255.0 + 0.5) as usize])
        .collect();
    RasterImage::new(depth.width(), depth.height(), 3, data).expect("finite lut entries")
}
