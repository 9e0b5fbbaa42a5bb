//! Piecewise synthetic scenes with an analytic ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::raster::{BinaryMask, DepthMap, RasterImage};

/// Side of a texture cell in scene pixels.
pub(crate) const TEXTURE_CELL: usize = 3;
const TEXTURE_CONTRAST: f32 = 0.25;
/// Fraction of painted cells inside a textured region.
const TEXTURE_FILL: f64 = 0.4;
const DEPTH_LEVELS: usize = 6;

fn level_depth(level: usize) -> f32 {
    let ratio = (0.98f32 / 0.38).powf(1.0 / (DEPTH_LEVELS - 1) as f32);
    0.38 * ratio.powi(level as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Shape {
    /// Half-open box `[x0, x1) x [y0, y1)` in scene pixels.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                u * u + v * v <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub shape: Shape,
    /// Inverse depth in `(0, 1]`; larger is closer.
    pub depth: f32,
    pub albedo: [f32; 3],
    /// Textured once `texture_density > 1 - texture` (0 = never textured).
    pub texture: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Background {
    pub depth_top: f32,
    pub depth_bottom: f32,
    pub albedo: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Later regions occlude earlier ones.
    pub regions: Vec<Region>,
    pub background: Background,
    pub texture_density: f64,
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Identity of what is painted at a scene pixel; neighbours with different
/// keys form a visible edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Appearance {
    region: Option<usize>,
    cell: Option<(usize, usize)>,
}

impl SceneSpec {
    /// Random scene: sloped untextured background, 3 to 6 large
    /// regions, then 2 to 6 small objects on top. Region depths come from
    /// six levels spaced by a ratio of about 1.21 between 0.38 and 0.98.
    pub fn random(seed: u64, width: usize, height: usize, texture_density: f64) -> Self {
        assert!(width >= 32 && height >= 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (wf, hf) = (width as f64, height as f64);
        // Ground-plane ramp, far at the top.
        let depth_top: f32 = rng.gen_range(0.12..0.16);
        let background = Background {
            depth_top,
            depth_bottom: depth_top * rng.gen_range(1.4..1.6),
            albedo: [0.45, 0.5, 0.55],
        };
        let mut levels: Vec<usize> = (0..DEPTH_LEVELS).collect();
        for i in (1..levels.len()).rev() {
            levels.swap(i, rng.gen_range(0..=i));
        }
        let large = rng.gen_range(3..=6);
        let small = rng.gen_range(2..=6);
        let mut regions = Vec::with_capacity(large + small);
        for i in 0..large + small {
            // Large regions take distinct levels; small objects any level.
            let (level, extent) = if i < large {
                (levels[i], 0.12..0.32)
            } else {
                (rng.gen_range(0..DEPTH_LEVELS), 0.03..0.08)
            };
            let depth = level_depth(level);
            let sw = rng.gen_range(extent.clone()) * wf;
            let sh = rng.gen_range(extent) * hf;
            let cx = rng.gen_range(sw / 2.0..wf - sw / 2.0);
            let cy = rng.gen_range(sh / 2.0..hf - sh / 2.0);
            let shape = if rng.gen_bool(0.5) {
                Shape::Rect {
                    x0: (cx - sw / 2.0).floor(),
                    y0: (cy - sh / 2.0).floor(),
                    x1: (cx + sw / 2.0).floor(),
                    y1: (cy + sh / 2.0).floor(),
                }
            } else {
                Shape::Ellipse {
                    cx,
                    cy,
                    rx: sw / 2.0,
                    ry: sh / 2.0,
                }
            };
            // Keep every region visibly different from the background.
            let albedo = loop {
                let a: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
                let far = a
                    .iter()
                    .zip(background.albedo)
                    .any(|(c, b)| (c - b).abs() > 0.2);
                if far {
                    break a.map(|c| 0.15 + 0.7 * c);
                }
            };
            regions.push(Region {
                shape,
                depth,
                albedo,
                texture: rng.gen(),
            });
        }
        Self {
            width,
            height,
            regions,
            background,
            texture_density,
            seed,
        }
    }

    pub fn maxdim(&self) -> usize {
        self.width.max(self.height)
    }

    pub fn region_at(&self, x: f64, y: f64) -> Option<usize> {
        self.regions.iter().rposition(|r| r.shape.contains(x, y))
    }

    /// Ground-truth inverse depth at a continuous scene position.
    pub fn gt_at(&self, x: f64, y: f64) -> f32 {
        match self.region_at(x, y) {
            Some(i) => self.regions[i].depth,
            None => self.background_depth(y),
        }
    }

    fn background_depth(&self, y: f64) -> f32 {
        let t = (y / self.height as f64).clamp(0.0, 1.0) as f32;
        let b = &self.background;
        b.depth_top + (b.depth_bottom - b.depth_top) * t
    }

    fn cell_hash(&self, cx: usize, cy: usize) -> u64 {
        splitmix(self.seed ^ splitmix(((cx as u64) << 32) ^ cy as u64))
    }

    fn appearance(&self, px: usize, py: usize) -> Appearance {
        let region = self.region_at(px as f64 + 0.5, py as f64 + 0.5);
        let cell = region
            .filter(|&i| self.texture_density > 1.0 - self.regions[i].texture as f64)
            .map(|_| (px / TEXTURE_CELL, py / TEXTURE_CELL))
            .filter(|c| unit(self.cell_hash(c.0, c.1)) < TEXTURE_FILL);
        Appearance { region, cell }
    }

    fn color(&self, a: Appearance) -> [f32; 3] {
        let Some(i) = a.region else {
            return self.background.albedo;
        };
        let base = self.regions[i].albedo;
        match a.cell {
            None => base,
            Some((cx, cy)) => {
                let h = splitmix(self.cell_hash(cx, cy));
                // Alternate brighter / darker so neighbouring cells differ.
                let sign = if (h & 1) == 0 { 1.0 } else { -1.0 };
                let amp = TEXTURE_CONTRAST * (0.5 + 0.5 * unit(h >> 1) as f32) * sign;
                base.map(|c| (c + amp).clamp(0.0, 1.0))
            }
        }
    }

    fn appearance_grid(&self) -> Vec<Appearance> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.appearance(x, y))
            .collect()
    }

    /// Native-resolution map of contextual cues: pixels whose painted
    /// appearance differs from a 4-neighbour.
    pub fn cue_mask(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let grid = self.appearance_grid();
        BinaryMask::from_fn(w, h, |x, y| {
            let a = grid[y * w + x];
            (x > 0 && grid[y * w + x - 1] != a)
                || (x + 1 < w && grid[y * w + x + 1] != a)
                || (y > 0 && grid[(y - 1) * w + x] != a)
                || (y + 1 < h && grid[(y + 1) * w + x] != a)
        })
    }
}

/// Renders RGB and ground-truth inverse depth at the scene's native size.
pub fn generate_scene(spec: &SceneSpec) -> (RasterImage, DepthMap) {
    let (w, h) = (spec.width, spec.height);
    let grid = spec.appearance_grid();
    let rgb = RasterImage::from_fn(w, h, 3, |x, y, c| spec.color(grid[y * w + x])[c]);
    let gt = DepthMap::from_fn(w, h, |x, y| spec.gt_at(x as f64 + 0.5, y as f64 + 0.5));
    (rgb, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::compute_context_map;

    fn flat(width: usize, height: usize) -> SceneSpec {
        SceneSpec {
            width,
            height,
            regions: vec![],
            background: Background {
                depth_top: 0.4,
                depth_bottom: 0.4,
                albedo: [0.3, 0.3, 0.3],
            },
            texture_density: 0.5,
            seed: 1,
        }
    }

    #[test]
    fn empty_scene_is_constant() {
        let (rgb, gt) = generate_scene(&flat(40, 30));
        assert_eq!(rgb.min_max(), (0.3, 0.3));
        assert_eq!(gt.min_max(), (0.4, 0.4));
        assert!(flat(40, 30).cue_mask().is_empty());
    }

    #[test]
    fn single_rectangle_is_a_two_level_step() {
        let mut spec = flat(40, 30);
        spec.background.depth_top = 0.2;
        spec.background.depth_bottom = 0.2;
        spec.regions.push(Region {
            shape: Shape::Rect {
                x0: 10.0,
                y0: 5.0,
                x1: 30.0,
                y1: 20.0,
            },
            depth: 0.8,
            albedo: [0.9, 0.1, 0.1],
            texture: 0.0,
        });
        let (rgb, gt) = generate_scene(&spec);
        for y in 0..30 {
            for x in 0..40 {
                let inside = (10..30).contains(&x) && (5..20).contains(&y);
                assert_eq!(gt.at(x, y), if inside { 0.8 } else { 0.2 });
            }
        }
        let edges = compute_context_map(&rgb, 1.0);
        assert!(edges.edges().get(10, 10) && edges.edges().get(9, 10));
        assert!(edges.edges().get(29, 12) && edges.edges().get(30, 12));
        assert!(!edges.edges().get(20, 12));
    }

    #[test]
    fn texture_free_edges_sit_on_region_boundaries() {
        let spec = SceneSpec::random(7, 160, 120, 0.0);
        let (rgb, _) = generate_scene(&spec);
        let edges = compute_context_map(&rgb, 1.0);
        let cues = spec.cue_mask();
        // Every edge pixel is a boundary pixel; almost every boundary pixel
        // is detected (one-pixel slivers can cancel in central differences).
        for y in 0..120 {
            for x in 0..160 {
                if edges.edges().get(x, y) {
                    assert!(cues.get(x, y), "stray edge at ({x}, {y})");
                }
            }
        }
        assert!(edges.edges().count() as f64 >= 0.97 * cues.count() as f64);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_scene(&SceneSpec::random(11, 96, 64, 0.6));
        let b = generate_scene(&SceneSpec::random(11, 96, 64, 0.6));
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn halving_density_paints_a_subset_of_cells() {
        let dense = SceneSpec::random(3, 120, 90, 0.8);
        let mut sparse = dense.clone();
        sparse.texture_density = 0.4;
        for y in 0..90 {
            for x in 0..120 {
                if sparse.appearance(x, y).cell.is_some() {
                    assert!(dense.appearance(x, y).cell.is_some());
                }
            }
        }
    }

    #[test]
    fn random_scene_depths_are_well_separated() {
        for seed in 0..20 {
            let s = SceneSpec::random(seed, 128, 96, 0.5);
            assert!((5..=12).contains(&s.regions.len()));
            let mut d: Vec<f32> = s.regions.iter().map(|r| r.depth).collect();
            d.sort_by(f32::total_cmp);
            d.dedup();
            assert!(d.len() >= 3);
            assert!(d.windows(2).all(|p| p[1] / p[0] > 1.2));
            assert!(d[0] / s.background.depth_bottom > 1.2);
            assert!(s.background.depth_bottom / s.background.depth_top <= 1.6);
        }
    }
}
