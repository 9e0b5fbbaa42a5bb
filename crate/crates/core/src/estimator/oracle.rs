//! Deterministic stand-in for a monocular network.
//!
//! Coarse requests lose detail (resolution-dependent blur); pixels farther
//! than half a receptive field from any contextual cue pick up a
//! low-frequency sinusoidal error.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scene::SceneSpec;
use super::{DepthBackend, EstimateError, EstimatorSpec, ViewRegion};
use crate::raster::{distance_to_set, BinaryMask, DepthMap, DistanceField, RasterImage, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleParams {
    /// `c_b`: blur in request pixels is `c_b * view_maxdim / request_maxdim`.
    pub detail_sigma_scene: f64,
    pub artifact_amplitude: f64,
    /// Artifact wavelength in scene pixels.
    pub artifact_wavelength: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            detail_sigma_scene: 1.5,
            artifact_amplitude: 0.25,
            artifact_wavelength: 160.0,
            seed: 0,
        }
    }
}

impl OracleParams {
    fn validate(&self) {
        assert!(self.detail_sigma_scene.is_finite() && self.detail_sigma_scene >= 0.0);
        assert!((0.0..0.5).contains(&self.artifact_amplitude));
        assert!(self.artifact_wavelength.is_finite() && self.artifact_wavelength > 0.0);
    }
}

/// Oracle output for the `view` part of `scene` requested at `w x h`,
/// normalized to `[0, 1]`.
pub fn oracle_estimate(
    scene: &SceneSpec,
    cues: &BinaryMask,
    params: &OracleParams,
    receptive: usize,
    view: ViewRegion,
    w: usize,
    h: usize,
) -> DepthMap {
    oracle_raw(scene, cues, params, receptive, view, w, h).normalized()
}

// Blurred truth plus artifact, in ground-truth units.
fn oracle_raw(
    scene: &SceneSpec,
    cues: &BinaryMask,
    params: &OracleParams,
    receptive: usize,
    view: ViewRegion,
    w: usize,
    h: usize,
) -> DepthMap {
    params.validate();
    assert!(w >= super::MIN_REQUEST && h >= super::MIN_REQUEST);
    assert_eq!(cues.dims(), (scene.width, scene.height));

    let (sw, sh) = (scene.width as f64, scene.height as f64);
    let (vx, vy) = (view.x0 * sw, view.y0 * sh);
    let (vw, vh) = ((view.x1 - view.x0) * sw, (view.y1 - view.y0) * sh);
    let (step_x, step_y) = (vw / w as f64, vh / h as f64);
    let scene_pos = |i: usize, j: usize| (vx + (i as f64 + 0.5) * step_x, vy + (j as f64 + 0.5) * step_y);

    let gt = DepthMap::from_fn(w, h, |i, j| {
        let (x, y) = scene_pos(i, j);
        scene.gt_at(x, y)
    });
    let sigma = params.detail_sigma_scene * vw.max(vh) / w.max(h) as f64;
    let blurred = gt.blurred(sigma);

    let Some(dist) = view_distance(cues, vx, vy, vw, vh) else {
        // Nothing to reason from: a blank view yields only the blurred truth.
        return blurred;
    };
    let (dx0, dy0) = (vx.floor() as usize, vy.floor() as usize);
    let to_request = w.max(h) as f64 / vw.max(vh);
    let half = receptive as f64 / 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ scene.seed.rotate_left(17));
    let theta: f64 = rng.gen_range(0.0..TAU);
    let phase: f64 = rng.gen_range(0.0..TAU);
    let (cos, sin) = (theta.cos(), theta.sin());

    let out = DepthMap::from_fn(w, h, |i, j| {
        let (x, y) = scene_pos(i, j);
        let v = blurred.at(i, j) as f64;
        let nx = (x.floor() as usize).clamp(dx0, dx0 + dist.width() - 1) - dx0;
        let ny = (y.floor() as usize).clamp(dy0, dy0 + dist.height() - 1) - dy0;
        let d = dist.get(nx, ny) as f64 * to_request;
        let excess = d - half;
        if excess <= 0.0 {
            return v as f32;
        }
        let ramp = (excess / half).min(1.0);
        let pos = x * cos + y * sin;
        let art = params.artifact_amplitude * ramp * (TAU * pos / params.artifact_wavelength + phase).sin();
        (v + art) as f32
    });
    out
}

/// Chebyshev distance to cues inside the native-pixel box covering the
/// view; `None` when the box holds no cue.
fn view_distance(cues: &BinaryMask, vx: f64, vy: f64, vw: f64, vh: f64) -> Option<DistanceField> {
    let x0 = (vx.floor() as usize).min(cues.width() - 1);
    let y0 = (vy.floor() as usize).min(cues.height() - 1);
    let x1 = ((vx + vw).ceil() as usize).clamp(x0 + 1, cues.width());
    let y1 = ((vy + vh).ceil() as usize).clamp(y0 + 1, cues.height());
    let crop = cues
        .crop(Rect::new(x0, y0, x1 - x0, y1 - y0))
        .expect("view box lies inside the scene");
    (!crop.is_empty()).then(|| distance_to_set(&crop))
}

/// Backend answering requests with [`oracle_estimate`] on a known scene.
/// Request pixels are ignored; only their count and the view matter.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    spec: EstimatorSpec,
    scene: Arc<SceneSpec>,
    cues: Arc<BinaryMask>,
    params: OracleParams,
}

impl SyntheticBackend {
    pub fn new(scene: SceneSpec, params: OracleParams, receptive: usize) -> Self {
        params.validate();
        let mut spec = EstimatorSpec::new("synthetic", receptive);
        spec.supports_concurrent = true;
        let cues = Arc::new(scene.cue_mask());
        Self {
            spec,
            scene: Arc::new(scene),
            cues,
            params,
        }
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn params(&self) -> &OracleParams {
        &self.params
    }

    pub fn render(&self, view: ViewRegion, w: usize, h: usize) -> DepthMap {
        oracle_estimate(
            &self.scene,
            &self.cues,
            &self.params,
            self.spec.receptive,
            view,
            w,
            h,
        )
    }
}

impl DepthBackend for SyntheticBackend {
    fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    fn estimate_raw(&self, image: &RasterImage, view: ViewRegion) -> Result<DepthMap, EstimateError> {
        let (w, h) = image.dims();
        Ok(self.render(view, w, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::scene::{generate_scene, Background};
    use crate::estimator::{estimate, Region, Shape};

    fn rmse(a: &DepthMap, b: &DepthMap) -> f64 {
        let s: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
            .sum();
        (s / a.values().len() as f64).sqrt()
    }

    fn backend(seed: u64, size: usize, amplitude: f64) -> SyntheticBackend {
        let params = OracleParams {
            artifact_amplitude: amplitude,
            ..OracleParams::default()
        };
        SyntheticBackend::new(SceneSpec::random(seed, size, size, 0.6), params, 384)
    }

    #[test]
    fn flat_scene_is_constant_half() {
        let scene = SceneSpec {
            width: 64,
            height: 64,
            regions: vec![],
            background: Background {
                depth_top: 0.5,
                depth_bottom: 0.5,
                albedo: [0.2, 0.2, 0.2],
            },
            texture_density: 0.0,
            seed: 0,
        };
        let b = SyntheticBackend::new(scene, OracleParams::default(), 384);
        let (rgb, _) = generate_scene(b.scene());
        let d = estimate(&b, &rgb, ViewRegion::FULL).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn deterministic() {
        let b = backend(5, 200, 0.3);
        assert_eq!(b.render(ViewRegion::FULL, 600, 600), b.render(ViewRegion::FULL, 600, 600));
    }

    #[test]
    fn no_artifact_when_every_pixel_is_near_a_cue() {
        // Narrow stripes: nothing is far from an edge at receptive size.
        let mut scene = SceneSpec::random(1, 256, 256, 0.0);
        scene.regions = (0..16)
            .map(|i| Region {
                shape: Shape::Rect {
                    x0: i as f64 * 16.0,
                    y0: 0.0,
                    x1: i as f64 * 16.0 + 8.0,
                    y1: 256.0,
                },
                depth: 0.5 + 0.02 * i as f32,
                albedo: [0.9, 0.9, 0.9],
                texture: 0.0,
            })
            .collect();
        let with = SyntheticBackend::new(scene.clone(), OracleParams::default(), 384);
        let without = SyntheticBackend::new(
            scene,
            OracleParams {
                artifact_amplitude: 0.0,
                ..OracleParams::default()
            },
            384,
        );
        assert_eq!(
            with.render(ViewRegion::FULL, 384, 384),
            without.render(ViewRegion::FULL, 384, 384)
        );
    }

    #[test]
    fn artifact_is_bounded_by_amplitude() {
        // One small textured blob in a large flat scene, requested far above
        // the receptive size.
        let mut scene = SceneSpec::random(2, 400, 400, 1.0);
        scene.regions.truncate(1);
        scene.regions[0].shape = Shape::Rect {
            x0: 10.0,
            y0: 10.0,
            x1: 40.0,
            y1: 40.0,
        };
        let cues = scene.cue_mask();
        let a = 0.3;
        let with = OracleParams {
            artifact_amplitude: a,
            ..OracleParams::default()
        };
        let without = OracleParams {
            artifact_amplitude: 0.0,
            ..with
        };
        let d1 = oracle_raw(&scene, &cues, &with, 384, ViewRegion::FULL, 1600, 1600);
        let d0 = oracle_raw(&scene, &cues, &without, 384, ViewRegion::FULL, 1600, 1600);
        let diff: Vec<f64> = d1
            .values()
            .iter()
            .zip(d0.values())
            .map(|(x, y)| (x - y).abs() as f64)
            .collect();
        assert!(diff.iter().all(|&e| e <= a + 1e-6));
        assert!(diff.iter().any(|&e| e > 0.5 * a));
        // Pixels next to the blob stay clean.
        assert_eq!(d1.at(100, 100), d0.at(100, 100));
    }

    #[test]
    fn finer_requests_lose_less_detail_on_dense_scenes() {
        // Texture everywhere inside regions and a small scene: no artifacts.
        let b = backend(7, 256, 0.0);
        let gt = generate_scene(b.scene()).1;
        let mut prev = f64::MAX;
        for size in [64, 128, 256, 512] {
            let d = b.render(ViewRegion::FULL, size, size).resized(256, 256);
            let e = rmse(&d, &gt.normalized());
            assert!(e <= prev + 1e-9, "size {size}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn native_request_beats_the_low_resolution_blur() {
        let b = backend(7, 512, 0.25);
        let gt = generate_scene(b.scene()).1.normalized();
        let native = b.render(ViewRegion::FULL, 512, 512);
        let sigma_low = b.params().detail_sigma_scene * 512.0 / 384.0 * 512.0 / 384.0;
        let low_ref = gt.blurred(sigma_low).normalized();
        assert!(rmse(&native, &gt) < rmse(&low_ref, &gt));
    }
}
