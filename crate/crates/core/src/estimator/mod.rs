//! Depth-estimator contract and backends.
//!
//! A backend turns an RGB request into relative inverse depth of the same
//! size. [`estimate`] wraps every call with the shared checks and the per-call
//! min-max normalization.

mod external;
mod oracle;
mod scene;

use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::raster::{DepthMap, RasterImage};

pub use external::{external_merge, ExternalBackend, ExternalMergeCommand};
pub use oracle::{oracle_estimate, OracleParams, SyntheticBackend};
pub use scene::{generate_scene, Background, Region, SceneSpec, Shape};

/// Smallest request side a backend accepts.
pub const MIN_REQUEST: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EstimatorSpec {
    pub name: String,
    /// Square training / receptive-field size in pixels.
    pub receptive: usize,
    pub supports_concurrent: bool,
    /// Pad non-square requests to a square by edge replication.
    pub square_input: bool,
}

impl EstimatorSpec {
    pub fn new(name: impl Into<String>, receptive: usize) -> Self {
        assert!(
            receptive >= 32 && receptive % 32 == 0,
            "receptive size must be a positive multiple of 32"
        );
        Self {
            name: name.into(),
            receptive,
            supports_concurrent: false,
            square_input: false,
        }
    }
}

/// Part of the full image a request covers, in normalized `[0, 1]`
/// coordinates. Backends that only see pixels may ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewRegion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl ViewRegion {
    pub const FULL: ViewRegion = ViewRegion {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        assert!(0.0 <= x0 && x0 < x1 && x1 <= 1.0 + 1e-9);
        assert!(0.0 <= y0 && y0 < y1 && y1 <= 1.0 + 1e-9);
        Self { x0, y0, x1, y1 }
    }
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("bad command template: {0}")]
    Template(String),
    #[error("failed to spawn backend process: {0}")]
    Spawn(std::io::Error),
    #[error("backend exited with status {status:?}: {stderr}")]
    NonZeroExit { status: Option<i32>, stderr: String },
    #[error("backend produced no output at {0}")]
    MissingOutput(PathBuf),
    #[error("backend output is malformed: {0}")]
    MalformedOutput(String),
    #[error("backend returned {got:?} for a {expected:?} request")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("i/o error in backend workspace: {0}")]
    Io(#[from] std::io::Error),
}

pub trait DepthBackend: Send + Sync {
    fn spec(&self) -> &EstimatorSpec;

    /// Raw relative inverse depth for `image`; any positive affine range.
    fn estimate_raw(&self, image: &RasterImage, view: ViewRegion)
        -> Result<DepthMap, EstimateError>;
}

/// Runs `backend` on `image` and returns a `[0, 1]` map of the same size.
pub fn estimate(
    backend: &dyn DepthBackend,
    image: &RasterImage,
    view: ViewRegion,
) -> Result<DepthMap, EstimateError> {
    let (w, h) = image.dims();
    if w < MIN_REQUEST || h < MIN_REQUEST {
        return Err(EstimateError::InvalidRequest(format!(
            "request {w}x{h} is below the {MIN_REQUEST}px minimum"
        )));
    }
    let square = backend.spec().square_input && w != h;
    let raw = if square {
        let padded = image.pad_to_square();
        let out = backend.estimate_raw(&padded, view)?;
        check_dims(&out, padded.dims())?;
        out.cropped(crate::raster::Rect::new(0, 0, w, h))
            .expect("padded output contains the original extent")
    } else {
        let out = backend.estimate_raw(image, view)?;
        check_dims(&out, (w, h))?;
        out
    };
    Ok(raw.normalized())
}

fn check_dims(out: &DepthMap, expected: (usize, usize)) -> Result<(), EstimateError> {
    if out.dims() != expected {
        return Err(EstimateError::DimensionMismatch {
            expected,
            got: out.dims(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed {
        spec: EstimatorSpec,
        out: Option<(usize, usize)>,
    }

    impl DepthBackend for Fixed {
        fn spec(&self) -> &EstimatorSpec {
            &self.spec
        }

        fn estimate_raw(
            &self,
            image: &RasterImage,
            _view: ViewRegion,
        ) -> Result<DepthMap, EstimateError> {
            let (w, h) = self.out.unwrap_or(image.dims());
            Ok(DepthMap::from_fn(w, h, |x, y| 3.0 + x as f32 - 2.0 * y as f32))
        }
    }

    fn fixed(out: Option<(usize, usize)>, square: bool) -> Fixed {
        let mut spec = EstimatorSpec::new("fixed", 384);
        spec.square_input = square;
        Fixed { spec, out }
    }

    #[test]
    fn output_is_normalized_and_sized() {
        let img = RasterImage::filled(40, 33, 3, 0.5);
        let d = estimate(&fixed(None, false), &img, ViewRegion::FULL).unwrap();
        assert_eq!(d.dims(), (40, 33));
        assert_eq!(d.min_max(), (0.0, 1.0));
    }

    #[test]
    fn square_backends_get_padded_requests() {
        let img = RasterImage::filled(64, 40, 3, 0.5);
        let d = estimate(&fixed(None, true), &img, ViewRegion::FULL).unwrap();
        assert_eq!(d.dims(), (64, 40));
    }

    #[test]
    fn contract_violations_are_typed() {
        let img = RasterImage::filled(40, 40, 3, 0.5);
        assert!(matches!(
            estimate(&fixed(Some((10, 10)), false), &img, ViewRegion::FULL),
            Err(EstimateError::DimensionMismatch {
                expected: (40, 40),
                got: (10, 10)
            })
        ));
        let tiny = RasterImage::filled(31, 40, 3, 0.5);
        assert!(matches!(
            estimate(&fixed(None, false), &tiny, ViewRegion::FULL),
            Err(EstimateError::InvalidRequest(_))
        ));
    }

    #[test]
    #[should_panic]
    fn receptive_must_be_on_grid() {
        EstimatorSpec::new("x", 100);
    }
}
