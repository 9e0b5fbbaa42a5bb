//! Whole-image double estimation, context-driven patch selection and ordered
//! feathered compositing.

mod patches;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::context::{
    compute_context_map, find_resolution, influence_ratio, reference_scale, target_resolution,
    ContextMap, ResolutionPlan, SearchBounds,
};
use crate::estimator::{estimate, DepthBackend, EstimateError, ViewRegion};
use crate::merging::{composite_patch, feather_mask, MergeError, Merger};
use crate::raster::io::{save_depth, PfmError};
use crate::raster::{DepthMap, RasterImage, Rect};

pub use patches::{grid_positions, select_patches, PatchCandidate, PatchSelection, TilingParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoostConfig {
    pub x_percent: f64,
    pub upsample_cap: f64,
    pub rmax: usize,
    pub feather_band: f64,
    pub tiling: TilingParams,
    /// Patch-estimation worker threads (0 = rayon default).
    pub workers: usize,
    /// Abort on the first failing patch instead of skipping it.
    pub strict: bool,
    pub patches_enabled: bool,
    #[serde(skip)]
    pub debug_dir: Option<PathBuf>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            x_percent: 0.2,
            upsample_cap: 3.0,
            rmax: 3000,
            feather_band: 0.15,
            tiling: TilingParams::default(),
            workers: 0,
            strict: false,
            patches_enabled: true,
            debug_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    /// `(stage, milliseconds)` in execution order.
    pub timings_ms: Vec<(String, f64)>,
    pub backend_calls: usize,
    /// Indices (in merge order) of patches whose estimation failed.
    pub skipped_patches: Vec<usize>,
}

impl Provenance {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .push((stage.to_string(), start.elapsed().as_secs_f64() * 1e3));
        out
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Backend {
        stage: String,
        #[source]
        source: EstimateError,
        provenance: Box<Provenance>,
    },
    #[error("merge failed: {0}")]
    Merge(#[from] MergeError),
    #[error("debug dump failed: {0}")]
    Debug(#[from] PfmError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct DoubleEstimate {
    pub low: DepthMap,
    /// `None` when `rx` equals the training size and no second call was made.
    pub high: Option<DepthMap>,
    /// Result at `rx`.
    pub merged: DepthMap,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoostResult {
    #[serde(skip)]
    pub depth: DepthMap,
    pub plan: ResolutionPlan,
    pub target: (usize, usize),
    pub influence_ratio: f64,
    pub c_whole: f64,
    pub tiles: usize,
    /// Patches actually composited, in merge order.
    pub patches: Vec<PatchCandidate>,
    pub provenance: Provenance,
}

struct Calls<'a> {
    backend: &'a dyn DepthBackend,
    count: AtomicUsize,
}

impl Calls<'_> {
    fn run(&self, image: &RasterImage, view: ViewRegion) -> Result<DepthMap, EstimateError> {
        self.count.fetch_add(1, Ordering::Relaxed);
        estimate(self.backend, image, view)
    }
}

fn dump(dir: Option<&Path>, name: &str, depth: &DepthMap) -> Result<(), PfmError> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        save_depth(dir.join(format!("{name}.pfm")), depth)?;
    }
    Ok(())
}

fn double_with(
    calls: &Calls,
    img: &RasterImage,
    plan: &ResolutionPlan,
    merger: &dyn Merger,
) -> Result<DoubleEstimate, (String, EstimateError)> {
    let (lw, lh) = plan.training_dims();
    let low = calls
        .run(&img.resize_bilinear(lw, lh), ViewRegion::FULL)
        .map_err(|e| ("low-resolution estimate".to_string(), e))?;
    if plan.rx == (lw, lh) {
        return Ok(DoubleEstimate {
            merged: low.clone(),
            low,
            high: None,
        });
    }
    let high = calls
        .run(&img.resize_bilinear(plan.rx.0, plan.rx.1), ViewRegion::FULL)
        .map_err(|e| ("high-resolution estimate".to_string(), e))?;
    let merged = merger
        .merge(&low, &high, plan.rx)
        .map_err(|e| ("double-estimate merge".to_string(), merge_as_estimate(e)))?;
    Ok(DoubleEstimate {
        low,
        high: Some(high),
        merged,
    })
}

fn merge_as_estimate(e: MergeError) -> EstimateError {
    match e {
        MergeError::External(inner) => inner,
        other => EstimateError::InvalidRequest(other.to_string()),
    }
}

/// Low estimate at the training size, high estimate at `plan.rx`, merged at `rx`.
pub fn double_estimate(
    img: &RasterImage,
    backend: &dyn DepthBackend,
    plan: &ResolutionPlan,
    merger: &dyn Merger,
) -> Result<DoubleEstimate, EstimateError> {
    let calls = Calls {
        backend,
        count: AtomicUsize::new(0),
    };
    double_with(&calls, img, plan, merger).map_err(|(_, e)| e)
}

/// Context map and resolution plan for `img`.
pub fn analyze(img: &RasterImage, receptive: usize, cfg: &BoostConfig) -> (ContextMap, ResolutionPlan) {
    let scale = reference_scale(img.dims(), cfg.upsample_cap, cfg.rmax);
    let ctx = compute_context_map(img, scale);
    let plan = find_resolution(&ctx, cfg.x_percent, img.dims(), bounds(receptive, cfg));
    (ctx, plan)
}

pub fn bounds(receptive: usize, cfg: &BoostConfig) -> SearchBounds {
    SearchBounds {
        training_res: receptive,
        upsample_cap: cfg.upsample_cap,
        rmax: cfg.rmax,
    }
}

/// Normalized view covering `rect` of a `canvas`-sized grid.
fn view_of(rect: Rect, canvas: (usize, usize)) -> ViewRegion {
    let (cw, ch) = (canvas.0 as f64, canvas.1 as f64);
    ViewRegion::new(
        rect.x as f64 / cw,
        rect.y as f64 / ch,
        (rect.x + rect.w) as f64 / cw,
        (rect.y + rect.h) as f64 / ch,
    )
}

// Per-patch double estimate at twice the receptive size.
fn patch_double(
    calls: &Calls,
    img: &RasterImage,
    merger: &dyn Merger,
    view: ViewRegion,
    receptive: usize,
) -> Result<(DepthMap, DepthMap, DepthMap), EstimateError> {
    let (iw, ih) = (img.width() as f64, img.height() as f64);
    let crop = |side: usize| {
        img.resize_region(
            view.x0 * iw,
            view.y0 * ih,
            (view.x1 - view.x0) * iw,
            (view.y1 - view.y0) * ih,
            side,
            side,
        )
    };
    let hi_side = 2 * receptive;
    let low = calls.run(&crop(receptive), view)?;
    let high = calls.run(&crop(hi_side), view)?;
    let merged = merger
        .merge(&low, &high, (hi_side, hi_side))
        .map_err(merge_as_estimate)?;
    Ok((low, high, merged))
}

/// Full pipeline: double-estimated base, K-adjusted target, then patch
/// estimates merged largest first with feathering.
pub fn boost(
    img: &RasterImage,
    backend: &dyn DepthBackend,
    merger: &dyn Merger,
    cfg: &BoostConfig,
) -> Result<BoostResult, PipelineError> {
    let receptive = backend.spec().receptive;
    let calls = Calls {
        backend,
        count: AtomicUsize::new(0),
    };
    let debug_dir = cfg.debug_dir.as_deref();
    let mut prov = Provenance::default();

    let (ctx, plan) = prov.time("context", || analyze(img, receptive, cfg));
    debug!("plan: r0 {:?}, rx {:?}, degenerate {}", plan.r0, plan.rx, plan.degenerate);

    let fail = |stage: String, source: EstimateError, prov: &Provenance| PipelineError::Backend {
        stage,
        source,
        provenance: Box::new(Provenance {
            backend_calls: calls.count.load(Ordering::Relaxed),
            ..prov.clone()
        }),
    };

    let base = prov
        .time("double_estimate", || double_with(&calls, img, &plan, merger))
        .map_err(|(stage, e)| fail(stage, e, &prov))?;
    dump(debug_dir, "base_low", &base.low)?;
    if let Some(high) = &base.high {
        dump(debug_dir, "base_high", high)?;
    }
    dump(debug_dir, "base_merged", &base.merged)?;

    let k = influence_ratio(&ctx, receptive);
    if !cfg.patches_enabled {
        prov.backend_calls = calls.count.load(Ordering::Relaxed);
        return Ok(BoostResult {
            depth: base.merged,
            target: plan.rx,
            plan,
            influence_ratio: k,
            c_whole: ctx.context_percentage(),
            tiles: 0,
            patches: Vec::new(),
            provenance: prov,
        });
    }

    let target = target_resolution(plan.rx, k, cfg.rmax);
    let mut canvas = base.merged.resized(target.0, target.1);
    let selection = prov.time("select_patches", || {
        select_patches(&ctx, target, receptive, cfg.tiling)
    });
    debug!(
        "target {:?}, K {:.3}, C_whole {:.4}, {} of {} tiles kept",
        target,
        k,
        selection.c_whole,
        selection.patches.len(),
        selection.tiles
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let start = Instant::now();
    let mut merged_patches = Vec::new();
    // Estimate a bounded batch in parallel, composite it in order.
    let batch = 4 * pool.current_num_threads().max(1);
    for (chunk_idx, chunk) in selection.patches.chunks(batch).enumerate() {
        let estimates: Vec<_> = pool.install(|| {
            chunk
                .par_iter()
                .map(|p| patch_double(&calls, img, merger, view_of(p.rect, target), receptive))
                .collect()
        });
        for (offset, (patch, est)) in chunk.iter().zip(estimates).enumerate() {
            let idx = chunk_idx * batch + offset;
            let (low, high, double) = match est {
                Ok(v) => v,
                Err(e) if cfg.strict => {
                    return Err(fail(format!("patch {idx} at {:?}", patch.rect), e, &prov));
                }
                Err(e) => {
                    warn!("skipping patch {idx} at {:?}: {e}", patch.rect);
                    prov.skipped_patches.push(idx);
                    continue;
                }
            };
            let side = patch.rect.w;
            let base_crop = canvas.cropped(patch.rect).expect("patches lie inside the canvas");
            let merged = merger.merge(&base_crop, &double, (side, side))?;
            composite_patch(
                &mut canvas,
                &merged,
                patch.rect,
                &feather_mask(side, side, cfg.feather_band),
            )?;
            if debug_dir.is_some() {
                dump(debug_dir, &format!("patch_{idx:03}_low"), &low)?;
                dump(debug_dir, &format!("patch_{idx:03}_high"), &high)?;
                dump(debug_dir, &format!("patch_{idx:03}_merged"), &merged)?;
            }
            merged_patches.push(*patch);
        }
    }
    prov.timings_ms
        .push(("patches".to_string(), start.elapsed().as_secs_f64() * 1e3));
    prov.backend_calls = calls.count.load(Ordering::Relaxed);

    Ok(BoostResult {
        depth: canvas,
        plan,
        target,
        influence_ratio: k,
        c_whole: selection.c_whole,
        tiles: selection.tiles,
        patches: merged_patches,
        provenance: prov,
    })
}
