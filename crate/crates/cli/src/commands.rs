//! Subcommand bodies. Each input is processed independently, so the image
//! loop runs on rayon and results come back in input order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use depthboost::context::uncovered_curve;
use depthboost::estimator::{
    generate_scene, DepthBackend, EstimateError, EstimatorSpec, ExternalBackend,
    ExternalMergeCommand, SceneSpec, SyntheticBackend,
};
use depthboost::merging::{AnalyticMerger, ExternalMerger, Merger};
use depthboost::metrics::{evaluate, MetricError, MetricReport};
use depthboost::pipeline::{analyze, boost, bounds, PipelineError};
use depthboost::raster::io::{
    load_depth, load_depth_png16, load_image, save_depth, save_depth_png16, save_image,
    ImageIoError, PfmError,
};
use depthboost::raster::{DepthMap, RasterImage};

use crate::colormap::colorize;
use crate::config::{BackendChoice, Config, ConfigError, MergerChoice};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Backend(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Backend(_) => "backend",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Debug(e) => CliError::Io {
                path: "debug dump".into(),
                message: e.to_string(),
            },
            e => CliError::Backend(e.to_string()),
        }
    }
}

fn backend_err(e: EstimateError) -> CliError {
    match e {
        EstimateError::Template(_) => CliError::Usage(e.to_string()),
        e => CliError::Backend(e.to_string()),
    }
}

fn metric_err(path: &Path, e: MetricError) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

/// One unit of work: a file on disk or a generated scene.
pub enum Input {
    Image(PathBuf),
    Scene(u64),
}

impl Input {
    pub fn stem(&self) -> String {
        match self {
            Input::Image(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into()),
            Input::Scene(seed) => format!("scene{seed}"),
        }
    }

    fn label(&self) -> String {
        match self {
            Input::Image(p) => p.display().to_string(),
            Input::Scene(seed) => format!("scene:{seed}"),
        }
    }
}

pub fn collect_inputs(images: &[PathBuf], seeds: &[u64]) -> Result<Vec<Input>, CliError> {
    if images.is_empty() && seeds.is_empty() {
        return Err(CliError::Usage("no inputs: pass image paths or --scene-seed".into()));
    }
    let mut inputs = Vec::new();
    for p in images {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input not found: {}", p.display())));
        }
        inputs.push(Input::Image(p.clone()));
    }
    inputs.extend(seeds.iter().map(|&s| Input::Scene(s)));
    Ok(inputs)
}

struct Loaded {
    image: RasterImage,
    scene: Option<(SceneSpec, DepthMap)>,
}

fn load(input: &Input, cfg: &Config) -> Result<Loaded, CliError> {
    match input {
        Input::Image(p) => Ok(Loaded {
            image: load_image(p).map_err(|e| image_err(p, e))?,
            scene: None,
        }),
        Input::Scene(seed) => {
            let spec = SceneSpec::random(*seed, cfg.scene.width, cfg.scene.height, cfg.scene.density);
            let (image, gt) = generate_scene(&spec);
            Ok(Loaded {
                image,
                scene: Some((spec, gt)),
            })
        }
    }
}

fn image_err(p: &Path, e: ImageIoError) -> CliError {
    match e {
        ImageIoError::Io(_) => CliError::io(p, e),
        // Undecodable input is a caller mistake, not an I/O fault.
        e => CliError::Usage(format!("{}: {e}", p.display())),
    }
}

fn make_backend(cfg: &Config, scene: Option<&SceneSpec>) -> Result<Box<dyn DepthBackend>, CliError> {
    match &cfg.backend {
        BackendChoice::Synthetic => {
            let scene = scene.ok_or_else(|| {
                CliError::Usage(
                    "the synthetic backend only runs on generated scenes (--scene-seed)".into(),
                )
            })?;
            Ok(Box::new(SyntheticBackend::new(
                scene.clone(),
                cfg.oracle_params(),
                cfg.receptive,
            )))
        }
        BackendChoice::External(cmd) => {
            let spec = EstimatorSpec::new("external", cfg.receptive);
            let b = ExternalBackend::new(cmd, spec)
                .map_err(backend_err)?
                .with_timeout(Duration::from_secs_f64(cfg.backend_timeout));
            Ok(Box::new(b))
        }
    }
}

pub fn make_merger(cfg: &Config) -> Result<Box<dyn Merger>, CliError> {
    match &cfg.merger {
        MergerChoice::Analytic => Ok(Box::new(AnalyticMerger { params: cfg.merge })),
        MergerChoice::External(cmd) => {
            let merge_res = cfg.merge.merge_res.ok_or_else(|| {
                CliError::Usage("an external merger needs a fixed merge.merge_res".into())
            })?;
            let mut command = ExternalMergeCommand::new(cmd).map_err(backend_err)?;
            command.timeout = Duration::from_secs_f64(cfg.backend_timeout);
            Ok(Box::new(ExternalMerger { command, merge_res }))
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn pfm_err(path: &Path, e: PfmError) -> CliError {
    match e {
        PfmError::Io(_) => CliError::io(path, e),
        e => CliError::Usage(format!("{}: {e}", path.display())),
    }
}

fn par_inputs<T: Send>(
    inputs: &[Input],
    f: impl Fn(&Input) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    inputs.par_iter().map(f).collect::<Vec<_>>().into_iter().collect()
}

/// `boost`, or the double-estimate-only variant when `patches` is off.
pub fn run_boost(
    cfg: &Config,
    out_dir: &Path,
    inputs: &[Input],
    debug_dir: Option<&Path>,
) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out_dir)?;
    let merger = make_merger(cfg)?;
    par_inputs(inputs, |input| {
        let stem = input.stem();
        let loaded = load(input, cfg)?;
        let backend = make_backend(cfg, loaded.scene.as_ref().map(|s| &s.0))?;
        let mut bcfg = cfg.boost_config();
        if let Some(d) = debug_dir {
            let d = d.join(&stem);
            create_dir(&d)?;
            bcfg.debug_dir = Some(d);
        }
        info!("{}: boosting {}x{}", input.label(), loaded.image.width(), loaded.image.height());
        let result = boost(&loaded.image, backend.as_ref(), merger.as_ref(), &bcfg)?;

        let metrics = match &loaded.scene {
            Some((_, gt)) => {
                let pred = result.depth.resized(gt.width(), gt.height());
                Some(evaluate(&pred, gt, &cfg.metric_config()).map_err(|e| {
                    CliError::Backend(format!("{}: metrics: {e}", input.label()))
                })?)
            }
            None => None,
        };

        let depth_path = out_dir.join(format!("{stem}_depth.pfm"));
        save_depth(&depth_path, &result.depth).map_err(|e| CliError::io(&depth_path, e))?;
        let png_path = out_dir.join(format!("{stem}_depth16.png"));
        save_depth_png16(&png_path, &result.depth).map_err(|e| CliError::io(&png_path, e))?;
        let preview_path = out_dir.join(format!("{stem}_preview.png"));
        save_image(&preview_path, &colorize(&result.depth))
            .map_err(|e| CliError::io(&preview_path, e))?;
        let report_path = out_dir.join(format!("{stem}_report.json"));
        let report = json!({
            "schema": REPORT_SCHEMA,
            "input": input.label(),
            "output": { "width": result.depth.width(), "height": result.depth.height() },
            "result": result,
            "metrics": metrics,
            "config": cfg,
        });
        write_json(&report_path, &report)?;
        Ok(depth_path)
    })
}

#[derive(Serialize)]
struct Analysis {
    schema: u32,
    input: String,
    original: (usize, usize),
    r0: (usize, usize),
    r20: (usize, usize),
    x_percent: f64,
    degenerate: bool,
    k: f64,
    target: (usize, usize),
    context_percentage: f64,
    reference: (usize, usize),
    /// `(maxdim, uncovered fraction)` per candidate.
    uncovered_curve: Vec<(usize, f64)>,
}

pub fn run_analyze(
    cfg: &Config,
    out_dir: &Path,
    inputs: &[Input],
    edges: bool,
) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out_dir)?;
    let bcfg = cfg.boost_config();
    par_inputs(inputs, |input| {
        let stem = input.stem();
        let loaded = load(input, cfg)?;
        let (ctx, plan) = analyze(&loaded.image, cfg.receptive, &bcfg);
        let k = depthboost::context::influence_ratio(&ctx, cfg.receptive);
        let analysis = Analysis {
            schema: REPORT_SCHEMA,
            input: input.label(),
            original: plan.original,
            r0: plan.r0,
            r20: plan.rx,
            x_percent: plan.x_percent,
            degenerate: plan.degenerate,
            k,
            target: depthboost::context::target_resolution(plan.rx, k, cfg.rmax),
            context_percentage: ctx.context_percentage(),
            reference: (ctx.ref_width(), ctx.ref_height()),
            uncovered_curve: uncovered_curve(&ctx, plan.original, bounds(cfg.receptive, &bcfg)),
        };
        let path = out_dir.join(format!("{stem}_analysis.json"));
        write_json(&path, &analysis)?;
        if edges {
            let e = ctx.edges();
            let data = e.bits().iter().flat_map(|&b| [if b { 1.0 } else { 0.0 }; 3]).collect();
            let img = RasterImage::new(e.width(), e.height(), 3, data).expect("binary data");
            let p = out_dir.join(format!("{stem}_edges.png"));
            save_image(&p, &img).map_err(|err| CliError::io(&p, err))?;
        }
        Ok(path)
    })
}

pub fn run_synth(cfg: &Config, out_dir: &Path, seeds: &[u64]) -> Result<Vec<PathBuf>, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Usage("synth needs at least one --scene-seed".into()));
    }
    create_dir(out_dir)?;
    let inputs: Vec<Input> = seeds.iter().map(|&s| Input::Scene(s)).collect();
    par_inputs(&inputs, |input| {
        let stem = input.stem();
        let Loaded { image, scene } = load(input, cfg)?;
        let (spec, gt) = scene.expect("generated input");
        let img_path = out_dir.join(format!("{stem}.png"));
        save_image(&img_path, &image).map_err(|e| CliError::io(&img_path, e))?;
        let gt_path = out_dir.join(format!("{stem}_gt.pfm"));
        save_depth(&gt_path, &gt).map_err(|e| CliError::io(&gt_path, e))?;
        write_json(&out_dir.join(format!("{stem}_spec.json")), &spec)?;
        Ok(img_path)
    })
}

#[derive(Debug, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub rmse: f64,
    pub delta125: f64,
    pub ord: f64,
    pub d3r: Option<f64>,
    pub ord_pairs: usize,
    pub d3r_pairs: usize,
}

impl EvalRow {
    fn new(name: String, r: &MetricReport) -> Self {
        Self {
            name,
            rmse: r.rmse,
            delta125: r.delta125,
            ord: r.ord,
            d3r: r.d3r,
            ord_pairs: r.pair_counts.ord_pairs,
            d3r_pairs: r.pair_counts.d3r_pairs,
        }
    }
}

fn load_any_depth(path: &Path) -> Result<DepthMap, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("input not found: {}", path.display())));
    }
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        load_depth_png16(path).map_err(|e| image_err(path, e))
    } else {
        load_depth(path).map_err(|e| pfm_err(path, e))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Scores each `pred gt` line of `manifest` (paths relative to it) and
/// writes `eval.csv` and `eval.json`; the last CSV row is the mean.
pub fn run_eval(cfg: &Config, manifest: &Path, out_dir: &Path) -> Result<Vec<EvalRow>, CliError> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| CliError::Usage(format!("{}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_whitespace().collect::<Vec<_>>()[..] {
            [p, g] => pairs.push((base.join(p), base.join(g))),
            _ => {
                return Err(CliError::Usage(format!(
                    "{}:{}: expected `pred gt`",
                    manifest.display(),
                    i + 1
                )))
            }
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("{}: empty manifest", manifest.display())));
    }
    create_dir(out_dir)?;
    let mcfg = cfg.metric_config();
    let rows: Vec<EvalRow> = pairs
        .par_iter()
        .map(|(p, g)| {
            let pred = load_any_depth(p)?;
            let gt = load_any_depth(g)?;
            let pred = pred.resized(gt.width(), gt.height());
            let report = evaluate(&pred, &gt, &mcfg).map_err(|e| metric_err(p, e))?;
            let name = p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            Ok(EvalRow::new(name, &report))
        })
        .collect::<Result<_, CliError>>()?;

    let aggregate = EvalRow {
        name: "mean".into(),
        rmse: mean(rows.iter().map(|r| r.rmse)).unwrap_or(f64::NAN),
        delta125: mean(rows.iter().map(|r| r.delta125)).unwrap_or(f64::NAN),
        ord: mean(rows.iter().map(|r| r.ord)).unwrap_or(f64::NAN),
        d3r: mean(rows.iter().filter_map(|r| r.d3r)),
        ord_pairs: rows.iter().map(|r| r.ord_pairs).sum(),
        d3r_pairs: rows.iter().map(|r| r.d3r_pairs).sum(),
    };

    let csv_path = out_dir.join("eval.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    for row in rows.iter().chain([&aggregate]) {
        w.serialize(row).map_err(|e| CliError::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    write_json(
        &out_dir.join("eval.json"),
        &json!({ "schema": REPORT_SCHEMA, "images": rows, "aggregate": aggregate, "metrics": mcfg }),
    )?;
    Ok(rows)
}
