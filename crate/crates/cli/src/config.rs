//! Layered configuration: defaults < key=value file < `DEPTHBOOST_*`
//! environment < command-line flags.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use depthboost::estimator::OracleParams;
use depthboost::merging::MergeParams;
use depthboost::metrics::MetricConfig;
use depthboost::pipeline::{BoostConfig, TilingParams};

pub const ENV_PREFIX: &str = "DEPTHBOOST_";

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "backend",
    "backend.timeout",
    "merger",
    "receptive",
    "x_percent",
    "upsample_cap",
    "rmax",
    "merge.radius",
    "merge.eps",
    "merge.merge_res",
    "feather_band",
    "patch.stride_ratio",
    "patch.expand_step",
    "patches",
    "metrics.pairs",
    "metrics.sigma",
    "metrics.slic_k",
    "metrics.disc_thresh",
    "metrics.align",
    "workers",
    "seed",
    "strict",
    "oracle.blur",
    "oracle.amplitude",
    "oracle.wavelength",
    "scene.width",
    "scene.height",
    "scene.density",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: String, line: usize },
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "command", rename_all = "lowercase")]
pub enum BackendChoice {
    Synthetic,
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "command", rename_all = "lowercase")]
pub enum MergerChoice {
    Analytic,
    External(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub backend: BackendChoice,
    /// Seconds before an external backend call is abandoned.
    pub backend_timeout: f64,
    pub merger: MergerChoice,
    pub receptive: usize,
    pub x_percent: f64,
    pub upsample_cap: f64,
    pub rmax: usize,
    pub merge: MergeParams,
    pub feather_band: f64,
    pub tiling: TilingParams,
    pub patches: bool,
    pub metrics: MetricConfig,
    pub workers: usize,
    pub seed: u64,
    pub strict: bool,
    pub oracle: OracleParams,
    pub scene: SceneConfig,
}

impl Default for Config {
    fn default() -> Self {
        let boost = BoostConfig::default();
        Self {
            backend: BackendChoice::Synthetic,
            backend_timeout: 300.0,
            merger: MergerChoice::Analytic,
            receptive: 384,
            x_percent: boost.x_percent,
            upsample_cap: boost.upsample_cap,
            rmax: boost.rmax,
            merge: MergeParams::default(),
            feather_band: boost.feather_band,
            tiling: boost.tiling,
            patches: true,
            metrics: MetricConfig::default(),
            workers: boost.workers,
            seed: 0,
            strict: false,
            oracle: OracleParams::default(),
            scene: SceneConfig {
                width: 512,
                height: 384,
                density: 0.5,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, value, "expected a boolean")),
    }
}

fn positive(key: &str, value: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, value, "must be positive"))
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "backend" => {
                self.backend = match v.split_once(':') {
                    _ if v == "synthetic" => BackendChoice::Synthetic,
                    Some(("external", cmd)) if !cmd.trim().is_empty() => {
                        BackendChoice::External(cmd.trim().into())
                    }
                    _ => return Err(invalid(key, value, "expected synthetic or external:CMD")),
                }
            }
            "backend.timeout" => self.backend_timeout = positive(key, value, parse(key, v)?)?,
            "merger" => {
                self.merger = match v.split_once(':') {
                    _ if v == "analytic" => MergerChoice::Analytic,
                    Some(("merge-external" | "external", cmd)) if !cmd.trim().is_empty() => {
                        MergerChoice::External(cmd.trim().into())
                    }
                    _ => {
                        return Err(invalid(key, value, "expected analytic or merge-external:CMD"))
                    }
                }
            }
            "receptive" => {
                let r: usize = parse(key, v)?;
                if r < 32 || r % 32 != 0 {
                    return Err(invalid(key, value, "must be a multiple of 32, at least 32"));
                }
                self.receptive = r;
            }
            "x_percent" => {
                let x: f64 = parse(key, v)?;
                if !(0.0..1.0).contains(&x) {
                    return Err(invalid(key, value, "must lie in [0, 1)"));
                }
                self.x_percent = x;
            }
            "upsample_cap" => self.upsample_cap = positive(key, value, parse(key, v)?)?,
            "rmax" => self.rmax = parse(key, v)?,
            "merge.radius" => {
                let r: usize = parse(key, v)?;
                if r == 0 {
                    return Err(invalid(key, value, "must be at least 1"));
                }
                self.merge.radius = r;
            }
            "merge.eps" => self.merge.eps = positive(key, value, parse(key, v)?)?,
            "merge.merge_res" => {
                self.merge.merge_res = match v {
                    "native" | "none" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "feather_band" => {
                let b: f64 = parse(key, v)?;
                if !(b > 0.0 && b < 0.5) {
                    return Err(invalid(key, value, "must lie in (0, 0.5)"));
                }
                self.feather_band = b;
            }
            "patch.stride_ratio" => self.tiling.stride_ratio = positive(key, value, parse(key, v)?)?,
            "patch.expand_step" => self.tiling.expand_step = parse(key, v)?,
            "patches" => self.patches = parse_bool(key, v)?,
            "metrics.pairs" => self.metrics.pairs = parse(key, v)?,
            "metrics.sigma" => self.metrics.sigma = parse(key, v)?,
            "metrics.slic_k" => {
                self.metrics.slic_k = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "metrics.disc_thresh" => self.metrics.disc_thresh = positive(key, value, parse(key, v)?)?,
            "metrics.align" => self.metrics.align = parse_bool(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "strict" => self.strict = parse_bool(key, v)?,
            "oracle.blur" => {
                let b: f64 = parse(key, v)?;
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(invalid(key, value, "must be non-negative"));
                }
                self.oracle.detail_sigma_scene = b;
            }
            "oracle.amplitude" => {
                let a: f64 = parse(key, v)?;
                if !(0.0..0.5).contains(&a) {
                    return Err(invalid(key, value, "must lie in [0, 0.5)"));
                }
                self.oracle.artifact_amplitude = a;
            }
            "oracle.wavelength" => self.oracle.artifact_wavelength = positive(key, value, parse(key, v)?)?,
            "scene.width" | "scene.height" => {
                let n: usize = parse(key, v)?;
                if n < 32 {
                    return Err(invalid(key, value, "must be at least 32"));
                }
                if key == "scene.width" {
                    self.scene.width = n;
                } else {
                    self.scene.height = n;
                }
            }
            "scene.density" => {
                let d: f64 = parse(key, v)?;
                if !(0.0..=1.0).contains(&d) {
                    return Err(invalid(key, value, "must lie in [0, 1]"));
                }
                self.scene.density = d;
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str, path: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                path: path.into(),
                line: i + 1,
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    /// Applies `DEPTHBOOST_<KEY>` variables, dots becoming underscores.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        for key in KEYS {
            if let Some(v) = lookup(&env_name(key)) {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| invalid("--set", item, "expected key=value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn boost_config(&self) -> BoostConfig {
        BoostConfig {
            x_percent: self.x_percent,
            upsample_cap: self.upsample_cap,
            rmax: self.rmax,
            feather_band: self.feather_band,
            tiling: self.tiling,
            workers: self.workers,
            strict: self.strict,
            patches_enabled: self.patches,
            debug_dir: None,
        }
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            seed: self.seed,
            ..self.metrics
        }
    }

    pub fn oracle_params(&self) -> OracleParams {
        OracleParams {
            seed: self.seed,
            ..self.oracle
        }
    }
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "_"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    // Three distinct valid values per key, none equal to the default.
    fn samples(key: &str) -> [&'static str; 3] {
        match key {
            "backend" => ["external:a {in} {out}", "external:b {in} {out}", "external:c {in} {out}"],
            "merger" => ["merge-external:a {low} {high} {out}", "merge-external:b {low} {high} {out}", "merge-external:c {low} {high} {out}"],
            "receptive" => ["256", "320", "448"],
            "x_percent" | "feather_band" | "scene.density" => ["0.11", "0.22", "0.33"],
            "oracle.amplitude" => ["0.11", "0.22", "0.33"],
            "patches" | "metrics.align" => ["false", "no", "off"],
            "strict" => ["true", "yes", "on"],
            "merge.merge_res" => ["512", "native", "768"],
            "metrics.slic_k" => ["10", "20", "30"],
            _ => ["41", "42", "43"],
        }
    }

    fn load(file: Option<&str>, env: &HashMap<String, String>, flags: &[String]) -> Config {
        let mut c = Config::default();
        if let Some(text) = file {
            c.apply_file_text(text, "test.conf").unwrap();
        }
        c.apply_env(|k| env.get(k).cloned()).unwrap();
        c.apply_overrides(flags.iter().map(String::as_str)).unwrap();
        c
    }

    fn with(key: &str, value: &str) -> Config {
        let mut c = Config::default();
        c.set(key, value).unwrap();
        c
    }

    #[test]
    fn precedence_holds_for_every_key() {
        for key in KEYS {
            let [f, e, g] = samples(key);
            let file = format!("{key} = {f}\n");
            let env = HashMap::from([(env_name(key), e.to_string())]);
            let flags = vec![format!("{key}={g}")];
            let none = HashMap::new();
            assert_eq!(load(Some(&file), &env, &flags), with(key, g), "{key}: flag");
            assert_eq!(load(Some(&file), &env, &[]), with(key, e), "{key}: env");
            assert_eq!(load(Some(&file), &none, &[]), with(key, f), "{key}: file");
            assert_eq!(load(None, &none, &[]), Config::default(), "{key}: default");
            assert_ne!(with(key, f), Config::default(), "{key}: sample equals default");
        }
    }

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.receptive, 384);
        assert_eq!((c.x_percent, c.upsample_cap, c.rmax), (0.2, 3.0, 3000));
        assert_eq!((c.merge.radius, c.merge.eps, c.merge.merge_res), (48, 1e-4, Some(1024)));
        assert_eq!(c.feather_band, 0.15);
        assert_eq!((c.tiling.stride_ratio, c.tiling.expand_step), (2.0 / 3.0, 32));
    }

    #[test]
    fn file_syntax() {
        let mut c = Config::default();
        c.apply_file_text("# comment\n\nx_percent = 0.3 # trailing\nmerge.radius=12\n", "f")
            .unwrap();
        assert_eq!((c.x_percent, c.merge.radius), (0.3, 12));
        assert_eq!(
            c.apply_file_text("x_percent 0.3\n", "f"),
            Err(ConfigError::Syntax { path: "f".into(), line: 1 })
        );
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = Config::default();
        assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        for (k, v) in [
            ("receptive", "100"),
            ("x_percent", "1.0"),
            ("feather_band", "0.5"),
            ("backend", "magic"),
            ("merger", "external:"),
            ("oracle.amplitude", "0.6"),
            ("strict", "maybe"),
            ("merge.radius", "0"),
        ] {
            assert!(matches!(c.set(k, v), Err(ConfigError::InvalidValue { .. })), "{k}={v}");
        }
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("x_percent"), "DEPTHBOOST_X_PERCENT");
        assert_eq!(env_name("merge.radius"), "DEPTHBOOST_MERGE_RADIUS");
    }
}
