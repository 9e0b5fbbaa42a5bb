//! Out-of-process backends driven by a command template.
//!
//! Estimation: `{in}` is replaced by an RGB PNG path and `{out}` by the PFM
//! path the process must write. Merging: `{low}`, `{high}` and `{out}` are
//! PFM paths. Each call gets its own temporary directory.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{DepthBackend, EstimateError, EstimatorSpec, ViewRegion};
use crate::raster::io::{load_depth, save_depth, save_image, PfmError};
use crate::raster::{DepthMap, RasterImage};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);
const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
struct Template(Vec<String>);

impl Template {
    fn parse(cmd: &str, required: &[&str]) -> Result<Self, EstimateError> {
        let words = shlex::split(cmd)
            .ok_or_else(|| EstimateError::Template(format!("unbalanced quoting in {cmd:?}")))?;
        if words.is_empty() {
            return Err(EstimateError::Template("empty command".into()));
        }
        for p in required {
            if !words.iter().any(|w| w.contains(p)) {
                return Err(EstimateError::Template(format!("missing {p} placeholder")));
            }
        }
        Ok(Self(words))
    }

    fn command(&self, subs: &[(&str, &Path)]) -> Command {
        let args: Vec<String> = self
            .0
            .iter()
            .map(|w| {
                subs.iter().fold(w.clone(), |acc, (key, path)| {
                    acc.replace(key, &path.to_string_lossy())
                })
            })
            .collect();
        let mut cmd = Command::new(&args[0]);
        cmd.args(&args[1..]);
        cmd
    }
}

fn run(mut cmd: Command, timeout: Duration) -> Result<(), EstimateError> {
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(EstimateError::Spawn)?;
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    });
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EstimateError::Timeout(timeout));
        }
        thread::sleep(POLL);
    };
    let stderr = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(EstimateError::NonZeroExit {
            status: status.code(),
            stderr,
        });
    }
    Ok(())
}

fn read_output(path: &Path, expected: (usize, usize)) -> Result<DepthMap, EstimateError> {
    if !path.exists() {
        return Err(EstimateError::MissingOutput(path.to_path_buf()));
    }
    let depth = load_depth(path).map_err(|e| match e {
        PfmError::Io(io) => EstimateError::Io(io),
        other => EstimateError::MalformedOutput(other.to_string()),
    })?;
    if depth.dims() != expected {
        return Err(EstimateError::DimensionMismatch {
            expected,
            got: depth.dims(),
        });
    }
    Ok(depth)
}

/// Wraps any estimator executable following the `{in}` / `{out}` protocol.
#[derive(Debug)]
pub struct ExternalBackend {
    spec: EstimatorSpec,
    template: Template,
    timeout: Duration,
    serial: Mutex<()>,
}

impl ExternalBackend {
    pub fn new(cmd: &str, spec: EstimatorSpec) -> Result<Self, EstimateError> {
        Ok(Self {
            spec,
            template: Template::parse(cmd, &["{in}", "{out}"])?,
            timeout: DEFAULT_TIMEOUT,
            serial: Mutex::new(()),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// One protocol round trip; returns the process output as written.
    pub fn run_raw(&self, image: &RasterImage) -> Result<DepthMap, EstimateError> {
        let _guard = if self.spec.supports_concurrent {
            None
        } else {
            Some(self.serial.lock().unwrap_or_else(|p| p.into_inner()))
        };
        let dir = tempfile::tempdir()?;
        let input = dir.path().join("in.png");
        let output = dir.path().join("out.pfm");
        save_image(&input, image).map_err(|e| EstimateError::InvalidRequest(e.to_string()))?;
        run(
            self.template.command(&[("{in}", &input), ("{out}", &output)]),
            self.timeout,
        )?;
        read_output(&output, image.dims())
    }
}

impl DepthBackend for ExternalBackend {
    fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    fn estimate_raw(&self, image: &RasterImage, _view: ViewRegion) -> Result<DepthMap, EstimateError> {
        self.run_raw(image)
    }
}

/// Learned-merger hook following the `{low}` / `{high}` / `{out}` protocol.
#[derive(Debug, Clone)]
pub struct ExternalMergeCommand {
    template: Template,
    pub timeout: Duration,
}

impl ExternalMergeCommand {
    pub fn new(cmd: &str) -> Result<Self, EstimateError> {
        Ok(Self {
            template: Template::parse(cmd, &["{low}", "{high}", "{out}"])?,
            timeout: DEFAULT_TIMEOUT,
        })
    }
}

/// Runs the external merger on same-sized inputs and returns its normalized
/// output at that size.
pub fn external_merge(
    cmd: &ExternalMergeCommand,
    low: &DepthMap,
    high: &DepthMap,
) -> Result<DepthMap, EstimateError> {
    if low.dims() != high.dims() {
        return Err(EstimateError::InvalidRequest(format!(
            "merge inputs differ in size: {:?} vs {:?}",
            low.dims(),
            high.dims()
        )));
    }
    let dir = tempfile::tempdir()?;
    let paths: [PathBuf; 3] = ["low.pfm", "high.pfm", "out.pfm"].map(|n| dir.path().join(n));
    save_depth(&paths[0], low).map_err(pfm_io)?;
    save_depth(&paths[1], high).map_err(pfm_io)?;
    run(
        cmd.template.command(&[
            ("{low}", &paths[0]),
            ("{high}", &paths[1]),
            ("{out}", &paths[2]),
        ]),
        cmd.timeout,
    )?;
    Ok(read_output(&paths[2], low.dims())?.normalized())
}

fn pfm_io(e: PfmError) -> EstimateError {
    match e {
        PfmError::Io(io) => EstimateError::Io(io),
        other => EstimateError::MalformedOutput(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_requires_placeholders() {
        let spec = EstimatorSpec::new("x", 384);
        assert!(matches!(
            ExternalBackend::new("net --input {in}", spec.clone()),
            Err(EstimateError::Template(_))
        ));
        assert!(matches!(
            ExternalBackend::new("net '{in} {out}", spec.clone()),
            Err(EstimateError::Template(_))
        ));
        assert!(ExternalBackend::new("net --in={in} {out}", spec).is_ok());
        assert!(ExternalMergeCommand::new("m {low} {out}").is_err());
    }

    #[test]
    fn placeholders_substitute_inside_words() {
        let t = Template::parse("net --in={in} -o {out}", &["{in}", "{out}"]).unwrap();
        let cmd = t.command(&[("{in}", Path::new("/a.png")), ("{out}", Path::new("/b.pfm"))]);
        let args: Vec<_> = cmd.get_args().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(args, ["--in=/a.png", "-o", "/b.pfm"]);
    }
}
