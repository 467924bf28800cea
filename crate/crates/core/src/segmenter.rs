//! Invoking an external mask generator and collecting its bundle.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::bundle::{ingest_bundle, BundleError, MANIFEST};

/// Environment variable that may name the segmenter executable.
pub const SEGMENTER_ENV: &str = "CRATER_SEGMENTER";

#[derive(Debug, Error)]
pub enum SegmenterError {
    #[error("invalid segmenter spec: {0}")]
    InvalidSpec(String),
    #[error("failed to start {exe}: {source}")]
    Spawn {
        exe: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("segmenter exited with {status}: {stderr}")]
    ProcessFailure { status: String, stderr: String },
    #[error("segmenter exceeded the {0:?} timeout")]
    Timeout(Duration),
    #[error("segmenter produced no valid bundle: {0}")]
    InvalidOutput(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmenterKind {
    /// `path` is an existing bundle directory.
    #[default]
    BundleDir,
    /// `path` is an executable run once per image.
    Subprocess,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterSpec {
    pub kind: SegmenterKind,
    pub path: PathBuf,
    /// Arguments with `{input}` and `{output}` placeholders.
    pub args_template: Vec<String>,
    pub timeout: Duration,
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        Self {
            kind: SegmenterKind::BundleDir,
            path: PathBuf::new(),
            args_template: vec!["--image".into(), "{input}".into(), "--out".into(), "{output}".into()],
            timeout: Duration::from_secs(600),
        }
    }
}

impl SegmenterSpec {
    pub fn subprocess(exe: impl Into<PathBuf>, args: &[&str], timeout: Duration) -> Self {
        Self {
            kind: SegmenterKind::Subprocess,
            path: exe.into(),
            args_template: args.iter().map(|s| s.to_string()).collect(),
            timeout,
        }
    }

    /// The executable: `path`, or `$CRATER_SEGMENTER` when `path` is empty.
    pub fn executable(&self) -> Option<PathBuf> {
        if !self.path.as_os_str().is_empty() {
            return Some(self.path.clone());
        }
        std::env::var_os(SEGMENTER_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    }

    pub fn validate(&self) -> Result<(), SegmenterError> {
        if self.kind == SegmenterKind::Subprocess {
            if self.executable().is_none() {
                return Err(SegmenterError::InvalidSpec(format!(
                    "no executable path (set segmenter.path or {SEGMENTER_ENV})"
                )));
            }
            for placeholder in ["{input}", "{output}"] {
                if !self.args_template.iter().any(|a| a.contains(placeholder)) {
                    return Err(SegmenterError::InvalidSpec(format!(
                        "args template lacks the {placeholder} placeholder"
                    )));
                }
            }
            if self.timeout.is_zero() {
                return Err(SegmenterError::InvalidSpec("timeout must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn render_args(&self, input: &Path, output: &Path) -> Vec<String> {
        let (i, o) = (input.to_string_lossy(), output.to_string_lossy());
        self.args_template
            .iter()
            .map(|a| a.replace("{input}", &i).replace("{output}", &o))
            .collect()
    }
}

fn drain(mut pipe: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs the segmenter on `image` and returns the bundle directory.
///
/// For [`SegmenterKind::BundleDir`] the configured directory is returned as
/// is. Subprocesses write into `workdir/bundle`; success requires exit code 0
/// and a manifest that parses.
pub fn run_segmenter(spec: &SegmenterSpec, image: &Path, workdir: &Path) -> Result<PathBuf, SegmenterError> {
    spec.validate()?;
    if spec.kind == SegmenterKind::BundleDir {
        if !spec.path.join(MANIFEST).is_file() {
            return Err(SegmenterError::InvalidOutput(format!(
                "{} has no {MANIFEST}",
                spec.path.display()
            )));
        }
        return Ok(spec.path.clone());
    }
    if !image.is_file() {
        return Err(SegmenterError::InvalidSpec(format!("image {} does not exist", image.display())));
    }
    let exe = spec.executable().expect("validated");
    let out_dir = workdir.join("bundle");
    std::fs::create_dir_all(&out_dir)?;

    let mut child = Command::new(&exe)
        .args(spec.render_args(image, &out_dir))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| SegmenterError::Spawn { exe: exe.clone(), source })?;
    let stdout = drain(child.stdout.take().expect("piped"));
    let stderr = drain(child.stderr.take().expect("piped"));

    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= spec.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SegmenterError::Timeout(spec.timeout));
        }
        thread::sleep(Duration::from_millis(10));
    };
    let _ = stdout.join();
    let stderr = stderr.join().unwrap_or_default();
    if !status.success() {
        return Err(SegmenterError::ProcessFailure {
            status: status.to_string(),
            stderr: stderr.trim_end().to_string(),
        });
    }
    match ingest_bundle(&out_dir) {
        Ok(_) => Ok(out_dir),
        Err(e @ (BundleError::ManifestMissing(_) | BundleError::Json(_) | BundleError::SchemaViolation { .. })) => {
            Err(SegmenterError::InvalidOutput(e.to_string()))
        }
        Err(e) => Err(SegmenterError::InvalidOutput(e.to_string())),
    }
}
