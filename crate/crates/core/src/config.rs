//! Pipeline configuration: flat `key = value` lines with dotted sections.
//!
//! ```text
//! # shape thresholds
//! t_circ = 0.25
//! canny.sigma = 1.0
//! filters.center_tol_frac = 0.5
//! tiling.tile = 256x256
//! segmenter.kind = subprocess
//! segmenter.args = --image {input} --out {output}
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::edges::CannyParams;
use crate::postprocess::{FilterConfig, KeepPolicy};
use crate::segmenter::{SegmenterKind, SegmenterSpec};
use crate::shape::ShapeThresholds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Tile size and overlap; `None` runs on the full image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub tile_w: u32,
    pub tile_h: u32,
    /// Defaults to a quarter of the smaller tile side.
    pub overlap: Option<u32>,
}

impl TileSpec {
    pub fn overlap(&self) -> u32 {
        self.overlap.unwrap_or(self.tile_w.min(self.tile_h) / 4)
    }
}

impl FromStr for TileSpec {
    type Err = String;

    /// Parses `WxH` or `WxH+O`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (dims, overlap) = match s.split_once('+') {
            Some((d, o)) => (d, Some(o.trim().parse::<u32>().map_err(|e| format!("overlap `{o}`: {e}"))?)),
            None => (s, None),
        };
        let (tile_w, tile_h) = parse_dims(dims)?;
        Ok(TileSpec { tile_w, tile_h, overlap })
    }
}

/// Parses `WxH` into positive dimensions.
pub fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .trim()
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not of the form WxH"))?;
    let w: u32 = w.trim().parse().map_err(|e| format!("width `{w}`: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("height `{h}`: {e}"))?;
    if w == 0 || h == 0 {
        return Err(format!("`{s}` has a zero dimension"));
    }
    Ok((w, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub thresholds: ShapeThresholds<f64>,
    pub canny: CannyParams<f64>,
    pub filters: FilterConfig<f64>,
    pub tiling: Option<TileSpec>,
    pub segmenter: SegmenterSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: ShapeThresholds::default(),
            canny: CannyParams::default(),
            filters: FilterConfig::default(),
            tiling: None,
            segmenter: SegmenterSpec::default(),
        }
    }
}

const TIMEOUT_KEY: &str = "segmenter.timeout";

impl PipelineConfig {
    /// Parses config text over the defaults, then validates every section.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut overlap: Option<u32> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |message: String| ConfigError::BadValue {
                line,
                key: key.to_string(),
                message,
            };
            let num = || value.parse::<f64>().map_err(|e| bad(e.to_string()));
            match key {
                "t_circ" => cfg.thresholds.t_circ = num()?,
                "t_ell" => cfg.thresholds.t_ell = num()?,
                "max_axis_ratio" => cfg.thresholds.max_axis_ratio = num()?,
                "min_area_px" => cfg.thresholds.min_area_px = value.parse().map_err(|e| bad(format!("{e}")))?,
                "canny.sigma" => cfg.canny.sigma = num()?,
                "canny.low" => cfg.canny.low = num()?,
                "canny.high" => cfg.canny.high = num()?,
                "filters.min_quality" => cfg.filters.min_quality = num()?,
                "filters.min_stability" => cfg.filters.min_stability = num()?,
                "filters.max_axis_ratio" => cfg.filters.max_axis_ratio = num()?,
                "filters.center_tol_frac" => cfg.filters.center_tol_frac = num()?,
                "filters.keep_policy" => match value {
                    "KeepLarger" | "keep_larger" => cfg.filters.keep_policy = KeepPolicy::KeepLarger,
                    _ => return Err(bad("only KeepLarger is supported".into())),
                },
                "tiling.tile" => {
                    cfg.tiling = match value {
                        "none" | "off" => None,
                        v => Some(v.parse::<TileSpec>().map_err(bad)?),
                    }
                }
                "tiling.overlap" => overlap = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "segmenter.kind" => {
                    cfg.segmenter.kind = match value {
                        "bundle" | "bundle_dir" => SegmenterKind::BundleDir,
                        "subprocess" => SegmenterKind::Subprocess,
                        _ => return Err(bad("expected `bundle` or `subprocess`".into())),
                    }
                }
                "segmenter.path" => cfg.segmenter.path = PathBuf::from(value),
                "segmenter.args" => cfg.segmenter.args_template = value.split_whitespace().map(String::from).collect(),
                TIMEOUT_KEY => {
                    let secs = num()?;
                    if !(secs > 0.0 && secs.is_finite()) {
                        return Err(bad("timeout must be a positive number of seconds".into()));
                    }
                    cfg.segmenter.timeout = Duration::from_secs_f64(secs);
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_string(),
                    })
                }
            }
        }
        if let Some(o) = overlap {
            match cfg.tiling.as_mut() {
                Some(t) => t.overlap = Some(o),
                None => return Err(ConfigError::Invalid("tiling.overlap given without tiling.tile".into())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.thresholds.validate().map_err(|e| invalid(&e))?;
        self.canny.validate().map_err(|e| invalid(&e))?;
        self.filters.validate().map_err(|e| invalid(&e))?;
        if let Some(t) = self.tiling {
            if t.overlap() >= t.tile_w.min(t.tile_h) {
                return Err(ConfigError::Invalid(format!(
                    "tiling.overlap {} must be smaller than the tile {}x{}",
                    t.overlap(),
                    t.tile_w,
                    t.tile_h
                )));
            }
        }
        if self.segmenter.kind == SegmenterKind::Subprocess {
            self.segmenter.validate().map_err(|e| invalid(&e))?;
        }
        Ok(())
    }

    /// Every setting as sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        let t = &self.thresholds;
        let f = &self.filters;
        let s = &self.segmenter;
        let mut lines = vec![
            format!("t_circ = {}", t.t_circ),
            format!("t_ell = {}", t.t_ell),
            format!("max_axis_ratio = {}", t.max_axis_ratio),
            format!("min_area_px = {}", t.min_area_px),
            format!("canny.sigma = {}", self.canny.sigma),
            format!("canny.low = {}", self.canny.low),
            format!("canny.high = {}", self.canny.high),
            format!("filters.min_quality = {}", f.min_quality),
            format!("filters.min_stability = {}", f.min_stability),
            format!("filters.max_axis_ratio = {}", f.max_axis_ratio),
            format!("filters.center_tol_frac = {}", f.center_tol_frac),
            format!("filters.keep_policy = {:?}", f.keep_policy),
            format!(
                "segmenter.kind = {}",
                match s.kind {
                    SegmenterKind::BundleDir => "bundle",
                    SegmenterKind::Subprocess => "subprocess",
                }
            ),
            format!("segmenter.path = {}", s.path.display()),
            format!("segmenter.args = {}", s.args_template.join(" ")),
            format!("{TIMEOUT_KEY} = {}", s.timeout.as_secs_f64()),
        ];
        match self.tiling {
            Some(ts) => {
                lines.push(format!("tiling.tile = {}x{}", ts.tile_w, ts.tile_h));
                lines.push(format!("tiling.overlap = {}", ts.overlap()));
            }
            None => lines.push("tiling.tile = none".into()),
        }
        lines.sort();
        lines.iter().fold(String::new(), |mut acc, l| {
            let _ = writeln!(acc, "{l}");
            acc
        })
    }

    /// Hex SHA-256 of [`PipelineConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
