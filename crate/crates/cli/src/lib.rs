//! `crater detect | eval | render`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use crater_core::bundle::{ingest_bundle, BundleError, LoadedBundle};
use crater_core::catalog::{read_csv, render_overlay, write_csv, CatalogError, CraterCatalog};
use crater_core::config::{parse_dims, PipelineConfig, TileSpec};
use crater_core::pipeline::{detect, detect_tiled, Detection};
use crater_core::segmenter::{run_segmenter, SegmenterError, SegmenterKind};
use crater_core::synth::{
    generate_field, match_catalogs, precision_recall, MatchCriterion, MatchParams, Scores, SynthError, SynthParams,
};
use image::{Rgb, RgbImage};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SEGMENTER: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Segmenter(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Segmenter(_) => EXIT_SEGMENTER,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Segmenter(m) => write!(f, "segmenter error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "crater", version, about = "Crater detection from segmentation masks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Detect craters in one image and write catalog.csv, overlay.png, report.txt.
    Detect(DetectArgs),
    /// Run the pipeline on a synthetic field and score it against the truth.
    Eval(EvalArgs),
    /// Draw a catalog over an image.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Pipeline config file (flat `key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tile size and optional overlap, `WxH` or `WxH+O`.
    #[arg(long)]
    pub tiles: Option<TileSpec>,
    /// Worker threads; defaults to the number of logical CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DetectArgs {
    /// Input image. Optional with --bundle, where it only serves as the overlay background.
    pub image: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Existing mask bundle; skips the segmenter.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value = "1024x1024")]
    pub dims: String,
    /// Semi-major axis range, `MIN-MAX` pixels.
    #[arg(long, default_value = "10-60")]
    pub radius: String,
    #[arg(long, default_value_t = 2.0)]
    pub axis_ratio: f64,
    #[arg(long, default_value_t = 0.02)]
    pub jitter: f64,
    /// Match by rasterized IoU instead of centre and size.
    #[arg(long)]
    pub iou: bool,
    /// Also write the detected and truth catalogs here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    pub catalog: PathBuf,
    pub image: PathBuf,
    pub out: PathBuf,
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Detect(a) => cmd_detect(a).map(|s| {
            eprintln!("{} craters written to {}", s.catalog.len(), a.out.display());
        }),
        Command::Eval(a) => cmd_eval(a).map(|r| print!("{}", r.text)),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("crater: {e}");
            e.exit_code()
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            PipelineConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(t) = common.tiles {
        cfg.tiling = Some(t);
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_pipeline(bundle: &LoadedBundle, cfg: &PipelineConfig, jobs: Option<usize>) -> Result<Detection, CliError> {
    let (w, h) = (bundle.image.width, bundle.image.height);
    with_jobs(jobs, || match cfg.tiling {
        Some(t) => detect_tiled(&bundle.records, w, h, t, cfg).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(detect(&bundle.records, cfg)),
    })?
}

fn bundle_error(e: BundleError) -> CliError {
    match e {
        BundleError::Io { .. } => CliError::Io(e.to_string()),
        other => CliError::Segmenter(other.to_string()),
    }
}

fn segmenter_error(e: SegmenterError) -> CliError {
    match e {
        SegmenterError::InvalidSpec(m) => CliError::Config(m),
        other => CliError::Segmenter(other.to_string()),
    }
}

pub struct DetectSummary {
    pub catalog: CraterCatalog,
    pub detection: Detection,
}

pub fn cmd_detect(a: &DetectArgs) -> Result<DetectSummary, CliError> {
    let cfg = load_config(&a.common)?;
    let bundle_dir = match (&a.bundle, &a.image) {
        (Some(dir), _) => dir.clone(),
        (None, None) => return Err(CliError::Config("an image or --bundle is required".into())),
        (None, Some(image)) => {
            if cfg.segmenter.kind == SegmenterKind::BundleDir && cfg.segmenter.path.as_os_str().is_empty() {
                return Err(CliError::Config(
                    "no segmenter configured; pass --bundle or set segmenter.kind = subprocess".into(),
                ));
            }
            fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
            run_segmenter(&cfg.segmenter, image, &a.out.join("segmenter")).map_err(segmenter_error)?
        }
    };
    let bundle = ingest_bundle(&bundle_dir).map_err(bundle_error)?;
    for w in &bundle.report.warnings {
        eprintln!("warning: {w}");
    }
    for s in &bundle.report.skipped {
        eprintln!("skipped segment {} at {}: {}", s.index, s.path, s.reason);
    }
    let (w, h) = (bundle.image.width, bundle.image.height);
    let background = match &a.image {
        Some(path) => {
            let img = image::open(path).map_err(|e| io_err(path, e))?.to_rgb8();
            if img.dimensions() != (w, h) {
                return Err(CliError::Config(format!(
                    "image is {}x{} but the bundle is {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
            img
        }
        None => RgbImage::from_pixel(w, h, Rgb([0, 0, 0])),
    };

    let detection = run_pipeline(&bundle, &cfg, a.common.jobs)?;
    let image_ref = a
        .image
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| bundle.image.source.clone());
    let created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let catalog = CraterCatalog::new(image_ref, w, h, detection.craters.clone())
        .with_config_hash(cfg.hash())
        .with_created_at(created_at);

    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    write_csv(&catalog, &a.out.join("catalog.csv")).map_err(catalog_error)?;
    render_overlay(&background, &catalog, &a.out.join("overlay.png")).map_err(catalog_error)?;
    let report = detect_report(&catalog, &bundle, &bundle_dir, &detection);
    let path = a.out.join("report.txt");
    fs::write(&path, report).map_err(|e| io_err(&path, e))?;
    Ok(DetectSummary { catalog, detection })
}

fn detect_report(catalog: &CraterCatalog, bundle: &LoadedBundle, dir: &Path, d: &Detection) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "image = {}", catalog.image_ref);
    let _ = writeln!(s, "bundle = {}", dir.display());
    let _ = writeln!(s, "image_size = {}x{}", bundle.image.width, bundle.image.height);
    let _ = writeln!(s, "created_at = {}", catalog.created_at);
    let _ = writeln!(s, "pipeline_config_hash = {}", catalog.pipeline_config_hash);
    let _ = writeln!(s, "tiles = {}", d.tiles);
    let _ = writeln!(s, "skipped_segments = {}", bundle.report.skipped.len());
    let _ = writeln!(s, "load_warnings = {}", bundle.report.warnings.len());
    let _ = writeln!(s, "{}", d.counts);
    let _ = writeln!(s, "out_of_bounds = {}", catalog.rejected_out_of_bounds());
    let _ = writeln!(s, "catalog = {}", catalog.len());
    s
}

fn catalog_error(e: CatalogError) -> CliError {
    match e {
        CatalogError::DimMismatch { .. } | CatalogError::BadBins => CliError::Config(e.to_string()),
        other => CliError::Io(other.to_string()),
    }
}

pub struct EvalReport {
    pub scores: Scores,
    pub truth: usize,
    pub detected: usize,
    pub matched: usize,
    pub text: String,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once('-').ok_or_else(|| format!("`{s}` is not of the form MIN-MAX"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    Ok((lo, hi))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<EvalReport, CliError> {
    let cfg = load_config(&a.common)?;
    let (w, h) = parse_dims(&a.dims).map_err(|e| CliError::Config(format!("--dims: {e}")))?;
    let radius_range = parse_range(&a.radius).map_err(|e| CliError::Config(format!("--radius: {e}")))?;
    let params = SynthParams {
        seed: a.seed,
        n_craters: a.n,
        image_w: w,
        image_h: h,
        radius_range,
        axis_ratio_max: a.axis_ratio,
        jitter_frac: a.jitter,
    };
    let field = generate_field(&params).map_err(|e: SynthError| CliError::Config(e.to_string()))?;

    let scratch = tempfile::tempdir().map_err(|e| CliError::Io(e.to_string()))?;
    field.write_truth_bundle(scratch.path()).map_err(bundle_error)?;
    let bundle = ingest_bundle(scratch.path()).map_err(bundle_error)?;
    let detection = run_pipeline(&bundle, &cfg, a.common.jobs)?;
    let detected = CraterCatalog::new(bundle.image.source.clone(), w, h, detection.craters.clone())
        .with_config_hash(cfg.hash());
    let criterion = if a.iou { MatchCriterion::IoU } else { MatchCriterion::CenterAndSize };
    let m = match_catalogs(&detected, &field.truth, criterion, MatchParams::default())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let scores = precision_recall(&m);

    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        write_csv(&detected, &out.join("catalog.csv")).map_err(catalog_error)?;
        write_csv(&field.truth, &out.join("truth.csv")).map_err(catalog_error)?;
        let gray = image::DynamicImage::ImageLuma8(field.image.clone()).to_rgb8();
        render_overlay(&gray, &detected, &out.join("overlay.png")).map_err(catalog_error)?;
    }

    let mut text = String::new();
    let _ = writeln!(text, "{:<12}{:>10}", "metric", "value");
    for (k, v) in [("precision", scores.precision), ("recall", scores.recall), ("f1", scores.f1)] {
        let _ = writeln!(text, "{k:<12}{v:>10.4}");
    }
    for (k, v) in [("truth", field.truth.len()), ("detected", detected.len()), ("matched", m.pairs.len())] {
        let _ = writeln!(text, "{k:<12}{v:>10}");
    }
    let _ = writeln!(text);
    let _ = writeln!(text, "seed={}", a.seed);
    let _ = writeln!(text, "n={}", a.n);
    let _ = writeln!(text, "dims={w}x{h}");
    let _ = writeln!(text, "criterion={criterion:?}");
    let _ = writeln!(text, "tiles={}", detection.tiles);
    let _ = writeln!(text, "truth={}", field.truth.len());
    let _ = writeln!(text, "detected={}", detected.len());
    let _ = writeln!(text, "matched={}", m.pairs.len());
    let _ = writeln!(text, "precision={:.6}", scores.precision);
    let _ = writeln!(text, "recall={:.6}", scores.recall);
    let _ = writeln!(text, "f1={:.6}", scores.f1);
    let _ = writeln!(text, "pipeline_config_hash={}", cfg.hash());
    Ok(EvalReport {
        scores,
        truth: field.truth.len(),
        detected: detected.len(),
        matched: m.pairs.len(),
        text,
    })
}

pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let catalog = read_csv(&a.catalog).map_err(|e| match e {
        CatalogError::ParseError { .. } => CliError::Io(format!("{}: {e}", a.catalog.display())),
        other => catalog_error(other),
    })?;
    let img = image::open(&a.image).map_err(|e| io_err(&a.image, e))?.to_rgb8();
    render_overlay(&img, &catalog, &a.out).map_err(catalog_error)
}
