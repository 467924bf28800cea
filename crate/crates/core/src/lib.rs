//! Crater detection from segmentation masks.
//!
//! The geometry modules are generic over the float type; the aliases below
//! fix it to `f64`, with `f32` variants where single precision is useful.
//! Catalog, bundle, and configuration I/O use `f64` throughout.

pub mod bundle;
pub mod catalog;
pub mod conic;
pub mod config;
pub mod contour;
pub mod edges;
pub mod linalg;
pub mod mask;
pub mod pipeline;
pub mod postprocess;
pub mod scalar;
pub mod segmenter;
pub mod shape;
pub mod synth;
pub mod tiling;

pub use bundle::{ingest_bundle, write_bundle, BundleError, ImageInfo, LoadReport, LoadedBundle};
pub use catalog::{read_csv, render_overlay, size_frequency, write_csv, CatalogError, CraterCatalog, Histogram};
pub use conic::{fit_circle, fit_ellipse, FitError, ShapeClass};
pub use config::{ConfigError, PipelineConfig, TileSpec};
pub use edges::{canny_edges, EdgeError};
pub use mask::{decode_rle, encode_rle, normalize, BBox, Mask, MaskError, SegmentRecord};
pub use pipeline::{detect, detect_tiled, Detection, StageCounts};
pub use postprocess::{dedup_concentric, filter_elongation, filter_quality, KeepPolicy};
pub use scalar::Scalar;
pub use segmenter::{run_segmenter, SegmenterError, SegmenterKind, SegmenterSpec};
pub use shape::{classify, ShapeError, Verdict};
pub use synth::{generate_field, match_catalogs, precision_recall, MatchCriterion, MatchParams, SynthField, SynthParams};
pub use tiling::{merge_tiled, plan_tiles, to_global, TileOrigin, TilePlan, TilingError};

pub type Crater = conic::CraterEllipse<f64>;
pub type Crater32 = conic::CraterEllipse<f32>;
pub type Point = scalar::Point<f64>;
pub type Point32 = scalar::Point<f32>;
pub type EdgePointSet = edges::EdgePointSet<f64>;
pub type EdgePointSet32 = edges::EdgePointSet<f32>;
pub type CannyParams = edges::CannyParams<f64>;
pub type CannyParams32 = edges::CannyParams<f32>;
pub type ShapeThresholds = shape::ShapeThresholds<f64>;
pub type ShapeThresholds32 = shape::ShapeThresholds<f32>;
pub type ShapeReport = shape::ShapeReport<f64>;
pub type ShapeReport32 = shape::ShapeReport<f32>;
pub type FilterConfig = postprocess::FilterConfig<f64>;
pub type FilterConfig32 = postprocess::FilterConfig<f32>;
