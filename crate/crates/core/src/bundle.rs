//! Mask bundle: a directory holding `manifest.json` with RLE-encoded segments.
//!
//! Top-level schema:
//! `{"version": 1, "image": {"width", "height", "source"}, "order": "row-major", "segments": [...]}`
//! with segment entries
//! `{"id", "rle", "area", "bbox", "quality", "stability", "point", "crop_box"}`.
//! Unknown keys are ignored and absent optional keys read as `null`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mask::{decode_rle, decode_rle_column_major, encode_rle, BBox, MaskError, SegmentRecord};

pub const MANIFEST: &str = "manifest.json";
pub const VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("no {MANIFEST} in {0}")]
    ManifestMissing(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl BundleError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        BundleError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: u32,
    pub height: u32,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOrder {
    RowMajor,
    ColumnMajor,
}

impl RunOrder {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "row-major" => Some(RunOrder::RowMajor),
            "column-major" => Some(RunOrder::ColumnMajor),
            _ => None,
        }
    }
}

/// A segment that could not be loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedSegment {
    pub index: usize,
    /// JSON pointer to the offending value.
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub skipped: Vec<SkippedSegment>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub image: ImageInfo,
    pub order: RunOrder,
    pub records: Vec<SegmentRecord>,
    pub report: LoadReport,
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    version: u64,
    image: &'a ImageInfo,
    order: &'static str,
    segments: Vec<SegmentEntry>,
}

#[derive(Serialize)]
struct SegmentEntry {
    id: String,
    rle: Vec<u64>,
    area: u64,
    bbox: [u32; 4],
    quality: f64,
    stability: f64,
    point: Option<[f64; 2]>,
    crop_box: Option<[u32; 4]>,
}

/// Serializes records into a manifest string (row-major RLE).
pub fn manifest_json(image: &ImageInfo, records: &[SegmentRecord]) -> String {
    let out = ManifestOut {
        version: VERSION,
        image,
        order: "row-major",
        segments: records
            .iter()
            .map(|r| SegmentEntry {
                id: r.source_id().to_string(),
                rle: encode_rle(r.mask()),
                area: r.area_px(),
                bbox: r.bbox().to_array(),
                quality: r.quality(),
                stability: r.stability(),
                point: r.prompt_point(),
                crop_box: r.crop_box().map(BBox::to_array),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&out).expect("manifest serializes");
    s.push('\n');
    s
}

/// Writes `dir/manifest.json`, creating `dir` if needed.
pub fn write_bundle(dir: &Path, image: &ImageInfo, records: &[SegmentRecord]) -> Result<(), BundleError> {
    let io = |source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest_json(image, records)).map_err(|source| BundleError::Io { path, source })
}

/// Reads and validates a bundle directory.
pub fn ingest_bundle(dir: &Path) -> Result<LoadedBundle, BundleError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(BundleError::ManifestMissing(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&path).map_err(|source| BundleError::Io { path, source })?;
    parse_manifest(&text)
}

fn uint(v: &Value, path: &str) -> Result<u64, BundleError> {
    v.as_u64()
        .ok_or_else(|| BundleError::schema(path, "expected a non-negative integer"))
}

fn unit_float(v: &Value, path: &str) -> Result<f64, BundleError> {
    let f = v
        .as_f64()
        .ok_or_else(|| BundleError::schema(path, "expected a number"))?;
    if !(0.0..=1.0).contains(&f) {
        return Err(BundleError::schema(path, format!("{f} is outside [0, 1]")));
    }
    Ok(f)
}

fn uint_array<const N: usize>(v: &Value, path: &str) -> Result<[u32; N], BundleError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| BundleError::schema(path, format!("expected an array of {N} integers")))?;
    let mut out = [0u32; N];
    for (i, item) in arr.iter().enumerate() {
        let p = format!("{path}/{i}");
        out[i] = u32::try_from(uint(item, &p)?).map_err(|_| BundleError::schema(p, "out of range"))?;
    }
    Ok(out)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> &'a Value {
    obj.get(key).unwrap_or(&Value::Null)
}

/// Parses manifest text. Top-level problems are fatal; per-segment problems
/// skip that segment and are listed in the load report.
pub fn parse_manifest(text: &str) -> Result<LoadedBundle, BundleError> {
    let root: Value = serde_json::from_str(text)?;
    let root = root
        .as_object()
        .ok_or_else(|| BundleError::schema("", "manifest must be a JSON object"))?;

    let version = uint(field(root, "version"), "/version")?;
    if version != VERSION {
        return Err(BundleError::schema("/version", format!("unsupported version {version}")));
    }
    let image = field(root, "image")
        .as_object()
        .ok_or_else(|| BundleError::schema("/image", "expected an object"))?;
    let dim = |key: &str| -> Result<u32, BundleError> {
        let p = format!("/image/{key}");
        let v = uint(field(image, key), &p)?;
        match u32::try_from(v) {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(BundleError::schema(p, "must be a positive 32-bit integer")),
        }
    };
    let info = ImageInfo {
        width: dim("width")?,
        height: dim("height")?,
        source: match field(image, "source") {
            Value::Null => String::new(),
            Value::String(s) => s.clone(),
            _ => return Err(BundleError::schema("/image/source", "expected a string")),
        },
    };
    let order = match field(root, "order") {
        Value::Null => RunOrder::RowMajor,
        Value::String(s) => RunOrder::parse(s)
            .ok_or_else(|| BundleError::schema("/order", format!("unknown order `{s}`")))?,
        _ => return Err(BundleError::schema("/order", "expected a string")),
    };
    let segments = field(root, "segments")
        .as_array()
        .ok_or_else(|| BundleError::schema("/segments", "expected an array"))?;

    let mut records = Vec::with_capacity(segments.len());
    let mut report = LoadReport::default();
    for (index, seg) in segments.iter().enumerate() {
        match parse_segment(seg, index, &info, order, &mut report.warnings) {
            Ok(r) => records.push(r),
            Err((path, reason)) => report.skipped.push(SkippedSegment { index, path, reason }),
        }
    }
    Ok(LoadedBundle {
        image: info,
        order,
        records,
        report,
    })
}

fn parse_segment(
    seg: &Value,
    index: usize,
    image: &ImageInfo,
    order: RunOrder,
    warnings: &mut Vec<String>,
) -> Result<SegmentRecord, (String, String)> {
    let base = format!("/segments/{index}");
    let schema = |e: BundleError| match e {
        BundleError::SchemaViolation { path, message } => (path, message),
        other => (base.clone(), other.to_string()),
    };
    let obj = seg
        .as_object()
        .ok_or_else(|| (base.clone(), "expected an object".to_string()))?;
    let id = match field(obj, "id") {
        Value::String(s) => s.clone(),
        Value::Null => format!("{index}"),
        _ => return Err((format!("{base}/id"), "expected a string".into())),
    };
    let rle_path = format!("{base}/rle");
    let counts = field(obj, "rle")
        .as_array()
        .ok_or_else(|| (rle_path.clone(), "expected an array of run lengths".to_string()))?
        .iter()
        .enumerate()
        .map(|(i, v)| uint(v, &format!("{rle_path}/{i}")))
        .collect::<Result<Vec<u64>, _>>()
        .map_err(schema)?;
    let quality = unit_float(field(obj, "quality"), &format!("{base}/quality")).map_err(schema)?;
    let stability = unit_float(field(obj, "stability"), &format!("{base}/stability")).map_err(schema)?;
    let declared_area = match field(obj, "area") {
        Value::Null => None,
        v => Some(uint(v, &format!("{base}/area")).map_err(schema)?),
    };
    let declared_bbox = match field(obj, "bbox") {
        Value::Null => None,
        v => Some(uint_array::<4>(v, &format!("{base}/bbox")).map_err(schema)?),
    };
    let point = match field(obj, "point") {
        Value::Null => None,
        v => {
            let p = format!("{base}/point");
            let arr = v
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| (p.clone(), "expected [x, y] or null".to_string()))?;
            let x = arr[0].as_f64().ok_or_else(|| (format!("{p}/0"), "expected a number".to_string()))?;
            let y = arr[1].as_f64().ok_or_else(|| (format!("{p}/1"), "expected a number".to_string()))?;
            Some([x, y])
        }
    };
    let crop_box = match field(obj, "crop_box") {
        Value::Null => None,
        v => {
            let [x, y, w, h] = uint_array::<4>(v, &format!("{base}/crop_box")).map_err(schema)?;
            Some(BBox::new(x, y, w, h))
        }
    };

    let decoded = match order {
        RunOrder::RowMajor => decode_rle(&counts, image.width, image.height),
        RunOrder::ColumnMajor => decode_rle_column_major(&counts, image.width, image.height),
    };
    let mask = decoded.map_err(|e: MaskError| (rle_path.clone(), e.to_string()))?;
    let record = SegmentRecord::new(mask, quality, stability, id)
        .map_err(|e| (base.clone(), e.to_string()))?
        .with_prompt_point(point)
        .with_crop_box(crop_box);

    if let Some(area) = declared_area {
        if area != record.area_px() {
            warnings.push(format!(
                "{base}/area: declared {area}, decoded {}; using decoded value",
                record.area_px()
            ));
        }
    }
    if let Some(bbox) = declared_bbox {
        if bbox != record.bbox().to_array() {
            warnings.push(format!(
                "{base}/bbox: declared {bbox:?}, decoded {:?}; using decoded value",
                record.bbox().to_array()
            ));
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;

    fn info(w: u32, h: u32) -> ImageInfo {
        ImageInfo {
            width: w,
            height: h,
            source: "test.png".into(),
        }
    }

    #[test]
    fn empty_segment_list() {
        let b = parse_manifest(r#"{"version":1,"image":{"width":4,"height":4,"source":"x"},"order":"row-major","segments":[]}"#).unwrap();
        assert!(b.records.is_empty() && b.report.skipped.is_empty());
        assert_eq!(b.image, ImageInfo { width: 4, height: 4, source: "x".into() });
    }

    #[test]
    fn single_full_segment() {
        let text = r#"{"version":1,"image":{"width":2,"height":2,"source":""},"order":"row-major",
            "segments":[{"id":"a","rle":[0,4],"area":4,"bbox":[0,0,2,2],"quality":0.9,"stability":0.95,"point":[1.0,1.0],"crop_box":null}]}"#;
        let b = parse_manifest(text).unwrap();
        assert_eq!(b.records.len(), 1);
        assert_eq!(b.records[0].area_px(), 4);
        assert_eq!(b.records[0].prompt_point(), Some([1.0, 1.0]));
        assert!(b.report.warnings.is_empty());
    }

    #[test]
    fn area_mismatch_warns_and_uses_decoded() {
        let text = r#"{"version":1,"image":{"width":2,"height":2,"source":""},"order":"row-major",
            "segments":[{"id":"a","rle":[0,4],"area":3,"bbox":[0,0,2,2],"quality":0.9,"stability":0.95,"point":null,"crop_box":null}]}"#;
        let b = parse_manifest(text).unwrap();
        assert_eq!(b.records[0].area_px(), 4);
        assert_eq!(b.report.warnings.len(), 1);
        assert!(b.report.warnings[0].contains("/segments/0/area"));
    }

    #[test]
    fn malformed_segments_are_skipped_with_paths() {
        let text = r#"{"version":1,"image":{"width":2,"height":2,"source":""},"order":"row-major","segments":[
            {"id":"ok","rle":[0,4],"quality":0.9,"stability":0.9},
            {"id":"short","rle":[0,3],"quality":0.9,"stability":0.9},
            {"id":"neg","rle":[0,-4],"quality":0.9,"stability":0.9},
            {"id":"q","rle":[4],"quality":1.5,"stability":0.9},
            {"id":"box","rle":[4],"quality":0.5,"stability":0.9,"bbox":[1,2]},
            "nope"
        ],"extra":{"ignored":true}}"#;
        let b = parse_manifest(text).unwrap();
        assert_eq!(b.records.len(), 1);
        let paths: Vec<_> = b.report.skipped.iter().map(|s| s.path.as_str()).collect();
        assert_eq!(
            paths,
            vec!["/segments/1/rle", "/segments/2/rle/1", "/segments/3/quality", "/segments/4/bbox", "/segments/5"]
        );
    }

    #[test]
    fn top_level_violations_are_fatal() {
        let cases = [
            (r#"{"image":{"width":2,"height":2},"segments":[]}"#, "/version"),
            (r#"{"version":2,"image":{"width":2,"height":2},"segments":[]}"#, "/version"),
            (r#"{"version":1,"image":{"width":0,"height":2},"segments":[]}"#, "/image/width"),
            (r#"{"version":1,"image":{"width":2,"height":2},"order":"zigzag","segments":[]}"#, "/order"),
            (r#"{"version":1,"image":{"width":2,"height":2}}"#, "/segments"),
            (r#"[]"#, ""),
        ];
        for (text, want) in cases {
            match parse_manifest(text) {
                Err(BundleError::SchemaViolation { path, .. }) => assert_eq!(path, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(parse_manifest("{"), Err(BundleError::Json(_))));
    }

    #[test]
    fn column_major_bundles_are_converted() {
        let text = r#"{"version":1,"image":{"width":3,"height":2,"source":""},"order":"column-major",
            "segments":[{"id":"c","rle":[0,2,4],"quality":1,"stability":1}]}"#;
        let b = parse_manifest(text).unwrap();
        assert_eq!(b.records[0].mask().foreground().collect::<Vec<_>>(), vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::from_ascii(&["....", ".##.", ".##.", "...."]).unwrap();
        let r = SegmentRecord::new(m, 0.75, 0.5, "seg-1")
            .unwrap()
            .with_prompt_point(Some([1.5, 1.5]))
            .with_crop_box(Some(BBox::new(0, 0, 4, 4)));
        write_bundle(dir.path(), &info(4, 4), std::slice::from_ref(&r)).unwrap();
        let b = ingest_bundle(dir.path()).unwrap();
        assert_eq!(b.records, vec![r]);
        assert!(b.report.warnings.is_empty());
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(ingest_bundle(dir.path()), Err(BundleError::ManifestMissing(_))));
    }
}
