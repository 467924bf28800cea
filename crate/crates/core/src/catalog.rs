//! Crater catalogs: CSV persistence, size-frequency histograms, overlays.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::conic::{CraterEllipse, ShapeClass};
use crate::postprocess::catalog_order;

pub const CSV_HEADER: [&str; 9] = ["id", "cx", "cy", "a", "b", "theta", "class", "quality", "source_id"];

pub const CIRCLE_COLOR: Rgb<u8> = Rgb([255, 64, 64]);
pub const ELLIPSE_COLOR: Rgb<u8> = Rgb([64, 220, 255]);

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("I/O error on {path}: {message}")]
    IoFailure { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("bin edges must be strictly increasing with at least two entries")]
    BadBins,
    #[error("image is {image_w}x{image_h} but the catalog is {catalog_w}x{catalog_h}")]
    DimMismatch {
        image_w: u32,
        image_h: u32,
        catalog_w: u32,
        catalog_h: u32,
    },
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> CatalogError {
    CatalogError::IoFailure {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// An ordered set of craters in pixel coordinates of one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CraterCatalog {
    pub image_ref: String,
    dims: Option<(u32, u32)>,
    craters: Vec<CraterEllipse<f64>>,
    /// Craters dropped at construction because their centre lay outside the image.
    rejected: usize,
    pub pipeline_config_hash: String,
    pub created_at: String,
}

impl CraterCatalog {
    /// Sorts the craters into catalog order and drops any whose centre is
    /// outside `[0, w) x [0, h)`.
    pub fn new(image_ref: impl Into<String>, image_w: u32, image_h: u32, craters: Vec<CraterEllipse<f64>>) -> Self {
        let (w, h) = (image_w as f64, image_h as f64);
        let before = craters.len();
        let mut craters: Vec<_> = craters
            .into_iter()
            .filter(|c| c.cx >= 0.0 && c.cx < w && c.cy >= 0.0 && c.cy < h)
            .collect();
        craters.sort_by(catalog_order);
        Self {
            image_ref: image_ref.into(),
            dims: Some((image_w, image_h)),
            rejected: before - craters.len(),
            craters,
            ..Self::default()
        }
    }

    /// A catalog without known image dimensions, as read back from CSV.
    pub fn without_dims(mut craters: Vec<CraterEllipse<f64>>) -> Self {
        craters.sort_by(catalog_order);
        Self {
            craters,
            ..Self::default()
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.pipeline_config_hash = hash.into();
        self
    }

    pub fn with_created_at(mut self, ts: impl Into<String>) -> Self {
        self.created_at = ts.into();
        self
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        self.dims
    }

    pub fn craters(&self) -> &[CraterEllipse<f64>] {
        &self.craters
    }

    pub fn into_craters(self) -> Vec<CraterEllipse<f64>> {
        self.craters
    }

    pub fn len(&self) -> usize {
        self.craters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.craters.is_empty()
    }

    pub fn rejected_out_of_bounds(&self) -> usize {
        self.rejected
    }
}

/// CSV text for a catalog; `id` is the row index.
pub fn to_csv_string(catalog: &CraterCatalog) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (i, c) in catalog.craters.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:.6}", c.cx),
            format!("{:.6}", c.cy),
            format!("{:.6}", c.a),
            format!("{:.6}", c.b),
            format!("{:.6}", c.theta),
            c.class.to_string(),
            format!("{:.6}", c.quality),
            c.source_id.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn write_csv(catalog: &CraterCatalog, path: &Path) -> Result<(), CatalogError> {
    fs::write(path, to_csv_string(catalog)).map_err(|e| io_failure(path, e))
}

/// Parses CSV text; columns past `source_id` are ignored.
pub fn parse_csv(text: &str) -> Result<CraterCatalog, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CatalogError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < CSV_HEADER.len() || header.iter().zip(CSV_HEADER).any(|(got, want)| got != want) {
        return Err(CatalogError::ParseError {
            line: 1,
            message: format!("expected header starting with {}", CSV_HEADER.join(",")),
        });
    }
    let mut craters = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CatalogError::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| CatalogError::ParseError { line, message };
        if row.len() < CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", CSV_HEADER.len(), row.len())));
        }
        let num = |i: usize| -> Result<f64, CatalogError> {
            let v: f64 = row[i]
                .trim()
                .parse()
                .map_err(|_| bad(format!("{} `{}` is not a number", CSV_HEADER[i], &row[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{} is not finite", CSV_HEADER[i])))
            }
        };
        let (cx, cy, a, b, theta, quality) = (num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, num(7)?);
        if !(a > 0.0 && b > 0.0 && a >= b) {
            return Err(bad(format!("axes a = {a}, b = {b} must satisfy a >= b > 0")));
        }
        let class: ShapeClass = row[6].parse().map_err(bad)?;
        craters.push(CraterEllipse {
            cx,
            cy,
            a,
            b,
            theta,
            class,
            quality,
            source_id: row[8].to_string(),
            residual: 0.0,
            clipped: false,
        });
    }
    Ok(CraterCatalog::without_dims(craters))
}

pub fn read_csv(path: &Path) -> Result<CraterCatalog, CatalogError> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    parse_csv(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// `counts[i]` covers `[edges[i], edges[i + 1])`.
    pub counts: Vec<usize>,
    pub below: usize,
    pub above: usize,
}

impl Histogram {
    pub fn out_of_range(&self) -> usize {
        self.below + self.above
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Geometric bin edges `min, min*factor, ...` up to the first edge `>= max`.
pub fn geometric_edges(min: f64, max: f64, factor: f64) -> Result<Vec<f64>, CatalogError> {
    if !(min > 0.0 && max > min && factor > 1.0 && min.is_finite() && max.is_finite()) {
        return Err(CatalogError::BadBins);
    }
    let mut edges = vec![min];
    while *edges.last().unwrap() < max {
        edges.push(edges.last().unwrap() * factor);
    }
    Ok(edges)
}

/// Counts crater diameters `D = 2a` into half-open bins.
pub fn size_frequency(catalog: &CraterCatalog, edges: &[f64]) -> Result<Histogram, CatalogError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CatalogError::BadBins);
    }
    let mut h = Histogram {
        edges: edges.to_vec(),
        counts: vec![0; edges.len() - 1],
        below: 0,
        above: 0,
    };
    for c in &catalog.craters {
        let d = 2.0 * c.a;
        if d < edges[0] {
            h.below += 1;
        } else if d >= edges[edges.len() - 1] {
            h.above += 1;
        } else {
            // First edge strictly above d, minus one.
            let i = edges.partition_point(|&e| e <= d) - 1;
            h.counts[i] += 1;
        }
    }
    Ok(h)
}

/// Plain-text table of a histogram.
pub fn format_histogram(h: &Histogram) -> String {
    let mut s = String::new();
    for (i, n) in h.counts.iter().enumerate() {
        let _ = writeln!(s, "[{:.2}, {:.2})\t{n}", h.edges[i], h.edges[i + 1]);
    }
    let _ = writeln!(s, "below\t{}\nabove\t{}", h.below, h.above);
    s
}

fn ramanujan_perimeter(a: f64, b: f64) -> f64 {
    std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Draws one closed outline. Samples are spaced at most half a pixel apart
/// (and number at least 64), so consecutive samples round to touching pixels.
pub fn draw_ellipse(img: &mut RgbImage, c: &CraterEllipse<f64>, color: Rgb<u8>) {
    let n = ((2.0 * ramanujan_perimeter(c.a, c.b)).ceil() as usize).max(64);
    let pts: Vec<(i64, i64)> = c
        .sample(n)
        .into_iter()
        .map(|p| (p.x.round() as i64, p.y.round() as i64))
        .collect();
    for i in 0..pts.len() {
        line(img, pts[i], pts[(i + 1) % pts.len()], color);
    }
}

/// Returns a copy of `image` with every crater outlined.
pub fn draw_overlay(image: &RgbImage, catalog: &CraterCatalog) -> Result<RgbImage, CatalogError> {
    if let Some((w, h)) = catalog.dims {
        if (w, h) != image.dimensions() {
            return Err(CatalogError::DimMismatch {
                image_w: image.width(),
                image_h: image.height(),
                catalog_w: w,
                catalog_h: h,
            });
        }
    } else if catalog
        .craters
        .iter()
        .any(|c| !(c.cx >= 0.0 && c.cy >= 0.0 && c.cx < image.width() as f64 && c.cy < image.height() as f64))
    {
        // Without recorded dims, a centre off the image is the only evidence of a mismatch.
        let (cw, ch) = catalog.craters.iter().fold((0.0f64, 0.0f64), |(w, h), c| (w.max(c.cx), h.max(c.cy)));
        return Err(CatalogError::DimMismatch {
            image_w: image.width(),
            image_h: image.height(),
            catalog_w: cw.ceil() as u32,
            catalog_h: ch.ceil() as u32,
        });
    }
    let mut out = image.clone();
    for c in &catalog.craters {
        let color = match c.class {
            ShapeClass::Circle => CIRCLE_COLOR,
            ShapeClass::Ellipse => ELLIPSE_COLOR,
        };
        draw_ellipse(&mut out, c, color);
    }
    Ok(out)
}

pub fn render_overlay(image: &RgbImage, catalog: &CraterCatalog, path: &Path) -> Result<(), CatalogError> {
    let out = draw_overlay(image, catalog)?;
    out.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| io_failure(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(cx: f64, cy: f64, r: f64) -> CraterEllipse<f64> {
        CraterEllipse::circle(cx, cy, r)
    }

    #[test]
    fn empty_catalog_is_header_only() {
        let cat = CraterCatalog::new("x.png", 10, 10, vec![]);
        assert_eq!(to_csv_string(&cat), "id,cx,cy,a,b,theta,class,quality,source_id\n");
        assert!(parse_csv(&to_csv_string(&cat)).unwrap().is_empty());
    }

    #[test]
    fn single_circle_row() {
        let cat = CraterCatalog::new("x.png", 10, 10, vec![circle(1.0, 2.0, 3.0).with_source_id("s0")]);
        let text = to_csv_string(&cat);
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row, "0,1.000000,2.000000,3.000000,3.000000,0.000000,Circle,1.000000,s0");
    }

    #[test]
    fn round_trip_is_exact_at_six_decimals() {
        let cat = CraterCatalog::new(
            "x.png",
            500,
            500,
            vec![
                CraterEllipse::ellipse(10.123456789, 20.5, 7.25, 3.1, 2.9).with_source_id("a,b"),
                circle(400.0, 1.0 / 3.0, 12.0).with_quality(0.875).with_source_id("q\"uote"),
            ],
        );
        let text = to_csv_string(&cat);
        let back = parse_csv(&text).unwrap();
        assert_eq!(to_csv_string(&back), text);
        assert_eq!(back.craters()[0].source_id, cat.craters()[0].source_id);
    }

    #[test]
    fn extra_columns_ignored_and_bad_rows_located() {
        let text = "id,cx,cy,a,b,theta,class,quality,source_id,extra\n0,1,2,3,3,0,Circle,1,s,zzz\n";
        assert_eq!(parse_csv(text).unwrap().len(), 1);
        let text = "id,cx,cy,a,b,theta,class,quality,source_id\n0,1,2,3,3,0,Circle,1,s\n1,x,2,3,3,0,Circle,1,s\n";
        match parse_csv(text) {
            Err(CatalogError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_centres_rejected() {
        let cat = CraterCatalog::new("x", 10, 10, vec![circle(10.0, 5.0, 2.0), circle(5.0, 5.0, 2.0)]);
        assert_eq!(cat.len(), 1);
        assert_eq!(cat.rejected_out_of_bounds(), 1);
    }

    #[test]
    fn size_frequency_binning() {
        let cat = CraterCatalog::without_dims(vec![circle(0.0, 0.0, 5.0), circle(0.0, 0.0, 10.0), circle(0.0, 0.0, 20.0)]);
        let h = size_frequency(&cat, &[8.0, 16.0, 32.0, 64.0]).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        // D = 16 falls into the upper bin.
        let h = size_frequency(&CraterCatalog::without_dims(vec![circle(0.0, 0.0, 8.0)]), &[8.0, 16.0, 32.0]).unwrap();
        assert_eq!(h.counts, vec![0, 1]);
        let h = size_frequency(&CraterCatalog::default(), &[1.0, 2.0]).unwrap();
        assert_eq!((h.counts.clone(), h.out_of_range()), (vec![0], 0));
        assert!(matches!(size_frequency(&cat, &[1.0]), Err(CatalogError::BadBins)));
        assert!(matches!(size_frequency(&cat, &[2.0, 2.0]), Err(CatalogError::BadBins)));
    }

    #[test]
    fn geometric_edges_cover_range() {
        assert_eq!(geometric_edges(8.0, 64.0, 2.0).unwrap(), vec![8.0, 16.0, 32.0, 64.0]);
    }

    #[test]
    fn overlay_of_circle_hugs_the_circle() {
        let img = RgbImage::new(100, 100);
        let cat = CraterCatalog::new("x", 100, 100, vec![circle(50.0, 50.0, 10.0)]);
        let out = draw_overlay(&img, &cat).unwrap();
        let mut drawn = 0;
        for (x, y, p) in out.enumerate_pixels() {
            if p.0 != [0, 0, 0] {
                drawn += 1;
                assert_eq!(*p, CIRCLE_COLOR);
                let d = ((x as f64 - 50.0).hypot(y as f64 - 50.0) - 10.0).abs();
                assert!(d <= 1.0, "pixel ({x}, {y}) is {d} from the circle");
            }
        }
        assert!(drawn >= 50);
    }

    #[test]
    fn overlay_empty_and_mismatch() {
        let img = RgbImage::from_pixel(20, 10, Rgb([9, 8, 7]));
        let cat = CraterCatalog::new("x", 20, 10, vec![]);
        assert_eq!(draw_overlay(&img, &cat).unwrap(), img);
        let cat = CraterCatalog::new("x", 10, 10, vec![]);
        assert!(matches!(draw_overlay(&img, &cat), Err(CatalogError::DimMismatch { .. })));
    }
}
