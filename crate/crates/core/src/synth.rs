//! Synthetic crater fields with exact ground truth, and catalog scoring.

use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bundle::{write_bundle, BundleError, ImageInfo};
use crate::catalog::CraterCatalog;
use crate::conic::{CraterEllipse, ShapeClass};
use crate::mask::{Mask, SegmentRecord};

pub const BACKGROUND: u8 = 64;
pub const INTERIOR: u8 = 160;
/// Number of radial jitter knots around each rim.
const JITTER_KNOTS: usize = 16;
/// Minimum clearance between neighbouring rims, in pixels.
const GAP: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),
    #[error("placed {placed} of {requested} craters before the attempt cap")]
    PlacementOverflow { placed: usize, requested: usize },
    #[error("catalog dimensions differ: {0:?} vs {1:?}")]
    DimMismatch(Option<(u32, u32)>, Option<(u32, u32)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_craters: usize,
    pub image_w: u32,
    pub image_h: u32,
    /// Range of the semi-major axis `a`, in pixels.
    pub radius_range: (f64, f64),
    /// Upper end of the `a / b` range; the lower end is 1.
    pub axis_ratio_max: f64,
    pub jitter_frac: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n_craters: 100,
            image_w: 1024,
            image_h: 1024,
            radius_range: (10.0, 60.0),
            axis_ratio_max: 2.0,
            jitter_frac: 0.02,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.radius_range;
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.image_w == 0 || self.image_h == 0 {
            return bad(format!("image {}x{} is empty", self.image_w, self.image_h));
        }
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("radius range ({lo}, {hi}) is invalid"));
        }
        if !(self.axis_ratio_max >= 1.0 && self.axis_ratio_max.is_finite()) {
            return bad(format!("axis ratio max {} is below 1", self.axis_ratio_max));
        }
        if !(0.0..0.5).contains(&self.jitter_frac) {
            return bad(format!("jitter {} must lie in [0, 0.5)", self.jitter_frac));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthField {
    pub image: GrayImage,
    pub truth: CraterCatalog,
    /// One mask per truth crater; ids match the truth `source_id`s.
    pub truth_records: Vec<SegmentRecord>,
    pub seed: u64,
}

impl SynthField {
    pub fn image_info(&self) -> ImageInfo {
        ImageInfo {
            width: self.image.width(),
            height: self.image.height(),
            source: format!("synthetic-seed-{}", self.seed),
        }
    }

    pub fn write_truth_bundle(&self, dir: &Path) -> Result<(), BundleError> {
        write_bundle(dir, &self.image_info(), &self.truth_records)
    }
}

struct Draft {
    a: f64,
    b: f64,
    theta: f64,
    knots: Vec<f64>,
}

impl Draft {
    /// Radial jitter in units of `a`, linear between knots around the rim.
    fn jitter(&self, phi: f64) -> f64 {
        if self.knots.is_empty() {
            return 0.0;
        }
        let t = phi.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * JITTER_KNOTS as f64;
        let i = (t.floor() as usize) % JITTER_KNOTS;
        let f = t - t.floor();
        self.knots[i] * (1.0 - f) + self.knots[(i + 1) % JITTER_KNOTS] * f
    }
}

fn rasterize(d: &Draft, cx: f64, cy: f64, reach: f64, w: u32, h: u32) -> Mask {
    let (sin, cos) = d.theta.sin_cos();
    let x0 = (cx - reach).floor().max(0.0) as u32;
    let y0 = (cy - reach).floor().max(0.0) as u32;
    let x1 = ((cx + reach).ceil() as u32).min(w - 1);
    let y1 = ((cy + reach).ceil() as u32).min(h - 1);
    let mut m = Mask::new(w, h).expect("non-empty image");
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
            let rho = u.hypot(v);
            let psi = v.atan2(u);
            let rim = d.a * d.b / ((d.b * psi.cos()).powi(2) + (d.a * psi.sin()).powi(2)).sqrt();
            let phi = dy.atan2(dx);
            if rho <= rim + d.jitter(phi) * d.a {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Generates a field of non-overlapping craters, deterministic per seed.
///
/// Parameters are drawn uniformly, larger craters are placed first, and
/// rejection sampling gives up after `10 * n` attempts for any one crater.
pub fn generate_field(p: &SynthParams) -> Result<SynthField, SynthError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (lo, hi) = p.radius_range;
    let mut drafts: Vec<Draft> = (0..p.n_craters)
        .map(|_| {
            let a = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let ratio = if p.axis_ratio_max > 1.0 {
                rng.gen_range(1.0..=p.axis_ratio_max)
            } else {
                1.0
            };
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            let knots = if p.jitter_frac > 0.0 {
                (0..JITTER_KNOTS)
                    .map(|_| rng.gen_range(-p.jitter_frac..=p.jitter_frac))
                    .collect()
            } else {
                Vec::new()
            };
            Draft {
                a,
                b: a / ratio,
                theta,
                knots,
            }
        })
        .collect();
    drafts.sort_by(|x, y| y.a.total_cmp(&x.a));

    let (w, h) = (p.image_w as f64, p.image_h as f64);
    let mut placed: Vec<(f64, f64, f64)> = Vec::with_capacity(drafts.len());
    let cap = 10 * p.n_craters;
    for d in &drafts {
        let reach = d.a * (1.0 + p.jitter_frac);
        let mut attempts = 0usize;
        loop {
            if attempts >= cap || 2.0 * (reach + 1.0) >= w.min(h) {
                return Err(SynthError::PlacementOverflow {
                    placed: placed.len(),
                    requested: p.n_craters,
                });
            }
            attempts += 1;
            let cx = rng.gen_range(reach + 1.0..w - reach - 1.0);
            let cy = rng.gen_range(reach + 1.0..h - reach - 1.0);
            if placed
                .iter()
                .all(|&(x, y, r)| (cx - x).hypot(cy - y) >= r + reach + GAP)
            {
                placed.push((cx, cy, reach));
                break;
            }
        }
    }

    let mut image = GrayImage::from_pixel(p.image_w, p.image_h, Luma([BACKGROUND]));
    let mut craters = Vec::with_capacity(drafts.len());
    let mut records = Vec::with_capacity(drafts.len());
    for (i, (d, &(cx, cy, reach))) in drafts.iter().zip(&placed).enumerate() {
        let id = format!("c{i}");
        let mask = rasterize(d, cx, cy, reach + 1.0, p.image_w, p.image_h);
        for (x, y) in mask.foreground() {
            image.put_pixel(x, y, Luma([INTERIOR]));
        }
        let class = if d.a == d.b { ShapeClass::Circle } else { ShapeClass::Ellipse };
        craters.push(
            CraterEllipse::ellipse(cx, cy, d.a, d.b, d.theta)
                .with_class(class)
                .with_source_id(id.clone()),
        );
        records.push(
            SegmentRecord::new(mask, 1.0, 1.0, id)
                .expect("unit scores")
                .with_prompt_point(Some([cx, cy])),
        );
    }
    Ok(SynthField {
        image,
        truth: CraterCatalog::new(format!("synthetic-seed-{}", p.seed), p.image_w, p.image_h, craters),
        truth_records: records,
        seed: p.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion {
    CenterAndSize,
    IoU,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Centre tolerance as a fraction of the truth `a`.
    pub center_frac: f64,
    /// Relative tolerance on `a`.
    pub size_frac: f64,
    pub min_iou: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            center_frac: 0.25,
            size_frac: 0.25,
            min_iou: 0.5,
        }
    }
}

/// Pairs are indices into the detected and truth catalogs.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detected: Vec<usize>,
    pub unmatched_truth: Vec<usize>,
    pub criterion: MatchCriterion,
    pub params: MatchParams,
}

/// Intersection over union of two ellipses rasterized at pixel centres.
pub fn raster_iou(x: &CraterEllipse<f64>, y: &CraterEllipse<f64>) -> f64 {
    let (ax0, ay0, ax1, ay1) = x.extent();
    let (bx0, by0, bx1, by1) = y.extent();
    let (x0, y0) = (ax0.min(bx0).floor() as i64, ay0.min(by0).floor() as i64);
    let (x1, y1) = (ax1.max(bx1).ceil() as i64, ay1.max(by1).ceil() as i64);
    let (mut inter, mut union) = (0u64, 0u64);
    for py in y0..=y1 {
        for px in x0..=x1 {
            let (fx, fy) = (px as f64, py as f64);
            let (i, j) = (x.contains(fx, fy), y.contains(fx, fy));
            inter += u64::from(i && j);
            union += u64::from(i || j);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy one-to-one matching on ascending centre distance; ties go to the
/// earlier truth crater, then the earlier detection.
pub fn match_catalogs(
    detected: &CraterCatalog,
    truth: &CraterCatalog,
    criterion: MatchCriterion,
    params: MatchParams,
) -> Result<MatchResult, SynthError> {
    if let (Some(a), Some(b)) = (detected.dims(), truth.dims()) {
        if a != b {
            return Err(SynthError::DimMismatch(Some(a), Some(b)));
        }
    }
    let (det, tru) = (detected.craters(), truth.craters());
    let mut candidates = Vec::new();
    for (j, t) in tru.iter().enumerate() {
        for (i, d) in det.iter().enumerate() {
            let dist = d.center().distance(&t.center());
            let ok = match criterion {
                MatchCriterion::CenterAndSize => {
                    dist <= params.center_frac * t.a && (d.a - t.a).abs() / t.a <= params.size_frac
                }
                MatchCriterion::IoU => dist < d.a + t.a && raster_iou(d, t) >= params.min_iou,
            };
            if ok {
                candidates.push((dist, j, i));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut det_used = vec![false; det.len()];
    let mut tru_used = vec![false; tru.len()];
    let mut pairs = Vec::new();
    for (_, j, i) in candidates {
        if !det_used[i] && !tru_used[j] {
            det_used[i] = true;
            tru_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    Ok(MatchResult {
        pairs,
        unmatched_detected: (0..det.len()).filter(|&i| !det_used[i]).collect(),
        unmatched_truth: (0..tru.len()).filter(|&j| !tru_used[j]).collect(),
        criterion,
        params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision and recall with empty denominators counting as 1.
pub fn precision_recall(m: &MatchResult) -> Scores {
    let tp = m.pairs.len() as f64;
    let ratio = |extra: usize| {
        if m.pairs.is_empty() && extra == 0 {
            1.0
        } else {
            tp / (tp + extra as f64)
        }
    };
    let precision = ratio(m.unmatched_detected.len());
    let recall = ratio(m.unmatched_truth.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores { precision, recall, f1 }
}
