//! Masks in, crater ellipses out: quality gate, normalization, shape
//! classification, edge extraction, fitting, and the final filters.

use std::fmt;

use rayon::prelude::*;

use crate::conic::{fit_circle, CraterEllipse, ShapeClass};
use crate::config::{PipelineConfig, TileSpec};
use crate::edges::edges_with_fallback;
use crate::mask::{normalize, SegmentRecord};
use crate::postprocess::{dedup_concentric, filter_elongation, passes_quality};
use crate::shape::{classify_edges, Verdict};
use crate::tiling::{crop_records, merge_tiled, plan_tiles, TileOrigin, TilingError};

/// Number of items leaving each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounts {
    pub segments: usize,
    pub after_quality: usize,
    pub after_normalize: usize,
    pub circles: usize,
    pub ellipses: usize,
    pub rejected: usize,
    pub fitted: usize,
    pub after_elongation: usize,
    pub after_dedup: usize,
}

impl StageCounts {
    fn add(&mut self, o: &StageCounts) {
        self.segments += o.segments;
        self.after_quality += o.after_quality;
        self.after_normalize += o.after_normalize;
        self.circles += o.circles;
        self.ellipses += o.ellipses;
        self.rejected += o.rejected;
        self.fitted += o.fitted;
        self.after_elongation += o.after_elongation;
        self.after_dedup += o.after_dedup;
    }

    /// Each stage keeps at most what it was given.
    pub fn is_monotone(&self) -> bool {
        let classified = self.circles + self.ellipses;
        self.after_quality <= self.segments
            && self.after_normalize <= self.after_quality
            && classified + self.rejected == self.after_normalize
            && self.fitted <= classified
            && self.after_elongation <= self.fitted
            && self.after_dedup <= self.after_elongation
    }
}

impl fmt::Display for StageCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "segments = {}", self.segments)?;
        writeln!(f, "after_quality = {}", self.after_quality)?;
        writeln!(f, "after_normalize = {}", self.after_normalize)?;
        writeln!(f, "classified_circle = {}", self.circles)?;
        writeln!(f, "classified_ellipse = {}", self.ellipses)?;
        writeln!(f, "classified_rejected = {}", self.rejected)?;
        writeln!(f, "fitted = {}", self.fitted)?;
        writeln!(f, "after_elongation = {}", self.after_elongation)?;
        write!(f, "after_dedup = {}", self.after_dedup)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub craters: Vec<CraterEllipse<f64>>,
    pub counts: StageCounts,
    /// Number of tiles processed; 1 for an untiled run.
    pub tiles: usize,
}

enum Outcome {
    Degenerate,
    Rejected,
    Unfitted(Verdict),
    Fitted(Verdict, CraterEllipse<f64>),
}

/// Runs one segment through normalization, classification and fitting.
fn process(record: &SegmentRecord, cfg: &PipelineConfig) -> Outcome {
    let b = record.bbox();
    let (x0, y0) = (b.x as i64 - 1, b.y as i64 - 1);
    let Ok(local) = record.mask().crop(x0, y0, b.w + 2, b.h + 2) else {
        return Outcome::Degenerate;
    };
    let Ok(mask) = normalize(&local) else {
        return Outcome::Degenerate;
    };
    let edges = edges_with_fallback(&mask, &cfg.canny);
    let Ok(report) = classify_edges(&mask, edges.as_ref().map_err(Clone::clone), &cfg.thresholds) else {
        return Outcome::Rejected;
    };
    let fit = match report.class {
        Verdict::Rejected => return Outcome::Rejected,
        Verdict::Circle => edges
            .as_ref()
            .ok()
            .and_then(|e| fit_circle(e).ok())
            .or(report.fitted)
            .map(|c| c.with_class(ShapeClass::Circle)),
        Verdict::Ellipse => report.fitted.map(|e| e.with_class(ShapeClass::Ellipse)),
    };
    match fit {
        Some(c) => Outcome::Fitted(
            report.class,
            c.translate(x0 as f64, y0 as f64)
                .with_quality(record.quality())
                .with_source_id(record.source_id()),
        ),
        None => Outcome::Unfitted(report.class),
    }
}

/// Runs every stage up to (not including) de-duplication. `clipped`
/// decides the flag from a segment's bounding box.
fn fit_all(
    records: &[SegmentRecord],
    cfg: &PipelineConfig,
    clipped: impl Fn(&SegmentRecord) -> bool + Sync,
) -> (Vec<CraterEllipse<f64>>, StageCounts) {
    let mut counts = StageCounts {
        segments: records.len(),
        ..StageCounts::default()
    };
    let gated: Vec<&SegmentRecord> = records.iter().filter(|r| passes_quality(r, &cfg.filters)).collect();
    counts.after_quality = gated.len();
    let outcomes: Vec<Outcome> = gated
        .par_iter()
        .map(|r| match process(r, cfg) {
            Outcome::Fitted(v, mut c) => {
                c.clipped = clipped(r);
                Outcome::Fitted(v, c)
            }
            other => other,
        })
        .collect();
    let mut fitted = Vec::new();
    for o in outcomes {
        let verdict = match o {
            Outcome::Degenerate => continue,
            Outcome::Rejected => Verdict::Rejected,
            Outcome::Unfitted(v) => v,
            Outcome::Fitted(v, c) => {
                fitted.push(c);
                v
            }
        };
        counts.after_normalize += 1;
        match verdict {
            Verdict::Circle => counts.circles += 1,
            Verdict::Ellipse => counts.ellipses += 1,
            Verdict::Rejected => counts.rejected += 1,
        }
    }
    counts.fitted = fitted.len();
    let kept = filter_elongation(fitted, &cfg.filters);
    counts.after_elongation = kept.len();
    (kept, counts)
}

/// Full-frame detection.
pub fn detect(records: &[SegmentRecord], cfg: &PipelineConfig) -> Detection {
    let (kept, mut counts) = fit_all(records, cfg, |_| false);
    let craters = dedup_concentric(kept, &cfg.filters);
    counts.after_dedup = craters.len();
    Detection {
        craters,
        counts,
        tiles: 1,
    }
}

/// Tiled detection: every tile sees only its crop of each segment, as a
/// segmenter run on that tile would. Detections touching an interior tile
/// edge are flagged `clipped` before the merge.
pub fn detect_tiled(
    records: &[SegmentRecord],
    image_w: u32,
    image_h: u32,
    tiles: TileSpec,
    cfg: &PipelineConfig,
) -> Result<Detection, TilingError> {
    let plan = plan_tiles(image_w, image_h, tiles.tile_w, tiles.tile_h, tiles.overlap())?;
    let per_tile: Vec<(TileOrigin, Vec<CraterEllipse<f64>>, StageCounts)> = plan
        .tiles
        .par_iter()
        .enumerate()
        .map(|(ti, tile)| {
            let local = crop_records(records, tile, ti);
            let (craters, counts) = fit_all(&local, cfg, |r| plan.touches_interior_edge(tile, &r.bbox()));
            (TileOrigin::from(*tile), craters, counts)
        })
        .collect();
    let mut counts = StageCounts::default();
    for (_, _, c) in &per_tile {
        counts.add(c);
    }
    let catalogs: Vec<(TileOrigin, Vec<CraterEllipse<f64>>)> =
        per_tile.into_iter().map(|(o, c, _)| (o, c)).collect();
    let craters = merge_tiled(&catalogs, &cfg.filters);
    counts.after_dedup = craters.len();
    Ok(Detection {
        craters,
        counts,
        tiles: plan.tiles.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Mask;

    fn disk(w: u32, h: u32, cx: f64, cy: f64, r: f64) -> Mask {
        Mask::from_fn(w, h, |x, y| (x as f64 - cx).hypot(y as f64 - cy) <= r).unwrap()
    }

    fn record(m: Mask, id: &str) -> SegmentRecord {
        SegmentRecord::new(m, 0.95, 0.95, id).unwrap()
    }

    #[test]
    fn one_disk_gives_one_circle() {
        let d = detect(&[record(disk(120, 100, 60.0, 50.0, 20.0), "d")], &PipelineConfig::default());
        assert_eq!(d.craters.len(), 1);
        let c = &d.craters[0];
        assert_eq!(c.class, ShapeClass::Circle);
        assert!((c.cx - 60.0).abs() < 0.5 && (c.cy - 50.0).abs() < 0.5, "{c:?}");
        assert!((c.a - 20.0).abs() < 1.0, "{c:?}");
        assert_eq!(c.source_id, "d");
        assert!(d.counts.is_monotone());
    }

    #[test]
    fn empty_input() {
        let d = detect(&[], &PipelineConfig::default());
        assert!(d.craters.is_empty());
        assert_eq!(d.counts, StageCounts::default());
    }

    #[test]
    fn low_quality_and_bars_are_dropped() {
        let weak = SegmentRecord::new(disk(80, 80, 40.0, 40.0, 15.0), 0.2, 0.95, "weak").unwrap();
        let bar = record(Mask::from_fn(120, 40, |x, y| (10..110).contains(&x) && (10..30).contains(&y)).unwrap(), "bar");
        let d = detect(&[weak, bar], &PipelineConfig::default());
        assert!(d.craters.is_empty());
        assert_eq!((d.counts.after_quality, d.counts.rejected), (1, 1));
        assert!(d.counts.is_monotone());
    }

    #[test]
    fn central_peak_is_removed() {
        let rim = record(disk(200, 200, 100.0, 100.0, 60.0), "rim");
        let peak = record(disk(200, 200, 101.0, 100.0, 8.0), "peak");
        let d = detect(&[peak, rim], &PipelineConfig::default());
        assert_eq!(d.craters.len(), 1);
        assert_eq!(d.craters[0].source_id, "rim");
    }

    #[test]
    fn tiled_matches_untiled_for_interior_crater() {
        let recs = vec![record(disk(300, 300, 150.0, 150.0, 20.0), "a")];
        let cfg = PipelineConfig::default();
        let full = detect(&recs, &cfg);
        let tiled = detect_tiled(&recs, 300, 300, TileSpec { tile_w: 128, tile_h: 128, overlap: Some(64) }, &cfg).unwrap();
        assert_eq!(tiled.craters.len(), 1, "{:?}", tiled.craters);
        let (a, b) = (&full.craters[0], &tiled.craters[0]);
        assert!((a.cx - b.cx).abs() < 1e-6 && (a.cy - b.cy).abs() < 1e-6);
        assert!(!b.clipped);
    }
}
