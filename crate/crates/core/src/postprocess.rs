//! Final-stage filters: quality gate, elongation cap, and concentric de-duplication.

use std::cmp::Ordering;

use thiserror::Error;

use crate::conic::CraterEllipse;
use crate::mask::SegmentRecord;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid filter config: {0}")]
pub struct FilterConfigError(pub String);

/// Which crater survives when two detections share a centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeepPolicy {
    #[default]
    KeepLarger,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig<T> {
    pub min_quality: T,
    pub min_stability: T,
    pub max_axis_ratio: T,
    /// Centre tolerance as a fraction of the smaller semi-major axis of a pair.
    pub center_tol_frac: T,
    pub keep_policy: KeepPolicy,
}

impl<T: Scalar> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            min_quality: T::lit(0.7),
            min_stability: T::lit(0.8),
            max_axis_ratio: T::lit(3.0),
            center_tol_frac: T::lit(0.5),
            keep_policy: KeepPolicy::KeepLarger,
        }
    }
}

impl<T: Scalar> FilterConfig<T> {
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.min_quality) || !unit(self.min_stability) {
            return Err(FilterConfigError(format!(
                "min_quality = {} and min_stability = {} must lie in [0, 1]",
                self.min_quality, self.min_stability
            )));
        }
        if !(self.max_axis_ratio >= T::one()) {
            return Err(FilterConfigError(format!(
                "max_axis_ratio = {} must be >= 1",
                self.max_axis_ratio
            )));
        }
        if !(self.center_tol_frac > T::zero() && self.center_tol_frac <= T::one()) {
            return Err(FilterConfigError(format!(
                "center_tol_frac = {} must lie in (0, 1]",
                self.center_tol_frac
            )));
        }
        Ok(())
    }
}

/// Whether a record's quality and stability both reach the configured minimums.
pub fn passes_quality<T: Scalar>(r: &SegmentRecord, cfg: &FilterConfig<T>) -> bool {
    r.quality() >= cfg.min_quality.to_f64_lossy() && r.stability() >= cfg.min_stability.to_f64_lossy()
}

pub fn filter_quality<T: Scalar>(records: Vec<SegmentRecord>, cfg: &FilterConfig<T>) -> Vec<SegmentRecord> {
    records.into_iter().filter(|r| passes_quality(r, cfg)).collect()
}

/// Drops craters with `a / b` above `max_axis_ratio` (the bound itself is kept).
pub fn filter_elongation<T: Scalar>(
    craters: Vec<CraterEllipse<T>>,
    cfg: &FilterConfig<T>,
) -> Vec<CraterEllipse<T>> {
    craters
        .into_iter()
        .filter(|c| c.axis_ratio() <= cfg.max_axis_ratio)
        .collect()
}

fn cmp_t<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Catalog order: descending `a`, then ascending `cy`, `cx`, `source_id`;
/// the remaining fields only break exact ties.
pub fn catalog_order<T: Scalar>(x: &CraterEllipse<T>, y: &CraterEllipse<T>) -> Ordering {
    cmp_t(y.a, x.a)
        .then_with(|| cmp_t(x.cy, y.cy))
        .then_with(|| cmp_t(x.cx, y.cx))
        .then_with(|| x.source_id.cmp(&y.source_id))
        .then_with(|| cmp_t(y.b, x.b))
        .then_with(|| cmp_t(x.theta, y.theta))
        .then_with(|| x.class.cmp(&y.class))
        .then_with(|| cmp_t(y.quality, x.quality))
        .then_with(|| x.clipped.cmp(&y.clipped))
}

/// True when the two centres are within `center_tol_frac * min(a_i, a_j)`.
pub fn concentric<T: Scalar>(x: &CraterEllipse<T>, y: &CraterEllipse<T>, center_tol_frac: T) -> bool {
    x.center().distance(&y.center()) <= center_tol_frac * x.a.min(y.a)
}

/// Greedy concentric de-duplication.
///
/// Candidates are visited by descending `a` and a crater is dropped when it
/// is concentric with one already kept. A detection flagged `clipped` (cut
/// by an interior tile edge) is visited after every unclipped one, so a
/// complete view of a crater always outranks a truncated one.
pub fn dedup_concentric<T: Scalar>(
    craters: Vec<CraterEllipse<T>>,
    cfg: &FilterConfig<T>,
) -> Vec<CraterEllipse<T>> {
    let mut order = craters;
    order.sort_by(|x, y| x.clipped.cmp(&y.clipped).then_with(|| catalog_order(x, y)));
    let mut kept: Vec<CraterEllipse<T>> = Vec::with_capacity(order.len());
    for c in order {
        match cfg.keep_policy {
            KeepPolicy::KeepLarger => {
                if !kept.iter().any(|k| concentric(k, &c, cfg.center_tol_frac)) {
                    kept.push(c);
                }
            }
        }
    }
    kept.sort_by(catalog_order);
    kept
}
