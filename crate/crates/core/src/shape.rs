//! Circularity (`n`), axis-ratio (`m`) and ellipticity (`q`) indexes, and
//! the circle / ellipse / rejected decision built on them.

use thiserror::Error;

use crate::conic::{fit_ellipse, CraterEllipse, FitError};
use crate::contour::trace;
use crate::edges::{edges_with_fallback, CannyParams, EdgeError, EdgePointSet};
use crate::mask::Mask;
use crate::scalar::Scalar;

/// Smallest area for which a contour is meaningful for fitting.
pub const MIN_CONTOUR_AREA: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("mask area {area} px is too small for shape analysis")]
    DegenerateMask { area: usize },
    #[error("invalid shape thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeThresholds<T> {
    /// Tolerance around 1 for `n` and `m`.
    pub t_circ: T,
    /// Tolerance around 1 for `q`.
    pub t_ell: T,
    /// Upper bound on `a / b` for the ellipse class.
    pub max_axis_ratio: T,
    pub min_area_px: u64,
}

impl<T: Scalar> Default for ShapeThresholds<T> {
    fn default() -> Self {
        Self {
            t_circ: T::lit(0.25),
            t_ell: T::lit(0.25),
            max_axis_ratio: T::lit(3.0),
            min_area_px: 25,
        }
    }
}

impl<T: Scalar> ShapeThresholds<T> {
    pub fn uniform(t: T) -> Self {
        Self {
            t_circ: t,
            t_ell: t,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !unit(self.t_circ) || !unit(self.t_ell) {
            return Err(ShapeError::InvalidThresholds(format!(
                "t_circ = {} and t_ell = {} must lie in (0, 1]",
                self.t_circ, self.t_ell
            )));
        }
        if !(self.max_axis_ratio >= T::one()) {
            return Err(ShapeError::InvalidThresholds(format!(
                "max_axis_ratio = {} must be >= 1",
                self.max_axis_ratio
            )));
        }
        if (self.min_area_px as usize) < MIN_CONTOUR_AREA {
            return Err(ShapeError::InvalidThresholds(format!(
                "min_area_px = {} is below the fit minimum {MIN_CONTOUR_AREA}",
                self.min_area_px
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Circle,
    Ellipse,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport<T> {
    /// Mask area `A` in pixels.
    pub area_a: T,
    /// Traced perimeter `P`.
    pub perimeter_p: T,
    /// Circumference of the equal-area circle, `d = 2 pi sqrt(A / pi)`.
    pub ideal_circumference_d: T,
    pub n: T,
    /// `a / b` of the fitted ellipse; `None` when the fit failed.
    pub m: Option<T>,
    /// `pi a b / A`; `None` when the fit failed.
    pub q: Option<T>,
    pub fitted: Option<CraterEllipse<T>>,
    pub class: Verdict,
}

/// Length of the closed outer contour, with axial steps weighing 1 and diagonal steps `sqrt(2)`.
pub fn perimeter<T: Scalar>(mask: &Mask) -> Result<T, ShapeError> {
    let area = mask.count();
    if area < MIN_CONTOUR_AREA {
        return Err(ShapeError::DegenerateMask { area });
    }
    let (chain, _) = trace(mask).ok_or(ShapeError::DegenerateMask { area })?;
    let diagonal = chain.iter().filter(|s| s.is_diagonal()).count();
    let axial = chain.len() - diagonal;
    Ok(T::from_usize_lossy(axial) + T::SQRT_2() * T::from_usize_lossy(diagonal))
}

fn ideal_circumference<T: Scalar>(area: T) -> T {
    T::TAU() * (area / T::PI()).sqrt()
}

/// `n = 2 pi sqrt(A / pi) / P`.
pub fn circularity_n<T: Scalar>(mask: &Mask) -> Result<T, ShapeError> {
    let p: T = perimeter(mask)?;
    Ok(ideal_circumference(T::from_usize_lossy(mask.count())) / p)
}

/// Classifies with default Canny parameters for the ellipse fit.
pub fn classify<T: Scalar>(
    mask: &Mask,
    thresholds: &ShapeThresholds<T>,
) -> Result<ShapeReport<T>, ShapeError> {
    classify_with(mask, thresholds, &CannyParams::default())
}

pub fn classify_with<T: Scalar>(
    mask: &Mask,
    thresholds: &ShapeThresholds<T>,
    canny: &CannyParams<T>,
) -> Result<ShapeReport<T>, ShapeError> {
    let edges = edges_with_fallback(mask, canny);
    classify_edges(mask, edges.as_ref().map_err(Clone::clone), thresholds)
}

/// Classification given already extracted edges (or the edge failure).
///
/// The circle test (`n` and `m`) runs first; only masks failing it are
/// tested as ellipses (`q` and the axis-ratio cap).
pub fn classify_edges<T: Scalar>(
    mask: &Mask,
    edges: Result<&EdgePointSet<T>, EdgeError>,
    thresholds: &ShapeThresholds<T>,
) -> Result<ShapeReport<T>, ShapeError> {
    let area_px = mask.count();
    let perimeter_p: T = perimeter(mask)?;
    let area_a = T::from_usize_lossy(area_px);
    let ideal_circumference_d = ideal_circumference(area_a);
    let n = ideal_circumference_d / perimeter_p;

    let fitted: Option<CraterEllipse<T>> = if (area_px as u64) < thresholds.min_area_px {
        None
    } else {
        edges
            .ok()
            .and_then(|e| fit_ellipse(e).map_err(|_: FitError| ()).ok())
    };
    let m = fitted.as_ref().map(|e| e.axis_ratio());
    let q = fitted.as_ref().map(|e| e.area() / area_a);

    let class = match (m, q) {
        (Some(m), Some(q)) => {
            let one = T::one();
            if (n - one).abs() <= thresholds.t_circ && (m - one).abs() <= thresholds.t_circ {
                Verdict::Circle
            } else if (q - one).abs() <= thresholds.t_ell && m <= thresholds.max_axis_ratio {
                Verdict::Ellipse
            } else {
                Verdict::Rejected
            }
        }
        _ => Verdict::Rejected,
    };
    Ok(ShapeReport {
        area_a,
        perimeter_p,
        ideal_circumference_d,
        n,
        m,
        q,
        fitted,
        class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: u32, h: u32) -> Mask {
        Mask::from_fn(w + 4, h + 4, |x, y| (2..w + 2).contains(&x) && (2..h + 2).contains(&y)).unwrap()
    }

    fn disk(r: f64) -> Mask {
        let size = (2.0 * r) as u32 + 7;
        let c = (size / 2) as f64;
        Mask::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            dx * dx + dy * dy <= r * r
        })
        .unwrap()
    }

    fn ellipse(a: f64, b: f64) -> Mask {
        let (w, h) = ((2.0 * a) as u32 + 7, (2.0 * b) as u32 + 7);
        let (cx, cy) = ((w / 2) as f64, (h / 2) as f64);
        Mask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            (dx / a).powi(2) + (dy / b).powi(2) <= 1.0
        })
        .unwrap()
    }

    #[test]
    fn square_and_bar_perimeters() {
        assert_eq!(perimeter::<f64>(&rect(10, 10)).unwrap(), 36.0);
        for n in 5..12 {
            assert_eq!(perimeter::<f64>(&rect(n, 1)).unwrap(), 2.0 * (n as f64 - 1.0));
        }
        assert_eq!(perimeter::<f64>(&rect(4, 1)), Err(ShapeError::DegenerateMask { area: 4 }));
    }

    #[test]
    fn disk_perimeter_close_to_circumference() {
        let p: f64 = perimeter(&disk(50.0)).unwrap();
        let c = 2.0 * std::f64::consts::PI * 50.0;
        assert!((p - c).abs() / c <= 0.08, "P = {p}");
    }

    #[test]
    fn circularity_examples() {
        let n: f64 = circularity_n(&disk(50.0)).unwrap();
        assert!((0.9..=1.1).contains(&n), "n = {n}");
        let n: f64 = circularity_n(&rect(100, 100)).unwrap();
        let expected = 2.0 * std::f64::consts::PI * (10000.0 / std::f64::consts::PI).sqrt() / 396.0;
        assert!((n - expected).abs() < 1e-12);
        assert!((n - 0.895).abs() < 1e-3);
        let n: f64 = circularity_n(&rect(20, 1)).unwrap();
        assert!(n < 0.5);
    }

    #[test]
    fn classification_examples() {
        let t = ShapeThresholds::<f64>::uniform(0.1);
        assert_eq!(classify(&disk(50.0), &t).unwrap().class, Verdict::Circle);
        let r = classify(&ellipse(80.0, 40.0), &t).unwrap();
        assert_eq!(r.class, Verdict::Ellipse);
        assert!((r.m.unwrap() - 2.0).abs() < 0.1);
        let t = ShapeThresholds::<f64>::default();
        let r = classify(&rect(100, 20), &t).unwrap();
        assert_eq!(r.class, Verdict::Rejected);
        assert!(r.m.unwrap() > 3.0);
    }

    #[test]
    fn small_masks_are_rejected_without_fit() {
        let r = classify(&rect(4, 4), &ShapeThresholds::<f64>::default()).unwrap();
        assert_eq!(r.class, Verdict::Rejected);
        assert!(r.fitted.is_none() && r.m.is_none());
    }

    #[test]
    fn thresholds_validate() {
        assert!(ShapeThresholds::<f64>::default().validate().is_ok());
        assert!(ShapeThresholds::<f64>::uniform(0.0).validate().is_err());
        let mut t = ShapeThresholds::<f64>::default();
        t.min_area_px = 3;
        assert!(t.validate().is_err());
    }
}
