//! Per-mask edge extraction: a Canny filter run on the binary mask itself,
//! plus the traced-contour fallback.

use thiserror::Error;

use crate::contour::contour_pixels;
use crate::mask::Mask;
use crate::scalar::{Point, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("no pixel survived hysteresis")]
    EmptyEdges,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("invalid Canny parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams<T> {
    /// Gaussian smoothing sigma in pixels.
    pub sigma: T,
    /// Weak threshold as a fraction of the maximum gradient magnitude.
    pub low: T,
    /// Strong threshold as a fraction of the maximum gradient magnitude.
    pub high: T,
}

impl<T: Scalar> Default for CannyParams<T> {
    fn default() -> Self {
        Self {
            sigma: T::one(),
            low: T::lit(0.1),
            high: T::lit(0.3),
        }
    }
}

impl<T: Scalar> CannyParams<T> {
    pub fn validate(&self) -> Result<(), EdgeError> {
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(EdgeError::InvalidParams(format!("sigma = {} must be > 0", self.sigma)));
        }
        if !(self.low > T::zero() && self.low < self.high && self.high <= T::one()) {
            return Err(EdgeError::InvalidParams(format!(
                "need 0 < low < high <= 1, got low = {}, high = {}",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Gaussian kernel radius `ceil(3 sigma)`.
    pub fn radius(&self) -> usize {
        (T::lit(3.0) * self.sigma).ceil().to_usize().unwrap_or(1).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgePointSet<T> {
    pub points: Vec<Point<T>>,
    pub source_id: String,
}

impl<T: Scalar> EdgePointSet<T> {
    pub fn new(points: Vec<Point<T>>) -> Self {
        Self {
            points,
            source_id: String::new(),
        }
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            points: self.points.iter().map(|p| p.translate(dx, dy)).collect(),
            source_id: self.source_id.clone(),
        }
    }
}

/// Dense scalar raster used internally by the filter stages.
struct Grid<T> {
    w: usize,
    h: usize,
    data: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    fn zeros(w: usize, h: usize) -> Self {
        Self {
            w,
            h,
            data: vec![T::zero(); w * h],
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.w + x]
    }
}

fn gaussian_kernel<T: Scalar>(sigma: T, radius: usize) -> Vec<T> {
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::from_usize_lossy(i) - T::from_usize_lossy(radius);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn smooth<T: Scalar>(src: &Grid<T>, kernel: &[T]) -> Grid<T> {
    let r = kernel.len() / 2;
    let mut tmp = Grid::zeros(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = T::zero();
            for (k, &wk) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - r as isize;
                if sx >= 0 && (sx as usize) < src.w {
                    acc = acc + wk * src.at(sx as usize, y);
                }
            }
            tmp.data[y * src.w + x] = acc;
        }
    }
    let mut out = Grid::zeros(src.w, src.h);
    for y in 0..src.h {
        for x in 0..src.w {
            let mut acc = T::zero();
            for (k, &wk) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - r as isize;
                if sy >= 0 && (sy as usize) < src.h {
                    acc = acc + wk * tmp.at(x, sy as usize);
                }
            }
            out.data[y * src.w + x] = acc;
        }
    }
    out
}

/// Runs the Canny pipeline on the mask as a 0/1 intensity image and returns
/// the retained edge pixels (pixel-centre coordinates, mask frame).
///
/// Only the foreground bounding box, zero-padded by the kernel radius plus a
/// two-pixel margin, is processed; outside that window every stage is zero.
pub fn canny_edges<T: Scalar>(
    mask: &Mask,
    params: &CannyParams<T>,
) -> Result<EdgePointSet<T>, EdgeError> {
    params.validate()?;
    let bbox = mask.bbox().ok_or(EdgeError::EmptyEdges)?;
    let pad = params.radius() + 2;
    let (ox, oy) = (bbox.x as i64 - pad as i64, bbox.y as i64 - pad as i64);
    let (w, h) = (bbox.w as usize + 2 * pad, bbox.h as usize + 2 * pad);

    let mut img = Grid::zeros(w, h);
    for (x, y) in mask.foreground() {
        let (lx, ly) = ((x as i64 - ox) as usize, (y as i64 - oy) as usize);
        img.data[ly * w + lx] = T::one();
    }
    let s = smooth(&img, &gaussian_kernel(params.sigma, params.radius()));

    let two = T::lit(2.0);
    let mut gx = Grid::zeros(w, h);
    let mut gy = Grid::zeros(w, h);
    let mut mag = Grid::zeros(w, h);
    let mut max_mag = T::zero();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let dx = (s.at(x + 1, y - 1) + two * s.at(x + 1, y) + s.at(x + 1, y + 1))
                - (s.at(x - 1, y - 1) + two * s.at(x - 1, y) + s.at(x - 1, y + 1));
            let dy = (s.at(x - 1, y + 1) + two * s.at(x, y + 1) + s.at(x + 1, y + 1))
                - (s.at(x - 1, y - 1) + two * s.at(x, y - 1) + s.at(x + 1, y - 1));
            let i = y * w + x;
            gx.data[i] = dx;
            gy.data[i] = dy;
            let m = dx.hypot(dy);
            mag.data[i] = m;
            max_mag = max_mag.max(m);
        }
    }
    if !(max_mag > T::zero()) {
        return Err(EdgeError::EmptyEdges);
    }

    // Non-maximum suppression. Exact ties across a symmetric step are common
    // on binary input; they resolve toward the brighter (foreground) side, so
    // the ridge stays one pixel wide.
    let tie = T::epsilon() * T::lit(1024.0) * max_mag;
    let tan_22_5 = T::lit(0.414_213_562_373_095_03);
    let mut thin = Grid::zeros(w, h);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag.data[i];
            if m <= tie {
                continue;
            }
            let (dx, dy) = (gx.data[i], gy.data[i]);
            let sx = if dx > T::zero() { 1 } else if dx < T::zero() { -1 } else { 0 };
            let sy = if dy > T::zero() { 1 } else if dy < T::zero() { -1 } else { 0 };
            let (px, py) = if dy.abs() <= tan_22_5 * dx.abs() {
                (sx, 0)
            } else if dx.abs() <= tan_22_5 * dy.abs() {
                (0, sy)
            } else {
                (sx, sy)
            };
            let ahead = mag.at((x as i64 + px) as usize, (y as i64 + py) as usize);
            let behind = mag.at((x as i64 - px) as usize, (y as i64 - py) as usize);
            if m > ahead + tie && m + tie >= behind {
                thin.data[i] = m;
            }
        }
    }

    // Double threshold + hysteresis over 8-connected weak pixels.
    let high = params.high * max_mag;
    let low = params.low * max_mag;
    let mut keep = vec![false; w * h];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &m) in thin.data.iter().enumerate() {
        if m >= high && m > T::zero() {
            keep[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !keep[j] && thin.data[j] >= low && thin.data[j] > T::zero() {
                    keep[j] = true;
                    stack.push(j);
                }
            }
        }
    }

    let points: Vec<Point<T>> = keep
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| Point::from_pixel((i % w) as i64 + ox, (i / w) as i64 + oy))
        .collect();
    if points.is_empty() {
        return Err(EdgeError::EmptyEdges);
    }
    Ok(EdgePointSet::new(points))
}

/// Moore-traced outer contour pixels of the first component.
pub fn boundary_points<T: Scalar>(mask: &Mask) -> Result<EdgePointSet<T>, EdgeError> {
    let pixels = contour_pixels(mask).ok_or(EdgeError::EmptyMask)?;
    Ok(EdgePointSet::new(
        pixels.into_iter().map(|(x, y)| Point::from_pixel(x, y)).collect(),
    ))
}

/// Canny edges, falling back to the traced contour when hysteresis keeps nothing.
pub fn edges_with_fallback<T: Scalar>(
    mask: &Mask,
    params: &CannyParams<T>,
) -> Result<EdgePointSet<T>, EdgeError> {
    match canny_edges(mask, params) {
        Err(EdgeError::EmptyEdges) => boundary_points(mask),
        other => other,
    }
}

/// Symmetric Hausdorff distance between two point sets (brute force).
pub fn hausdorff<T: Scalar>(a: &[Point<T>], b: &[Point<T>]) -> T {
    let directed = |p: &[Point<T>], q: &[Point<T>]| {
        p.iter()
            .map(|u| {
                q.iter()
                    .map(|v| u.distance(v))
                    .fold(T::infinity(), |m, d| m.min(d))
            })
            .fold(T::zero(), |m, d| m.max(d))
    };
    directed(a, b).max(directed(b, a))
}
