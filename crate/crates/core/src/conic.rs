//! Circle and ellipse fitting to edge point sets.
//!
//! Circles use the algebraic (Kåsa) least-squares fit. Ellipses use the
//! direct least-squares conic fit under the constraint `4AC - B^2 = 1`,
//! which can only return an ellipse. The scatter matrix is reduced to the
//! quadratic block and the remaining symmetric-definite pencil is solved
//! through `M^{-1/2} C M^{-1/2}`, whose single positive eigenvalue selects
//! the ellipse. Points are centred and scaled to RMS radius `sqrt(2)` first.

use std::fmt;

use thiserror::Error;

use crate::edges::EdgePointSet;
use crate::linalg::{self, Mat3};
use crate::scalar::{Point, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientSupport { needed: usize, got: usize },
    #[error("normal equations are singular (collinear or repeated points)")]
    SingularFit,
    #[error("constrained solution is not a proper ellipse")]
    NotAnEllipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeClass {
    Circle,
    Ellipse,
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeClass::Circle => "Circle",
            ShapeClass::Ellipse => "Ellipse",
        })
    }
}

impl std::str::FromStr for ShapeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Circle" | "circle" => Ok(ShapeClass::Circle),
            "Ellipse" | "ellipse" => Ok(ShapeClass::Ellipse),
            other => Err(format!("unknown crater class `{other}`")),
        }
    }
}

/// A fitted crater rim: centre, semi-axes `a >= b`, and major-axis angle in `[0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CraterEllipse<T> {
    pub cx: T,
    pub cy: T,
    pub a: T,
    pub b: T,
    pub theta: T,
    pub class: ShapeClass,
    /// Segment quality carried over from the mask generator.
    pub quality: T,
    pub source_id: String,
    /// RMS Sampson distance of the fitted support points, in pixels.
    pub residual: T,
    /// Set when the segment touched an interior tile edge and may be truncated.
    pub clipped: bool,
}

fn wrap_angle<T: Scalar>(theta: T) -> T {
    let pi = T::PI();
    let mut t = theta % pi;
    if t < T::zero() {
        t = t + pi;
    }
    if t >= pi {
        t = t - pi;
    }
    // Adding zero turns -0 into +0.
    t + T::zero()
}

impl<T: Scalar> CraterEllipse<T> {
    pub fn circle(cx: T, cy: T, r: T) -> Self {
        Self {
            cx,
            cy,
            a: r,
            b: r,
            theta: T::zero(),
            class: ShapeClass::Circle,
            quality: T::one(),
            source_id: String::new(),
            residual: T::zero(),
            clipped: false,
        }
    }

    /// Builds an ellipse, swapping the axes (and turning theta by pi/2) so that `a >= b`.
    pub fn ellipse(cx: T, cy: T, a: T, b: T, theta: T) -> Self {
        let (a, b, theta) = if b > a {
            (b, a, theta + T::FRAC_PI_2())
        } else {
            (a, b, theta)
        };
        Self {
            cx,
            cy,
            a,
            b,
            theta: wrap_angle(theta),
            class: ShapeClass::Ellipse,
            quality: T::one(),
            source_id: String::new(),
            residual: T::zero(),
            clipped: false,
        }
    }

    pub fn with_quality(mut self, quality: T) -> Self {
        self.quality = quality;
        self
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn with_class(mut self, class: ShapeClass) -> Self {
        self.class = class;
        self
    }

    pub fn center(&self) -> Point<T> {
        Point::new(self.cx, self.cy)
    }

    pub fn axis_ratio(&self) -> T {
        self.a / self.b
    }

    pub fn eccentricity(&self) -> T {
        eccentricity(self)
    }

    pub fn area(&self) -> T {
        T::PI() * self.a * self.b
    }

    pub fn translate(&self, dx: T, dy: T) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..self.clone()
        }
    }

    /// Boundary point at parametric angle `t`.
    pub fn point_at(&self, t: T) -> Point<T> {
        let (st, ct) = t.sin_cos();
        let (sr, cr) = self.theta.sin_cos();
        Point::new(
            self.cx + self.a * ct * cr - self.b * st * sr,
            self.cy + self.a * ct * sr + self.b * st * cr,
        )
    }

    /// `n` evenly spaced boundary points.
    pub fn sample(&self, n: usize) -> Vec<Point<T>> {
        let step = T::TAU() / T::from_usize_lossy(n);
        (0..n).map(|i| self.point_at(step * T::from_usize_lossy(i))).collect()
    }

    /// Normalized radial coordinate: `< 1` inside, `1` on the rim.
    pub fn radial(&self, x: T, y: T) -> T {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (s, c) = self.theta.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        self.radial(x, y) <= T::one()
    }

    /// Implicit conic `[A, B, C, D, E, F]` scaled so that `4AC - B^2 = 1`.
    pub fn to_conic(&self) -> [T; 6] {
        let (s, c) = self.theta.sin_cos();
        let (ia, ib) = (T::one() / (self.a * self.a), T::one() / (self.b * self.b));
        let qa = c * c * ia + s * s * ib;
        let qb = T::lit(2.0) * c * s * (ia - ib);
        let qc = s * s * ia + c * c * ib;
        let d = -(T::lit(2.0) * qa * self.cx + qb * self.cy);
        let e = -(qb * self.cx + T::lit(2.0) * qc * self.cy);
        let f = qa * self.cx * self.cx + qb * self.cx * self.cy + qc * self.cy * self.cy - T::one();
        let k = (T::lit(4.0) * qa * qc - qb * qb).sqrt();
        [qa / k, qb / k, qc / k, d / k, e / k, f / k]
    }

    /// Axis-aligned extent `(x0, y0, x1, y1)` of the ellipse.
    pub fn extent(&self) -> (T, T, T, T) {
        let (s, c) = self.theta.sin_cos();
        let hx = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let hy = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
    }
}

/// `sqrt(1 - b^2 / a^2)`.
pub fn eccentricity<T: Scalar>(e: &CraterEllipse<T>) -> T {
    let r = e.b / e.a;
    (T::one() - r * r).max(T::zero()).sqrt()
}

/// Sum of squared algebraic residuals of `points` against `conic`.
pub fn algebraic_residual<T: Scalar>(conic: &[T; 6], points: &[Point<T>]) -> T {
    let [a, b, c, d, e, f] = *conic;
    points
        .iter()
        .map(|p| {
            let r = a * p.x * p.x + b * p.x * p.y + c * p.y * p.y + d * p.x + e * p.y + f;
            r * r
        })
        .sum()
}

fn sampson_rms<T: Scalar>(conic: &[T; 6], points: &[Point<T>]) -> T {
    if points.is_empty() {
        return T::zero();
    }
    let [a, b, c, d, e, f] = *conic;
    let two = T::lit(2.0);
    let total: T = points
        .iter()
        .map(|p| {
            let r = a * p.x * p.x + b * p.x * p.y + c * p.y * p.y + d * p.x + e * p.y + f;
            let gx = two * a * p.x + b * p.y + d;
            let gy = b * p.x + two * c * p.y + e;
            let g2 = gx * gx + gy * gy;
            if g2 > T::zero() {
                r * r / g2
            } else {
                T::zero()
            }
        })
        .sum();
    (total / T::from_usize_lossy(points.len())).sqrt()
}

/// Centroid and the isotropic scale that maps the RMS radius to `sqrt(2)`.
struct Normalization<T> {
    mx: T,
    my: T,
    scale: T,
}

impl<T: Scalar> Normalization<T> {
    fn of(points: &[Point<T>]) -> Option<Self> {
        let n = T::from_usize_lossy(points.len());
        let mx = points.iter().map(|p| p.x).sum::<T>() / n;
        let my = points.iter().map(|p| p.y).sum::<T>() / n;
        let ms = points
            .iter()
            .map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2))
            .sum::<T>()
            / n;
        if !(ms > T::zero()) || !ms.is_finite() {
            return None;
        }
        Some(Self {
            mx,
            my,
            scale: T::SQRT_2() / ms.sqrt(),
        })
    }

    fn apply(&self, p: &Point<T>) -> (T, T) {
        ((p.x - self.mx) * self.scale, (p.y - self.my) * self.scale)
    }
}

fn singular_tol<T: Scalar>() -> T {
    T::epsilon().sqrt() * T::lit(1e-2)
}

/// Algebraic least-squares circle through `points`.
pub fn fit_circle<T: Scalar>(points: &EdgePointSet<T>) -> Result<CraterEllipse<T>, FitError> {
    let pts = &points.points;
    if pts.len() < 3 {
        return Err(FitError::InsufficientSupport {
            needed: 3,
            got: pts.len(),
        });
    }
    let norm = Normalization::of(pts).ok_or(FitError::SingularFit)?;
    // Rows [u, v, 1], target -(u^2 + v^2).
    let mut ata: Mat3<T> = linalg::zeros();
    let mut atb = [T::zero(); 3];
    for p in pts {
        let (u, v) = norm.apply(p);
        let row = [u, v, T::one()];
        let rhs = -(u * u + v * v);
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] = ata[i][j] + row[i] * row[j];
            }
            atb[i] = atb[i] + row[i] * rhs;
        }
    }
    let [d, e, f] = linalg::solve(&ata, &atb, singular_tol()).ok_or(FitError::SingularFit)?;
    let (u0, v0) = (-d / T::lit(2.0), -e / T::lit(2.0));
    let r2 = u0 * u0 + v0 * v0 - f;
    if !(r2 > T::zero()) || !r2.is_finite() {
        return Err(FitError::SingularFit);
    }
    let mut c = CraterEllipse::circle(
        u0 / norm.scale + norm.mx,
        v0 / norm.scale + norm.my,
        r2.sqrt() / norm.scale,
    )
    .with_source_id(points.source_id.clone());
    c.residual = sampson_rms(&c.to_conic(), pts);
    Ok(c)
}

/// Direct least-squares ellipse through `points`.
pub fn fit_ellipse<T: Scalar>(points: &EdgePointSet<T>) -> Result<CraterEllipse<T>, FitError> {
    let pts = &points.points;
    if pts.len() < 5 {
        return Err(FitError::InsufficientSupport {
            needed: 5,
            got: pts.len(),
        });
    }
    let norm = Normalization::of(pts).ok_or(FitError::NotAnEllipse)?;

    // Scatter blocks for quadratic terms [u^2, uv, v^2] and linear terms [u, v, 1].
    let mut s1: Mat3<T> = linalg::zeros();
    let mut s2: Mat3<T> = linalg::zeros();
    let mut s3: Mat3<T> = linalg::zeros();
    for p in pts {
        let (u, v) = norm.apply(p);
        let q = [u * u, u * v, v * v];
        let l = [u, v, T::one()];
        for i in 0..3 {
            for j in 0..3 {
                s1[i][j] = s1[i][j] + q[i] * q[j];
                s2[i][j] = s2[i][j] + q[i] * l[j];
                s3[i][j] = s3[i][j] + l[i] * l[j];
            }
        }
    }
    let s3_inv = linalg::inverse(&s3, singular_tol()).ok_or(FitError::NotAnEllipse)?;
    // Linear part as a function of the quadratic part: l = T q.
    let t = linalg::mul(&s3_inv, &linalg::transpose(&s2));
    let t = t.map(|row| row.map(|v| -v));
    let mut m = linalg::mul(&s2, &t);
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = s1[i][j] + m[i][j];
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            let avg = (m[i][j] + m[j][i]) / T::lit(2.0);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }

    let quad = constrained_minimizer(&m).ok_or(FitError::NotAnEllipse)?;
    let lin = linalg::mul_vec(&t, &quad);
    let conic = [quad[0], quad[1], quad[2], lin[0], lin[1], lin[2]];
    let mut e = conic_to_ellipse(&conic).ok_or(FitError::NotAnEllipse)?;
    e.cx = e.cx / norm.scale + norm.mx;
    e.cy = e.cy / norm.scale + norm.my;
    e.a = e.a / norm.scale;
    e.b = e.b / norm.scale;
    e.source_id = points.source_id.clone();
    e.residual = sampson_rms(&e.to_conic(), pts);
    Ok(e)
}

/// Ellipse-constraint quadratic form: `q^T C q = 4AC - B^2`.
fn constraint<T: Scalar>() -> Mat3<T> {
    let (z, one, two) = (T::zero(), T::one(), T::lit(2.0));
    [[z, z, two], [z, -one, z], [two, z, z]]
}

fn quad_form<T: Scalar>(m: &Mat3<T>, v: &[T; 3]) -> T {
    let mv = linalg::mul_vec(m, v);
    (0..3).map(|i| v[i] * mv[i]).sum()
}

/// Minimizes `q^T M q` subject to `q^T C q = 1` for symmetric PSD `M`.
fn constrained_minimizer<T: Scalar>(m: &Mat3<T>) -> Option<[T; 3]> {
    let c = constraint::<T>();
    let (vals, vecs) = linalg::symmetric_eigen(m);
    let top = vals[2];
    if !(top > T::zero()) || !top.is_finite() {
        return None;
    }
    // Noise-free data: the null vector is already the exact conic.
    let null_tol = T::epsilon() * T::lit(64.0) * top;
    if vals[0] <= null_tol && quad_form(&c, &vecs[0]) > T::zero() {
        return Some(vecs[0]);
    }
    let floor = null_tol;
    let inv_sqrt: [T; 3] = vals.map(|d| T::one() / d.max(floor).sqrt());
    // W = U diag(d^{-1/2}) U^T.
    let mut w: Mat3<T> = linalg::zeros();
    for i in 0..3 {
        for j in 0..3 {
            w[i][j] = (0..3).map(|k| vecs[k][i] * inv_sqrt[k] * vecs[k][j]).sum();
        }
    }
    let k = linalg::mul(&linalg::mul(&w, &c), &w);
    let (kvals, kvecs) = linalg::symmetric_eigen(&k);
    if !(kvals[2] > T::zero()) {
        return None;
    }
    let q = linalg::mul_vec(&w, &kvecs[2]);
    (quad_form(&c, &q) > T::zero()).then_some(q)
}

/// Converts `A x^2 + B xy + C y^2 + D x + E y + F = 0` to centre/axes/angle form.
pub fn conic_to_ellipse<T: Scalar>(conic: &[T; 6]) -> Option<CraterEllipse<T>> {
    let mut k = *conic;
    if k[0] + k[2] < T::zero() {
        k = k.map(|v| -v);
    }
    let [a, b, c, d, e, f] = k;
    let two = T::lit(2.0);
    let det = T::lit(4.0) * a * c - b * b;
    if !(det > T::zero()) {
        return None;
    }
    let x0 = (b * e - two * c * d) / det;
    let y0 = (b * d - two * a * e) / det;
    let f0 = f + (d * x0 + e * y0) / two;
    if !(f0 < T::zero()) {
        return None;
    }
    let mean = (a + c) / two;
    let dev = (((a - c) / two).powi(2) + (b / two).powi(2)).sqrt();
    let (l_min, l_max) = (mean - dev, mean + dev);
    if !(l_min > T::zero()) {
        return None;
    }
    let major = (-f0 / l_min).sqrt();
    let minor = (-f0 / l_max).sqrt();
    let theta = (-b).atan2(c - a) / two;
    let out = CraterEllipse::ellipse(x0, y0, major, minor, theta);
    (out.a.is_finite() && out.b > T::zero()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> EdgePointSet<f64> {
        EdgePointSet::new(v.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    #[test]
    fn three_point_circle() {
        let c = fit_circle(&pts(&[(0.0, 1.0), (1.0, 0.0), (0.0, -1.0)])).unwrap();
        assert!(c.cx.abs() < 1e-12 && c.cy.abs() < 1e-12);
        assert!((c.a - 1.0).abs() < 1e-12 && c.a == c.b);
        assert_eq!(c.class, ShapeClass::Circle);
        assert_eq!(c.theta, 0.0);
    }

    #[test]
    fn circle_errors() {
        assert_eq!(
            fit_circle(&pts(&[(0.0, 0.0), (1.0, 1.0)])),
            Err(FitError::InsufficientSupport { needed: 3, got: 2 })
        );
        assert_eq!(
            fit_circle(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])),
            Err(FitError::SingularFit)
        );
    }

    #[test]
    fn ellipse_errors() {
        assert!(matches!(
            fit_ellipse(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)])),
            Err(FitError::InsufficientSupport { needed: 5, got: 4 })
        ));
        let line: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert!(fit_ellipse(&pts(&line)).is_err());
        let same = vec![(3.0, 3.0); 8];
        assert!(fit_ellipse(&pts(&same)).is_err());
    }

    #[test]
    fn eccentricity_closed_forms() {
        assert_eq!(CraterEllipse::circle(0.0, 0.0, 3.0).eccentricity(), 0.0);
        let e = CraterEllipse::ellipse(0.0, 0.0, 4.0, 2.0, 0.0);
        assert!((eccentricity(&e) - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constructor_orders_axes() {
        let e = CraterEllipse::<f64>::ellipse(0.0, 0.0, 2.0, 5.0, 0.1);
        assert_eq!((e.a, e.b), (5.0, 2.0));
        assert!((e.theta - (0.1 + std::f64::consts::FRAC_PI_2)).abs() < 1e-15);
        let e = CraterEllipse::ellipse(0.0, 0.0, 5.0, 2.0, -0.5);
        assert!((e.theta - (std::f64::consts::PI - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn conic_round_trip() {
        let e = CraterEllipse::<f64>::ellipse(3.0, -2.0, 7.0, 3.0, 1.1);
        let back = conic_to_ellipse(&e.to_conic()).unwrap();
        assert!((back.cx - 3.0).abs() < 1e-12 && (back.cy + 2.0).abs() < 1e-12);
        assert!((back.a - 7.0).abs() < 1e-12 && (back.b - 3.0).abs() < 1e-12);
        assert!((back.theta - 1.1).abs() < 1e-12);
        for p in e.sample(16) {
            assert!((e.radial(p.x, p.y) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hyperbola_is_not_an_ellipse() {
        assert!(conic_to_ellipse(&[1.0, 0.0, -1.0, 0.0, 0.0, -1.0]).is_none());
    }
}
