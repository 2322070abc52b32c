//! Group, coordinate and metric primitives for G = PSL(2,R) acting on the
//! upper half-plane.
//!
//! Elements are stored as unit-determinant real 2x2 matrices with a canonical
//! sign. Iwasawa coordinates follow g = n(x) a(y) k(theta), so that g(i) = z
//! and g'(i) = y e^{i theta}.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

use crate::CoreError;

/// Raw 2x2 real matrix, row major.
pub type Mat2 = [[f64; 2]; 2];

pub const NU: Mat2 = [[0.0, 1.0], [0.0, 0.0]];
pub const ALPHA: Mat2 = [[0.5, 0.0], [0.0, -0.5]];
pub const KAPPA: Mat2 = [[0.0, 0.5], [-0.5, 0.0]];
/// nu - kappa
pub const LAMBDA: Mat2 = [[0.0, 0.5], [0.5, 0.0]];

const SIGN_EPS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moebius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Moebius {
    /// Builds an element from any matrix with positive determinant.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Moebius { a, b, c, d }.normalized()
    }

    pub const fn identity() -> Self {
        Moebius { a: 1.0, b: 0.0, c: 0.0, d: 1.0 }
    }

    pub fn n(x: f64) -> Self {
        Moebius { a: 1.0, b: x, c: 0.0, d: 1.0 }
    }

    pub fn a(y: f64) -> Self {
        let s = y.sqrt();
        Moebius { a: s, b: 0.0, c: 0.0, d: 1.0 / s }
    }

    pub fn k(theta: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Moebius { a: c, b: s, c: -s, d: c }.normalized()
    }

    /// z -> -1/z
    pub const fn s() -> Self {
        Moebius { a: 0.0, b: 1.0, c: -1.0, d: 0.0 }
    }

    pub fn from_mat(m: Mat2) -> Self {
        Self::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    pub fn mat(&self) -> Mat2 {
        [[self.a, self.b], [self.c, self.d]]
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Rescales to unit determinant and fixes the sign so that the first
    /// entry of (a, b, c) that is not negligible is positive.
    pub fn normalized(self) -> Self {
        let det = self.det();
        let s = if det > 0.0 && (det - 1.0).abs() > 1e-13 { 1.0 / det.sqrt() } else { 1.0 };
        let mut m = Moebius { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s };
        let scale = m.a.abs().max(m.b.abs()).max(m.c.abs()).max(m.d.abs());
        let lead = [m.a, m.b, m.c]
            .into_iter()
            .find(|v| v.abs() > SIGN_EPS * scale)
            .unwrap_or(m.d);
        if lead < 0.0 {
            m = Moebius { a: -m.a, b: -m.b, c: -m.c, d: -m.d };
        }
        m
    }

    pub fn compose(&self, h: &Moebius) -> Moebius {
        Moebius {
            a: self.a * h.a + self.b * h.c,
            b: self.a * h.b + self.b * h.d,
            c: self.c * h.a + self.d * h.c,
            d: self.c * h.b + self.d * h.d,
        }
        .normalized()
    }

    pub fn inverse(&self) -> Moebius {
        Moebius { a: self.d, b: -self.b, c: -self.c, d: self.a }.normalized()
    }

    /// z -> (az + b)/(cz + d), no checks.
    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        (z * self.a + self.b) / (z * self.c + self.d)
    }

    /// cz + d
    #[inline]
    pub fn cocycle(&self, z: Complex64) -> Complex64 {
        z * self.c + self.d
    }

    /// Derivative (cz + d)^{-2} of the homography.
    #[inline]
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let j = self.cocycle(z);
        1.0 / (j * j)
    }

    /// Equality in PSL(2,R) up to a tolerance on the entries.
    pub fn approx_eq(&self, h: &Moebius, tol: f64) -> bool {
        let same = (self.a - h.a).abs() <= tol
            && (self.b - h.b).abs() <= tol
            && (self.c - h.c).abs() <= tol
            && (self.d - h.d).abs() <= tol;
        let opp = (self.a + h.a).abs() <= tol
            && (self.b + h.b).abs() <= tol
            && (self.c + h.c).abs() <= tol
            && (self.d + h.d).abs() <= tol;
        same || opp
    }
}

pub fn compose(g: &Moebius, h: &Moebius) -> Moebius {
    g.compose(h)
}

pub fn moebius_apply(g: &Moebius, z: Complex64) -> Result<Complex64, CoreError> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(CoreError::NonFinite);
    }
    if z.im <= 0.0 {
        return Err(CoreError::OutsideHalfPlane);
    }
    Ok(g.apply(z))
}

/// Point of G in Iwasawa coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IwasawaPoint {
    pub y: f64,
    pub x: f64,
    pub theta: f64,
}

impl IwasawaPoint {
    pub fn new(y: f64, x: f64, theta: f64) -> Self {
        IwasawaPoint { y, x, theta: reduce_angle(theta) }
    }

    pub fn origin() -> Self {
        IwasawaPoint { y: 1.0, x: 0.0, theta: 0.0 }
    }

    #[inline]
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }
}

/// Reduces an angle into [0, 2pi).
#[inline]
pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn iwasawa_decompose(g: &Moebius) -> IwasawaPoint {
    let n2 = g.c * g.c + g.d * g.d;
    IwasawaPoint {
        y: 1.0 / n2,
        x: (g.a * g.c + g.b * g.d) / n2,
        theta: reduce_angle(-2.0 * g.c.atan2(g.d)),
    }
}

pub fn iwasawa_compose(p: &IwasawaPoint) -> Moebius {
    let s = p.y.sqrt();
    let (sn, cs) = (0.5 * p.theta).sin_cos();
    // n(x) a(y) k(theta) multiplied out
    let (a0, b0, c0, d0) = (s, p.x / s, 0.0, 1.0 / s);
    Moebius {
        a: a0 * cs - b0 * sn,
        b: a0 * sn + b0 * cs,
        c: c0 * cs - d0 * sn,
        d: c0 * sn + d0 * cs,
    }
    .normalized()
}

/// Left translation p -> g p expressed in coordinates.
#[inline]
pub fn left_translate(g: &Moebius, p: &IwasawaPoint) -> IwasawaPoint {
    let z = p.z();
    let j = g.cocycle(z);
    let w = g.apply(z);
    IwasawaPoint { y: w.im, x: w.re, theta: reduce_angle(p.theta - 2.0 * j.arg()) }
}

/// Tangent vector in the frame (y d/dy, y d/dx, d/dtheta).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl TangentVector {
    pub fn norm2(&self, a: f64) -> f64 {
        let s = self.v + self.w;
        self.u * self.u + self.v * self.v + s * s / (a * a)
    }

    pub fn is_unit(&self, a: f64) -> bool {
        (self.norm2(a) - 1.0).abs() <= 1e-10
    }

    pub fn normalized(&self, a: f64) -> TangentVector {
        let n = self.norm2(a).sqrt();
        TangentVector { u: self.u / n, v: self.v / n, w: self.w / n }
    }
}

/// Push-forward of a tangent vector at p under the left translation by g.
pub fn push_tangent(g: &Moebius, p: &IwasawaPoint, t: &TangentVector) -> TangentVector {
    let z = p.z();
    let j = g.cocycle(z);
    let zdot = Complex64::new(t.v, t.u) * p.y;
    let zdot2 = zdot / (j * j);
    let y2 = g.apply(z).im;
    let wdot = t.w - 2.0 * (zdot * g.c / j).im;
    TangentVector { u: zdot2.im / y2, v: zdot2.re / y2, w: wdot }
}

pub fn require_metric(a: f64) -> Result<f64, CoreError> {
    if !a.is_finite() || a == 0.0 {
        Err(CoreError::DegenerateMetric)
    } else {
        Ok(a)
    }
}

/// Left-invariant metric in the coordinate order (y, x, theta).
pub fn metric_matrix(a: f64, y: f64) -> Result<[[f64; 3]; 3], CoreError> {
    require_metric(a)?;
    if !(y > 0.0) {
        return Err(CoreError::OutsideHalfPlane);
    }
    let ia2 = 1.0 / (a * a);
    let iy = 1.0 / y;
    Ok([
        [iy * iy, 0.0, 0.0],
        [0.0, (1.0 + ia2) * iy * iy, ia2 * iy],
        [0.0, ia2 * iy, ia2],
    ])
}

/// Finite-difference evaluation of the Laplacian
/// y^2 (f_yy + f_xx) - 2y f_{theta x} + (1 + a^2) f_{theta theta}.
pub fn laplacian_fd<F: Fn(f64, f64, f64) -> f64>(a: f64, f: F, p: &IwasawaPoint, h: f64) -> f64 {
    let (y, x, t) = (p.y, p.x, p.theta);
    let f0 = f(y, x, t);
    let fyy = (f(y + h, x, t) - 2.0 * f0 + f(y - h, x, t)) / (h * h);
    let fxx = (f(y, x + h, t) - 2.0 * f0 + f(y, x - h, t)) / (h * h);
    let ftt = (f(y, x, t + h) - 2.0 * f0 + f(y, x, t - h)) / (h * h);
    let ftx = (f(y, x + h, t + h) - f(y, x - h, t + h) - f(y, x + h, t - h) + f(y, x - h, t - h))
        / (4.0 * h * h);
    y * y * (fyy + fxx) - 2.0 * y * ftx + (1.0 + a * a) * ftt
}

pub fn hyperbolic_distance(z1: Complex64, z2: Complex64) -> f64 {
    let r = (z1 - z2).norm() / (2.0 * (z1.im * z2.im).sqrt());
    2.0 * r.asinh()
}

/// Distance from z to the full geodesic with the given boundary endpoints.
pub fn distance_to_geodesic(z: Complex64, e1: Boundary, e2: Boundary) -> f64 {
    match (e1, e2) {
        (Boundary::Infinity, Boundary::Real(u)) | (Boundary::Real(u), Boundary::Infinity) => {
            ((z.re - u).abs() / z.im).asinh()
        }
        (Boundary::Real(u1), Boundary::Real(u2)) => {
            let c = 0.5 * (u1 + u2);
            let r = 0.5 * (u1 - u2).abs();
            (((z - c).norm_sqr() - r * r).abs() / (2.0 * r * z.im)).asinh()
        }
        _ => f64::NAN,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Real(f64),
    Infinity,
}

pub fn poisson_kernel(z: Complex64, u: Boundary) -> Result<f64, CoreError> {
    if !(z.im > 0.0) {
        return Err(CoreError::OutsideHalfPlane);
    }
    match u {
        Boundary::Infinity => Ok(z.im),
        Boundary::Real(u) if u.is_finite() => {
            let dx = z.re - u;
            Ok(z.im / (dx * dx + z.im * z.im))
        }
        Boundary::Real(_) => Err(CoreError::NonFinite),
    }
}

pub fn busemann(u: Boundary, z1: Complex64, z2: Complex64) -> Result<f64, CoreError> {
    Ok(poisson_kernel(z2, u)? / poisson_kernel(z1, u)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Isometry {
    Elliptic,
    Parabolic(Mat2),
    Loxodromic(Mat2),
}

const PARABOLIC_TOL: f64 = 1e-9;

/// Writes a non-elliptic element as +-exp(sigma).
pub fn classify_and_log(g: &Moebius) -> Isometry {
    let tr = g.trace();
    let sgn = if tr < 0.0 { -1.0 } else { 1.0 };
    let m = [[sgn * g.a, sgn * g.b], [sgn * g.c, sgn * g.d]];
    let at = tr.abs();
    if (at - 2.0).abs() <= PARABOLIC_TOL {
        let s = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
        let is_identity = s.iter().flatten().all(|v| v.abs() <= PARABOLIC_TOL);
        if is_identity {
            Isometry::Elliptic
        } else {
            // remove the trace part so that sigma is exactly nilpotent-shaped
            let h = 0.5 * (s[0][0] - s[1][1]);
            Isometry::Parabolic([[h, s[0][1]], [s[1][0], -h]])
        }
    } else if at > 2.0 {
        let rho = (0.5 * at).acosh();
        let f = rho / rho.sinh();
        let ch = 0.5 * at;
        Isometry::Loxodromic([
            [f * (m[0][0] - ch), f * m[0][1]],
            [f * m[1][0], f * (m[1][1] - ch)],
        ])
    } else {
        Isometry::Elliptic
    }
}

/// Exponential of a trace-free 2x2 matrix, using sigma^2 = -det(sigma) I.
pub fn exp_tracefree(s: &Mat2) -> Mat2 {
    let delta = s[0][0] * s[0][0] + s[0][1] * s[1][0];
    let (c, f) = if delta > 1e-300 {
        let r = delta.sqrt();
        (r.cosh(), r.sinh() / r)
    } else if delta < -1e-300 {
        let r = (-delta).sqrt();
        (r.cos(), r.sin() / r)
    } else {
        (1.0, 1.0)
    };
    [
        [c + f * s[0][0], f * s[0][1]],
        [f * s[1][0], c + f * s[1][1]],
    ]
}

#[inline]
pub fn wrap_pi(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}
