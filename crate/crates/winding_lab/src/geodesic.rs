//! Geodesic flow of the left-invariant metric
//!   2L = y^-2 y'^2 + (1 + a^-2) y^-2 x'^2 + 2 a^-2 y^-1 x' theta' + a^-2 theta'^2
//! in closed form, leaf lifts of hyperbolic geodesics, and winding
//! integrals along reduced trajectories.
//!
//! With c = v + w, c' y = v + c/a^2 and C^2 = u^2 + v^2, the angle phi of
//! the projected velocity (v + iu = C e^{-i phi}) obeys
//! phi' = C (k + cos phi). Writing tan(phi/2) = N/D, the vector q = (D, N)
//! solves the linear system q' = B q with B = [[0, -beta], [alpha, 0]],
//! alpha = C(k+1)/2, beta = C(k-1)/2, and everything follows from
//! q(s) = exp(sB) q(0):
//!   y_s = y_0 / |q_s|^2,
//!   x_s = x_0 + C y_0 shc(s) (D_0 D_s - N_0 N_s) / |q_s|^2,
//!   theta_s = theta_0 + c (1 + a^-2) s - (phi_s - phi_0).

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::brownian::{Checkpoint, WindingSample};
use crate::forms::HarmonicFormSpec;
use crate::hyperbolic_core::{
    iwasawa_compose, left_translate, push_tangent, reduce_angle, require_metric, Boundary, IwasawaPoint, Moebius,
    TangentVector,
};
use crate::modular_group::{op_matrix, reduce_gamma1_with, sample_fundamental_domain, ModularGroupSpec};
use crate::rng;
use crate::CoreError;

/// Half-width of the band around |k| = 1 handled as a horocycle.
pub const HOROCYCLE_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// |k| > 1: the projection is a circle inside the half-plane.
    Tan,
    /// |k| < 1: the projection is a quasi-geodesic.
    Tanh,
    Horocycle,
    /// c' = 0: the projection is a Euclidean line through a boundary point.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicParams {
    pub a: f64,
    pub c: f64,
    pub c_prime: f64,
    pub c_second: f64,
    pub big_c: f64,
    pub k: f64,
    pub eps: i8,
    /// Phase of the tanh/tan normal form, when the initial angle lies in its
    /// range.
    pub s0: Option<f64>,
    pub branch: Branch,
    pub phi0: f64,
    alpha: f64,
    beta: f64,
    /// c' y_0 / 2, the conserved value of alpha D^2 + beta N^2 on the unit q_0.
    q0: f64,
}

#[inline]
fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn constants_from_initial(p: &IwasawaPoint, t: &TangentVector, a: f64) -> Result<GeodesicParams, CoreError> {
    require_metric(a)?;
    if ![p.y, p.x, p.theta, t.u, t.v, t.w].iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite);
    }
    if !(p.y > 0.0) {
        return Err(CoreError::OutsideHalfPlane);
    }
    let n2 = t.norm2(a);
    if (n2 - 1.0).abs() > 1e-9 {
        return Err(CoreError::NotUnit(n2));
    }
    let a2 = a * a;
    let c = t.v + t.w;
    let cpy = t.v + c / a2;
    let c_prime = cpy / p.y;
    let c_second = t.u + c_prime * p.x;
    let big_c = t.u.hypot(t.v);
    let k = if big_c > 0.0 { c / (a2 * big_c) } else { f64::INFINITY.copysign(c) };
    let phi0 = (-t.u).atan2(t.v);
    let (alpha, beta) = (0.5 * (c / a2 + big_c), 0.5 * (c / a2 - big_c));
    let branch = if c_prime == 0.0 {
        Branch::Vertical
    } else if (k.abs() - 1.0).abs() <= HOROCYCLE_BAND {
        Branch::Horocycle
    } else if k.abs() > 1.0 {
        Branch::Tan
    } else {
        Branch::Tanh
    };
    let tau0 = (0.5 * phi0).tan();
    let s0 = match branch {
        Branch::Tanh | Branch::Vertical => {
            let m = ((1.0 + k) / (1.0 - k)).sqrt();
            let lam = 0.5 * big_c * (1.0 - k * k).sqrt();
            (tau0.abs() < m && lam > 0.0).then(|| -(tau0 / m).atanh() / lam)
        }
        Branch::Tan => {
            let m = ((k + 1.0) / (k - 1.0)).sqrt();
            let om = 0.5 * big_c * (k * k - 1.0).sqrt();
            (om > 0.0).then(|| -(tau0 / m).atan() / om)
        }
        Branch::Horocycle => (big_c > 0.0).then(|| -tau0 / big_c),
    };
    Ok(GeodesicParams {
        a,
        c,
        c_prime,
        c_second,
        big_c,
        k,
        eps: sign((1.0 + a2) * t.v + t.w),
        s0,
        branch,
        phi0,
        alpha,
        beta,
        q0: 0.5 * cpy,
    })
}

/// Flowed state with the cumulative change phi_s - phi_0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowState {
    pub point: IwasawaPoint,
    /// Unreduced angle.
    pub theta: f64,
    pub tangent: TangentVector,
    pub dphi: f64,
}

impl GeodesicParams {
    /// (cosh, sinh(l s)/l) for l^2 = -alpha beta, continued to cos/sin.
    fn propagator(&self, s: f64) -> (f64, f64) {
        let mu = -self.alpha * self.beta;
        if mu > 0.0 {
            let l = mu.sqrt();
            ((l * s).cosh(), (l * s).sinh() / l)
        } else if mu < 0.0 {
            let w = (-mu).sqrt();
            ((w * s).cos(), (w * s).sin() / w)
        } else {
            (1.0, s)
        }
    }

    pub fn flow_state(&self, p0: &IwasawaPoint, s: f64) -> FlowState {
        let (d0, n0) = ((0.5 * self.phi0).cos(), (0.5 * self.phi0).sin());
        let (ch, shc) = self.propagator(s);
        let d = ch * d0 - shc * self.beta * n0;
        let n = ch * n0 + shc * self.alpha * d0;
        let q2 = d * d + n * n;
        let y = p0.y / q2;
        let x = p0.x + self.big_c * p0.y * shc * (d0 * d - n0 * n) / q2;
        let cross = shc * self.q0;
        let dot = d0 * d + n0 * n;
        let mut half = cross.atan2(dot);
        if self.branch == Branch::Tan {
            // q winds around the origin; count whole periods
            let w = (self.alpha * self.beta).sqrt();
            let period = TAU / w;
            let dir = if (self.q0 >= 0.0) == (s >= 0.0) { 1.0 } else { -1.0 };
            if dir * half < 0.0 {
                half += dir * TAU;
            }
            half += dir * TAU * (s.abs() / period).floor();
        }
        let dphi = 2.0 * half;
        let theta = p0.theta + self.c * (1.0 + 1.0 / (self.a * self.a)) * s - dphi;
        let phi = self.phi0 + dphi;
        let v = self.big_c * phi.cos();
        let u = -self.big_c * phi.sin();
        FlowState {
            point: IwasawaPoint { y, x, theta: reduce_angle(theta) },
            theta,
            tangent: TangentVector { u, v, w: self.c - v },
            dphi,
        }
    }
}

pub fn flow(params: &GeodesicParams, p0: &IwasawaPoint, s: f64) -> IwasawaPoint {
    params.flow_state(p0, s).point
}

/// Twice the Lagrangian of a velocity (y', x', theta') at height y.
pub fn lagrangian2(a: f64, y: f64, dy: f64, dx: f64, dth: f64) -> f64 {
    let ia2 = 1.0 / (a * a);
    dy * dy / (y * y) + (1.0 + ia2) * dx * dx / (y * y) + 2.0 * ia2 * dx * dth / y + ia2 * dth * dth
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeafElement {
    pub point: IwasawaPoint,
    pub tangent: TangentVector,
    pub k: f64,
    pub eps: i8,
}

impl LeafElement {
    /// Residuals of the three leaf equations.
    pub fn leaf_residuals(&self, a: f64) -> (f64, f64, bool) {
        let a2 = a * a;
        let s = (1.0 + a2 * self.k * self.k).sqrt();
        let t = &self.tangent;
        let r1 = t.u * t.u + t.v * t.v - 1.0 / (s * s);
        let r2 = t.v + t.w - self.k * a2 / s;
        let side = sign((1.0 + a2) * t.v + t.w) == self.eps;
        (r1, r2, side)
    }
}

/// Liouville sample: point uniform in the fundamental domain, angle and
/// coset uniform. The returned direction is that of the line element the
/// Iwasawa frame carries, i e^{i theta}.
pub fn sample_liouville<R: Rng + ?Sized>(group: &ModularGroupSpec, rng: &mut R) -> (IwasawaPoint, usize, f64) {
    let z = sample_fundamental_domain(rng);
    let theta = rng.random::<f64>() * TAU;
    let c = rng.random_range(0..group.index);
    (IwasawaPoint::new(z.im, z.re, theta), c, reduce_angle(theta + FRAC_PI_2))
}

/// Element of G carrying (i, upward) to (z0, direction beta).
fn frame_at(z0: Complex64, beta: f64) -> Moebius {
    iwasawa_compose(&IwasawaPoint::new(z0.im, z0.re, beta - FRAC_PI_2))
}

fn boundary_image(g: &Moebius, t: f64) -> Boundary {
    let den = g.c * t + g.d;
    let num = g.a * t + g.b;
    if den.abs() <= 1e-300 * num.abs().max(1.0) {
        Boundary::Infinity
    } else {
        Boundary::Real(num / den)
    }
}

/// Endpoints (backward, forward) of the hyperbolic geodesic through z0 in
/// Euclidean direction `dir`.
pub fn geodesic_endpoints(z0: Complex64, dir: f64) -> (Boundary, Boundary) {
    // in the frame sending "up" to dir, the geodesic is the imaginary axis
    let g = frame_at(z0, dir);
    let back = boundary_image(&g, 0.0);
    let fwd = if g.c == 0.0 { Boundary::Infinity } else { Boundary::Real(g.a / g.c) };
    (back, fwd)
}

/// Lift of the line element (z0, dir) of a hyperbolic geodesic to the leaf
/// with parameter k: the projection runs at constant distance atanh|k| to
/// the geodesic, on its left for k > 0, in the same direction for
/// eps = +1 and in the reverse direction for eps = -1 (which is the mirror
/// image across the geodesic).
pub fn lift_to_leaf(z0: Complex64, dir: f64, k: f64, eps: i8, theta0: f64, a: f64) -> Result<LeafElement, CoreError> {
    require_metric(a)?;
    if !(k.abs() < 1.0) {
        return Err(CoreError::LeafParameter(k));
    }
    if !(z0.im > 0.0) {
        return Err(CoreError::OutsideHalfPlane);
    }
    if eps != 1 && eps != -1 {
        return Err(CoreError::InvalidForm(format!("eps must be +-1, got {eps}")));
    }
    let travel = if eps > 0 { dir } else { dir + PI };
    // normal pointing to the side of the projection
    let side = if k >= 0.0 { 1.0 } else { -1.0 };
    let g = frame_at(z0, travel + side * FRAC_PI_2);
    let d = k.abs().atanh();
    let a2 = a * a;
    let cc = 1.0 / (1.0 + a2 * k * k).sqrt();
    // standard frame: normal is up; travel is +1 (k >= 0) or -1 (k < 0)
    let v = side * cc;
    let std_p = IwasawaPoint::new(d.exp(), 0.0, 0.0);
    let std_t = TangentVector { u: 0.0, v, w: k * a2 * cc - v };
    let mut point = left_translate(&g, &std_p);
    let tangent = push_tangent(&g, &std_p, &std_t);
    point.theta = reduce_angle(theta0);
    let eps_chart = sign((1.0 + a2) * tangent.v + tangent.w);
    Ok(LeafElement { point, tangent, k, eps: eps_chart })
}

/// Endpoints (backward, forward) of the geodesic asymptotic to the
/// projection of a flow line.
pub fn asymptotic_geodesic(params: &GeodesicParams, p0: &IwasawaPoint) -> Result<(Boundary, Boundary), CoreError> {
    if !(params.k.abs() < 1.0 - HOROCYCLE_BAND) {
        return Err(CoreError::LeafParameter(params.k));
    }
    let a2 = params.a * params.a;
    if params.c_prime == 0.0 {
        // Euclidean line through the real point x0 + (c/a^2) y0 / u
        let u = params.c_second;
        let base = p0.x + params.c / a2 * p0.y / u;
        return Ok(if u > 0.0 {
            (Boundary::Real(base), Boundary::Infinity)
        } else {
            (Boundary::Infinity, Boundary::Real(base))
        });
    }
    let xc = params.c_second / params.c_prime;
    let rho = params.big_c / params.c_prime.abs() * (1.0 - params.k * params.k).sqrt();
    Ok(if params.c_prime > 0.0 {
        (Boundary::Real(xc - rho), Boundary::Real(xc + rho))
    } else {
        (Boundary::Real(xc + rho), Boundary::Real(xc - rho))
    })
}

/// Reduces a line element into the fundamental domain.
pub fn reduce_element(group: &ModularGroupSpec, p: &IwasawaPoint, t: &TangentVector, coset: usize) -> (IwasawaPoint, TangentVector, usize) {
    let mut word = Moebius::identity();
    let mut c = coset;
    reduce_gamma1_with(p.z(), |op| {
        word = op_matrix(op).compose(&word);
        c = group.apply_op(c, op);
    });
    (left_translate(&word, p), push_tangent(&word, p, t), c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSample {
    pub k: f64,
    pub eps: i8,
    pub sample: WindingSample,
    /// Closed-form integral of dtheta along the lift to G, per checkpoint.
    pub dtheta: Vec<f64>,
}

/// Winding integrals of `forms` along the geodesic from `elem` on sheet
/// `coset`. The trajectory is rebased into the fundamental domain in
/// segments short enough to stay at height >= 0.45, and each form is
/// integrated exactly by its primitive on the segment's sheet.
pub fn geodesic_winding(
    group: &ModularGroupSpec,
    forms: &[HarmonicFormSpec],
    elem: &LeafElement,
    coset: usize,
    a: f64,
    horizon: f64,
    checkpoints: &[f64],
) -> Result<GeodesicSample, CoreError> {
    if !(horizon >= 0.0) {
        return Err(CoreError::Stats("horizon must be >= 0".into()));
    }
    let initial = constants_from_initial(&elem.point, &elem.tangent, a)?;
    let mut marks: Vec<(f64, usize)> = checkpoints.iter().enumerate().map(|(i, &c)| (c * horizon, i)).collect();
    marks.sort_by(|x, y| x.0.total_cmp(&y.0));

    let (mut p, mut t, mut c) = reduce_element(group, &elem.point, &elem.tangent, coset);
    let mut acc = vec![0.0; forms.len()];
    let mut out: Vec<Option<Checkpoint>> = vec![None; checkpoints.len()];
    let mut dtheta = vec![0.0; checkpoints.len()];
    let mut s = 0.0;
    let mut mi = 0;
    loop {
        while mi < marks.len() && marks[mi].0 <= s + 1e-12 {
            let (time, i) = marks[mi];
            out[i] = Some(Checkpoint { time, ito: vec![f64::NAN; forms.len()], primitive: acc.clone(), excursion_count: 0 });
            dtheta[i] = initial.flow_state(&elem.point, time).theta - elem.point.theta;
            mi += 1;
        }
        if mi == marks.len() {
            break;
        }
        let target = marks[mi].0;
        let seg = (p.y / 0.45).ln().clamp(0.25, 4.0).min(target - s);
        let prm = constants_from_initial(&p, &t, a)?;
        let st = prm.flow_state(&p, seg);
        let (z0, z1) = (p.z(), st.point.z());
        for (k, f) in forms.iter().enumerate() {
            acc[k] += f.primitive_on_sheet(z1, st.theta, c) - f.primitive_on_sheet(z0, p.theta, c);
        }
        let (p2, t2, c2) = reduce_element(group, &st.point, &st.tangent, c);
        // keep the tangent exactly unit against rounding drift
        let t2 = t2.normalized(a);
        p = p2;
        t = t2;
        c = c2;
        s = if seg == target - s { target } else { s + seg };
    }
    Ok(GeodesicSample {
        k: elem.k,
        eps: elem.eps,
        sample: WindingSample { seed: 0, path_id: 0, checkpoints: out.into_iter().map(|c| c.expect("visited")).collect() },
        dtheta,
    })
}

/// Windings of `n` geodesics lifted from Liouville samples with fixed
/// (k, eps) and theta0 = 0.
pub fn batch_geodesic_winding(
    group: &ModularGroupSpec,
    forms: &[HarmonicFormSpec],
    k: f64,
    eps: i8,
    a: f64,
    horizon: f64,
    checkpoints: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<GeodesicSample>, CoreError> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream_rng(seed, i, rng::CHANNEL_AUX);
            let (p, coset, dir) = sample_liouville(group, &mut r);
            let elem = lift_to_leaf(p.z(), dir, k, eps, 0.0, a)?;
            let mut g = geodesic_winding(group, forms, &elem, coset, a, horizon, checkpoints)?;
            g.sample.seed = seed;
            g.sample.path_id = i;
            Ok(g)
        })
        .collect()
}
