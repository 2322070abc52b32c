//! Test-side oracles, written without the library's numerics.

#![allow(dead_code)]

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;

/// Gauss-Legendre rule on [lo, hi].
pub fn gl(n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.try_into().unwrap());
    let (h, m) = (0.5 * (hi - lo), 0.5 * (hi + lo));
    rule.iter().map(|(x, w)| (m + h * x, h * w)).collect()
}

/// State of the geodesic ODE in coordinates (y, x, theta) with the
/// conserved momenta p_x, p_theta; the Hamiltonian is
/// (y^2 p_y^2 + y^2 p_x^2 - 2 y p_x p_th + (1 + a^2) p_th^2) / 2.
#[derive(Clone, Copy, Debug)]
pub struct GeoState {
    pub y: f64,
    pub x: f64,
    pub th: f64,
    pub py: f64,
}

pub struct GeoOde {
    pub a: f64,
    pub px: f64,
    pub pth: f64,
}

impl GeoOde {
    /// From a frame velocity (u, v, w): ydot = y u, xdot = y v, thdot = w.
    pub fn new(a: f64, y: f64, x: f64, th: f64, u: f64, v: f64, w: f64) -> (Self, GeoState) {
        let (yd, xd, td) = (y * u, y * v, w);
        let a2 = a * a;
        // p = G qdot
        let py = yd / (y * y);
        let px = (1.0 + 1.0 / a2) / (y * y) * xd + td / (a2 * y);
        let pth = xd / (a2 * y) + td / a2;
        (GeoOde { a, px, pth }, GeoState { y, x, th, py })
    }

    fn rhs(&self, s: &GeoState) -> [f64; 4] {
        let (y, py, px, pt) = (s.y, s.py, self.px, self.pth);
        [
            y * y * py,
            y * y * px - y * pt,
            -y * px + (1.0 + self.a * self.a) * pt,
            -(y * py * py + y * px * px - px * pt),
        ]
    }

    pub fn velocity(&self, s: &GeoState) -> (f64, f64, f64) {
        let d = self.rhs(s);
        (d[0] / s.y, d[1] / s.y, d[2])
    }

    pub fn step(&self, s: &GeoState, h: f64) -> GeoState {
        let add = |s: &GeoState, k: &[f64; 4], f: f64| GeoState { y: s.y + f * k[0], x: s.x + f * k[1], th: s.th + f * k[2], py: s.py + f * k[3] };
        let k1 = self.rhs(s);
        let k2 = self.rhs(&add(s, &k1, 0.5 * h));
        let k3 = self.rhs(&add(s, &k2, 0.5 * h));
        let k4 = self.rhs(&add(s, &k3, h));
        GeoState {
            y: s.y + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x: s.x + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            th: s.th + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
            py: s.py + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
        }
    }

    /// Integrates to time `s` (either sign) with at most step `h`.
    pub fn run(&self, s0: &GeoState, s: f64, h: f64) -> GeoState {
        let n = (s.abs() / h).ceil().max(1.0) as usize;
        let dh = s / n as f64;
        let mut st = *s0;
        for _ in 0..n {
            st = self.step(&st, dh);
        }
        st
    }
}

/// Circle through three points: (centre, radius).
pub fn circle(z: [Complex64; 3]) -> Option<(Complex64, f64)> {
    let (a, b, c) = (z[0], z[1], z[2]);
    let d = 2.0 * (a.re * (b.im - c.im) + b.re * (c.im - a.im) + c.re * (a.im - b.im));
    if d.abs() < 1e-14 {
        return None;
    }
    let (a2, b2, c2) = (a.norm_sqr(), b.norm_sqr(), c.norm_sqr());
    let ux = (a2 * (b.im - c.im) + b2 * (c.im - a.im) + c2 * (a.im - b.im)) / d;
    let uy = (a2 * (c.re - b.re) + b2 * (a.re - c.re) + c2 * (b.re - a.re)) / d;
    let o = Complex64::new(ux, uy);
    Some((o, (a - o).norm()))
}

/// Hyperbolic distance from z to the geodesic with real endpoints e1, e2:
/// map e1 -> 0, e2 -> infinity and measure the angle from the imaginary axis.
pub fn dist_to_geodesic(z: Complex64, e1: f64, e2: f64) -> f64 {
    let (e1, e2) = (e1.min(e2), e1.max(e2));
    let w = (z - e1) / (z - e2) * -1.0;
    (w.re.abs() / w.im).asinh()
}

/// |eta(z)|^8 from the product over q = exp(2 pi i z).
pub fn eta8(z: Complex64) -> f64 {
    let q = (Complex64::new(0.0, 2.0 * PI) * z).exp();
    let mut p = Complex64::new(1.0, 0.0);
    let mut qn = q;
    for _ in 0..200 {
        p *= Complex64::new(1.0, 0.0) - qn;
        qn *= q;
        if qn.norm() < 1e-18 {
            break;
        }
    }
    (-2.0 * PI * z.im / 3.0).exp() * p.norm().powi(8)
}

/// (3/pi) * integral over the standard fundamental domain of |eta|^8 dx dy,
/// which is the covolume-normalized Petersson norm of eta^4 on any subgroup.
pub fn petersson_eta4() -> f64 {
    let mut total = 0.0;
    for (x, wx) in gl(48, -0.5, 0.5) {
        let y0 = (1.0 - x * x).sqrt();
        for (lo, hi) in [(y0, 2.0), (2.0, 5.0), (5.0, 14.0)] {
            for (y, wy) in gl(48, lo, hi) {
                total += wx * wy * eta8(Complex64::new(x, y));
            }
        }
    }
    3.0 / PI * total
}

/// Haar masses of the 12 regions (bottom strip split at x = -1/6, 1/6 under
/// y = 1; bands y in [6^{i/4}, 6^{(i+1)/4}] split at x = 0; overflow y >= 6),
/// each integral of dx dy / y^2 done by quadrature and divided by pi/3.
pub fn region_masses() -> Vec<f64> {
    let area = PI / 3.0;
    let mut m = Vec::new();
    for (lo, hi) in [(-0.5, -1.0 / 6.0), (-1.0 / 6.0, 1.0 / 6.0), (1.0 / 6.0, 0.5)] {
        let mut s = 0.0;
        for (x, wx) in gl(40, lo, hi) {
            let y0 = (1.0 - x * x).sqrt();
            for (y, wy) in gl(20, y0, 1.0) {
                s += wx * wy / (y * y);
            }
        }
        m.push(s / area);
    }
    let six: f64 = 6.0;
    for i in 0..4 {
        let (ylo, yhi) = (six.powf(i as f64 / 4.0), six.powf((i + 1) as f64 / 4.0));
        for (xlo, xhi) in [(-0.5, 0.0), (0.0, 0.5)] {
            let s: f64 = gl(20, ylo, yhi).iter().map(|(y, w)| w / (y * y)).sum::<f64>() * (xhi - xlo);
            m.push(s / area);
        }
    }
    // t = 1/y maps y >= 6 to (0, 1/6] with dy / y^2 = dt
    let top: f64 = gl(4, 0.0, 1.0 / 6.0).iter().map(|(_, w)| w).sum();
    m.push(top / area);
    m
}

/// 1 / sum_k Gamma(3/2) c^{2k} / (4^k k! Gamma(k + 3/2)), which is c / sinh c.
pub fn hitting_cf(c: f64) -> f64 {
    if c == 0.0 {
        1.0
    } else {
        c / c.sinh()
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Sup over the grid of |ecf(q) - target(q)|.
pub fn ecf_distance(x: &[f64], grid: &[f64], target: impl Fn(f64) -> Complex64) -> f64 {
    let n = x.len() as f64;
    grid.iter()
        .map(|&q| {
            let (s, c) = x.iter().fold((0.0, 0.0), |acc, v| (acc.0 + (q * v).sin(), acc.1 + (q * v).cos()));
            (Complex64::new(c / n, s / n) - target(q)).norm()
        })
        .fold(0.0, f64::max)
}

/// 17 points on [-4, 4].
pub fn q_grid() -> Vec<f64> {
    (0..17).map(|i| -4.0 + 0.5 * i as f64).collect()
}
