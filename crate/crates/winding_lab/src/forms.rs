//! Harmonic 1-forms on Gamma\G: the angular form built from the Dedekind eta
//! function, and forms Re(f(z) dz) with f given by its q-expansions in the
//! cusp charts.

use num_complex::Complex64;
use rand::SeedableRng;
use std::f64::consts::{PI, TAU};

use crate::hyperbolic_core::{IwasawaPoint, TangentVector};
use crate::modular_group::{coset_reduce, reduce_gamma1, sample_fundamental_domain, GroupName, ModularGroupSpec};
use crate::rng;
use crate::CoreError;

pub const DEFAULT_TRUNCATION: usize = 64;
/// Below this height, points are reduced before summing q-series.
pub const DIRECT_SERIES_MIN_HEIGHT: f64 = 0.5;
/// Above this height every q^n with n >= 1 is below 1e-16.
const CUSP_CUTOFF: f64 = 6.5;

const I: Complex64 = Complex64::new(0.0, 1.0);

const fn sigma1_table<const N: usize>() -> [f64; N] {
    let mut t = [0.0; N];
    let mut n = 1;
    while n < N {
        let mut d = 1;
        let mut s = 0;
        while d <= n {
            if n % d == 0 {
                s += d;
            }
            d += 1;
        }
        t[n] = s as f64;
        n += 1;
    }
    t
}

static SIGMA1: [f64; DEFAULT_TRUNCATION + 1] = sigma1_table();

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Covector {
    pub c_y: f64,
    pub c_x: f64,
    pub c_theta: f64,
}

impl Covector {
    /// Pairing with a tangent vector given in the frame (y d/dy, y d/dx, d/dtheta).
    #[inline]
    pub fn pair(&self, y: f64, t: &TangentVector) -> f64 {
        self.c_y * y * t.u + self.c_x * y * t.v + self.c_theta * t.w
    }

    #[inline]
    pub fn pair_coords(&self, dy: f64, dx: f64, dtheta: f64) -> f64 {
        self.c_y * dy + self.c_x * dx + self.c_theta * dtheta
    }

    #[inline]
    fn from_holomorphic(f: Complex64) -> Self {
        Covector { c_y: -f.im, c_x: f.re, c_theta: 0.0 }
    }

    #[inline]
    fn from_eta_log_derivative(h: Complex64) -> Self {
        Covector { c_y: 4.0 * h.re, c_x: 4.0 * h.im, c_theta: 1.0 }
    }
}

/// sum_{n>=1} sigma_1(n) q^n, truncated once the remaining terms are
/// negligible (sigma_1(n) <= n^2).
#[inline]
fn sigma1_series(q: Complex64) -> Complex64 {
    let aq = q.norm();
    let mut s = Complex64::new(0.0, 0.0);
    let mut qn = q;
    let mut an = aq;
    for n in 1..=DEFAULT_TRUNCATION {
        s += qn * SIGMA1[n];
        let np = (n + 1) as f64;
        an *= aq;
        if an * np * np < 1e-18 {
            break;
        }
        qn *= q;
    }
    s
}

/// eta'/eta from the q-series with no reduction; accurate for Im z >= 0.5.
#[inline]
pub fn eta_log_derivative_direct(z: Complex64) -> Complex64 {
    if z.im > CUSP_CUTOFF {
        return Complex64::new(0.0, PI / 12.0);
    }
    let q = (I * TAU * z).exp();
    let e2 = 1.0 - 24.0 * sigma1_series(q);
    I * (PI / 12.0) * e2
}

/// Logarithmic derivative of the Dedekind eta function.
pub fn eta_log_derivative(z: Complex64) -> Complex64 {
    if z.im >= DIRECT_SERIES_MIN_HEIGHT {
        return eta_log_derivative_direct(z);
    }
    let (w, g) = reduce_gamma1(z);
    let j = g.cocycle(z);
    eta_log_derivative_direct(w) / (j * j) - g.c / (2.0 * j)
}

/// Continuous branch of log eta on the half-plane,
/// i pi z / 12 + sum log(1 - q^n) with principal logarithms.
pub fn log_eta(z: Complex64) -> Complex64 {
    let q = (I * TAU * z).exp();
    let mut s = I * (PI / 12.0) * z;
    let aq = q.norm();
    let mut qn = q;
    let mut an = aq;
    if aq < 0.1 {
        // sum of args is below 2|q|, so one log of the product is the same branch
        let mut p = Complex64::new(1.0, 0.0);
        while an >= 1e-18 {
            p *= 1.0 - qn;
            qn *= q;
            an *= aq;
        }
        return s + p.ln();
    }
    for _ in 0..4096 {
        s += (1.0 - qn).ln();
        an *= aq;
        if an < 1e-18 {
            break;
        }
        qn *= q;
    }
    s
}

/// Coefficients of prod_{n>=1} (1 - q^n)^4 up to degree `m` inclusive.
pub fn eta4_product_coeffs(m: usize) -> Vec<i64> {
    let mut c = vec![0i64; m + 1];
    c[0] = 1;
    for n in 1..=m {
        for _ in 0..4 {
            for k in (n..=m).rev() {
                c[k] -= c[k - n];
            }
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    Omega0,
    Singular,
    Cusp,
}

/// Expansion of the form in one cusp chart, in powers of Q = exp(2 pi i w / h).
#[derive(Clone, Debug, PartialEq)]
pub struct CuspExpansion {
    pub residue: f64,
    /// b_0, b_1, ..., b_{K-1}.
    pub coeffs: Vec<Complex64>,
    width: f64,
    /// Nonzero coefficients with n >= 1 sit at offset + stride * j.
    offset: usize,
    stride: usize,
    packed: Vec<Complex64>,
    packed_primitive: Vec<Complex64>,
}

impl CuspExpansion {
    pub fn new(width: usize, residue: f64, coeffs: Vec<Complex64>) -> Self {
        let nz: Vec<usize> = (1..coeffs.len()).filter(|&n| coeffs[n] != Complex64::new(0.0, 0.0)).collect();
        let (offset, stride) = match nz.as_slice() {
            [] => (1, 1),
            [first, rest @ ..] => {
                let g = rest.iter().fold(0, |g, &n| gcd(g, n - first));
                (*first, g.max(1))
            }
        };
        let h = width as f64;
        let mut packed = Vec::new();
        let mut packed_primitive = Vec::new();
        let mut n = offset;
        while n < coeffs.len() {
            packed.push(coeffs[n]);
            packed_primitive.push(coeffs[n] * h / (I * TAU * n as f64));
            n += stride;
        }
        CuspExpansion { residue, coeffs, width: h, offset, stride, packed, packed_primitive }
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeffs.first().copied().unwrap_or_default()
    }

    fn horner(&self, coeffs: &[Complex64], wt: Complex64) -> Complex64 {
        let arg = I * (TAU / self.width) * wt;
        let qs = (arg * self.stride as f64).exp();
        let aq = qs.norm();
        // number of terms after which |qs|^j is negligible
        let keep = if aq < 1e-300 {
            1
        } else {
            let j = (-45.0 / aq.ln()).ceil();
            if j.is_finite() && j >= 1.0 {
                (j as usize).min(coeffs.len())
            } else {
                coeffs.len()
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for b in coeffs[..keep].iter().rev() {
            acc = acc * qs + b;
        }
        acc * (arg * self.offset as f64).exp()
    }

    /// f in the chart coordinate.
    #[inline]
    pub fn value(&self, wt: Complex64) -> Complex64 {
        self.constant_term() + self.horner(&self.packed, wt)
    }

    /// A holomorphic primitive of f in the chart coordinate.
    #[inline]
    pub fn primitive(&self, wt: Complex64) -> Complex64 {
        self.constant_term() * wt + self.horner(&self.packed_primitive, wt)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicFormSpec {
    pub name: String,
    pub kind: FormKind,
    pub group: ModularGroupSpec,
    /// One expansion per cusp; empty for the angular form.
    pub expansions: Vec<CuspExpansion>,
    pub truncation: usize,
}

impl HarmonicFormSpec {
    pub fn omega0(group: &ModularGroupSpec) -> Self {
        HarmonicFormSpec {
            name: "OMEGA0".into(),
            kind: FormKind::Omega0,
            group: group.clone(),
            expansions: Vec::new(),
            truncation: DEFAULT_TRUNCATION,
        }
    }

    /// Form Re(f dz) from per-cusp expansions and residue table.
    pub fn from_expansions(
        name: &str,
        kind: FormKind,
        group: &ModularGroupSpec,
        table: Vec<(f64, Vec<Complex64>)>,
    ) -> Result<Self, CoreError> {
        if kind == FormKind::Omega0 {
            return Err(CoreError::InvalidForm("the angular form is built in".into()));
        }
        if table.len() != group.nu_inf() {
            return Err(CoreError::InvalidForm(format!(
                "{} cusp expansions given, group {} has {} cusps",
                table.len(),
                group.name,
                group.nu_inf()
            )));
        }
        let mut truncation = 0;
        let mut expansions = Vec::new();
        for (l, (r, coeffs)) in table.into_iter().enumerate() {
            if coeffs.is_empty() {
                return Err(CoreError::InvalidForm(format!("cusp {l}: empty coefficient list")));
            }
            if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) || !r.is_finite() {
                return Err(CoreError::InvalidForm(format!("cusp {l}: non-finite data")));
            }
            let b0 = coeffs[0];
            if (b0.re - r).abs() > 1e-12 || b0.im.abs() > 1e-12 {
                return Err(CoreError::InvalidForm(format!(
                    "cusp {l}: residue {r} does not match constant term {b0}"
                )));
            }
            truncation = truncation.max(coeffs.len());
            expansions.push(CuspExpansion::new(group.cusps[l].width, r, coeffs));
        }
        let residue_sum: f64 = expansions.iter().map(|e| e.residue).sum();
        match kind {
            FormKind::Singular => {
                if residue_sum.abs() > 1e-12 {
                    return Err(CoreError::InvalidForm(format!("residues sum to {residue_sum}, not 0")));
                }
                if expansions.iter().all(|e| e.residue == 0.0) {
                    return Err(CoreError::InvalidForm("singular form with all residues zero".into()));
                }
            }
            FormKind::Cusp => {
                if expansions.iter().any(|e| e.residue != 0.0) {
                    return Err(CoreError::InvalidForm("cusp form with nonzero residue".into()));
                }
            }
            FormKind::Omega0 => unreachable!(),
        }
        Ok(HarmonicFormSpec { name: name.into(), kind, group: group.clone(), expansions, truncation })
    }

    /// dx~ coefficient at each cusp. The angular form is invariant under the
    /// whole modular group, so it has the same residue in every chart.
    pub fn residues(&self) -> Vec<f64> {
        match self.kind {
            FormKind::Omega0 => vec![PI / 3.0; self.group.nu_inf()],
            _ => self.expansions.iter().map(|e| e.residue).collect(),
        }
    }

    /// Holomorphic factor on the sheet of coset c: eta'/eta for the angular
    /// form, f|rep(c) otherwise. Valid for Im w >= 0.5.
    #[inline]
    pub fn holomorphic_on_sheet(&self, w: Complex64, c: usize) -> Complex64 {
        match self.kind {
            FormKind::Omega0 => eta_log_derivative_direct(w),
            _ => {
                let (cusp, m) = self.group.cusp_of(c);
                self.expansions[cusp].value(w + m as f64)
            }
        }
    }

    #[inline]
    pub fn covector_on_sheet(&self, w: Complex64, c: usize) -> Covector {
        let f = self.holomorphic_on_sheet(w, c);
        match self.kind {
            FormKind::Omega0 => Covector::from_eta_log_derivative(f),
            _ => Covector::from_holomorphic(f),
        }
    }

    /// Local primitive on the sheet of coset c; differences along a path
    /// kept on one sheet give the line integral.
    #[inline]
    pub fn primitive_on_sheet(&self, w: Complex64, theta: f64, c: usize) -> f64 {
        match self.kind {
            FormKind::Omega0 => theta + 4.0 * log_eta(w).im,
            _ => {
                let (cusp, m) = self.group.cusp_of(c);
                self.expansions[cusp].primitive(w + m as f64).re
            }
        }
    }
}

pub fn builtin_form(name: &str, group: &ModularGroupSpec) -> Result<HarmonicFormSpec, CoreError> {
    match name.trim().to_ascii_uppercase().as_str() {
        "OMEGA0" => Ok(HarmonicFormSpec::omega0(group)),
        "ETA4_CUSPFORM" | "ETA4" => {
            if group.name != "COMMUTATOR" {
                return Err(CoreError::InvalidForm(format!("eta^4 is not a form for {}", group.name)));
            }
            // eta^4 = sum_m a_m Q^{6m+1} with Q = e^{2 pi i z/6}
            let k = DEFAULT_TRUNCATION;
            let a = eta4_product_coeffs(k / 6 + 1);
            let mut b = vec![Complex64::new(0.0, 0.0); k];
            for (m, am) in a.iter().enumerate() {
                if 6 * m + 1 < k {
                    b[6 * m + 1] = Complex64::new(*am as f64, 0.0);
                }
            }
            HarmonicFormSpec::from_expansions("ETA4_CUSPFORM", FormKind::Cusp, group, vec![(0.0, b)])
        }
        _ => Err(CoreError::UnknownForm(name.to_string())),
    }
}

pub fn builtin_commutator_forms() -> (ModularGroupSpec, HarmonicFormSpec, HarmonicFormSpec) {
    let g = crate::modular_group::builtin_group(GroupName::Commutator);
    let w0 = HarmonicFormSpec::omega0(&g);
    let eta4 = builtin_form("ETA4_CUSPFORM", &g).expect("built-in");
    (g, w0, eta4)
}

/// Form at an arbitrary point, in (dy, dx, dtheta) components.
pub fn evaluate_form(form: &HarmonicFormSpec, p: &IwasawaPoint, coset: usize) -> Covector {
    let z = p.z();
    if z.im >= DIRECT_SERIES_MIN_HEIGHT {
        return form.covector_on_sheet(z, coset);
    }
    let (w, g, c) = coset_reduce(&form.group, z, coset);
    let j = g.cocycle(z);
    let jac = 1.0 / (j * j);
    match form.kind {
        FormKind::Omega0 => Covector::from_eta_log_derivative(eta_log_derivative(z)),
        _ => Covector::from_holomorphic(form.holomorphic_on_sheet(w, c) * jac),
    }
}

/// Adaptive Gauss-Legendre for a complex integrand on [0, 1].
fn adaptive_gl<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, whole: Complex64, tol: f64, depth: u32) -> Complex64 {
    let m = 0.5 * (a + b);
    let left = gl_panel(f, a, m);
    let right = gl_panel(f, m, b);
    let both = left + right;
    if depth == 0 || (both - whole).norm() <= tol {
        return both;
    }
    adaptive_gl(f, a, m, left, 0.5 * tol, depth - 1) + adaptive_gl(f, m, b, right, 0.5 * tol, depth - 1)
}

fn gl_panel<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Complex64 {
    use std::sync::OnceLock;
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    let rule = RULE.get_or_init(|| {
        gauss_quad::GaussLegendre::new(10.try_into().unwrap())
            .into_node_weight_pairs()
            .to_vec()
    });
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    rule.iter().map(|&(x, w)| f(c + r * x) * (w * r)).sum()
}

/// integral of h(z) dz along the segment z1 -> z2.
fn segment_integral_eta(z1: Complex64, z2: Complex64) -> Complex64 {
    let dz = z2 - z1;
    if dz.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let f = |s: f64| eta_log_derivative(z1 + dz * s) * dz;
    // keep |h| |dz| per panel small
    let scale = (eta_log_derivative(z1).norm().max(eta_log_derivative(z2).norm()) * dz.norm() / 0.1).ceil();
    let panels = (scale as usize).clamp(1, 1 << 16);
    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..panels {
        let a = k as f64 / panels as f64;
        let b = (k + 1) as f64 / panels as f64;
        let whole = gl_panel(&f, a, b);
        total += adaptive_gl(&f, a, b, whole, 1e-12 / panels as f64, 20);
    }
    total
}

/// Increment of the angular form along the straight segment between two
/// points, with the unreduced change of theta supplied by the caller.
pub fn primitive_increment_omega0(p1: &IwasawaPoint, p2: &IwasawaPoint, dtheta_unreduced: f64) -> Result<f64, CoreError> {
    if !(p1.y > 0.0 && p2.y > 0.0) {
        return Err(CoreError::OutsideHalfPlane);
    }
    if !dtheta_unreduced.is_finite() {
        return Err(CoreError::NonFinite);
    }
    let integral = segment_integral_eta(p1.z(), p2.z());
    Ok(dtheta_unreduced + 4.0 * integral.im)
}

/// Point of a polyline: Iwasawa coordinates with an unreduced angle, and the
/// sheet it is expressed on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    pub y: f64,
    pub x: f64,
    pub theta: f64,
    pub coset: usize,
}

/// Simpson rule on each segment. Consecutive points on different sheets are
/// treated as the same point of the quotient (a reduction jump) and skipped.
pub fn line_integral(form: &HarmonicFormSpec, path: &[PathPoint]) -> f64 {
    let mut total = 0.0;
    for s in path.windows(2) {
        let (p, q) = (s[0], s[1]);
        if p.coset != q.coset {
            continue;
        }
        let (dy, dx, dt) = (q.y - p.y, q.x - p.x, q.theta - p.theta);
        let at = |t: f64| {
            let pt = IwasawaPoint { y: p.y + t * dy, x: p.x + t * dx, theta: p.theta + t * dt };
            evaluate_form(form, &pt, p.coset).pair_coords(dy, dx, dt)
        };
        total += (at(0.0) + 4.0 * at(0.5) + at(1.0)) / 6.0;
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeterssonEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Monte Carlo estimate of V^{-1} int |f|^2 dx dy over the quotient.
pub fn petersson_norm(form: &HarmonicFormSpec, n_samples: usize, seed: u64) -> Result<PeterssonEstimate, CoreError> {
    if form.kind != FormKind::Cusp {
        return Err(CoreError::InvalidForm("Petersson norm needs a cusp form".into()));
    }
    if n_samples < 2 {
        return Err(CoreError::InvalidForm("need at least two samples".into()));
    }
    use rayon::prelude::*;
    const CHUNK: usize = 1 << 16;
    let chunks = n_samples.div_ceil(CHUNK);
    let idx = form.group.index;
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(rng::hash3(seed, k as u64, 0xF0));
            let m = CHUNK.min(n_samples - k * CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let z = sample_fundamental_domain(&mut r);
                let c = rand::Rng::random_range(&mut r, 0..idx);
                let f = form.holomorphic_on_sheet(z, c);
                let v = f.norm_sqr() * z.im * z.im;
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(PeterssonEstimate { value: mean, stderr: (var / n).sqrt(), n: n_samples })
}

impl HarmonicFormSpec {
    /// Same form scaled by a real factor.
    pub fn scaled(&self, lambda: f64) -> Result<Self, CoreError> {
        if self.kind == FormKind::Omega0 {
            return Err(CoreError::InvalidForm("the angular form cannot be rescaled".into()));
        }
        let table = self
            .expansions
            .iter()
            .map(|e| (e.residue * lambda, e.coeffs.iter().map(|c| c * lambda).collect()))
            .collect();
        let kind = if lambda == 0.0 { FormKind::Cusp } else { self.kind };
        HarmonicFormSpec::from_expansions(&self.name, kind, &self.group, table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic_core::{push_tangent, Moebius};
    use crate::modular_group::{builtin_group, GroupName};
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// eta'/eta straight from the product, differentiated term by term.
    fn eta_ld_oracle(z: Complex64) -> Complex64 {
        let q = (I * TAU * z).exp();
        let mut s = I * PI / 12.0;
        let mut qn = q;
        for n in 1..3000 {
            s += -I * TAU * n as f64 * qn / (1.0 - qn);
            qn *= q;
            if qn.norm() < 1e-30 {
                break;
            }
        }
        s
    }

    #[test]
    fn eta_log_derivative_examples() {
        assert!((eta_log_derivative(c(0.3, 30.0)) - c(0.0, PI / 12.0)).norm() < 1e-15);
        assert!((eta_log_derivative(c(0.0, 1.0)) - c(0.0, 0.25)).norm() < 1e-12);
        for z in [c(0.17, 0.8), c(-0.4, 1.3), c(0.25, 0.11), c(2.3, 0.02)] {
            let a = eta_log_derivative(z);
            let b = eta_log_derivative(z + 1.0);
            assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0), "{z}");
        }
        for z in [c(0.17, 0.8), c(-0.4, 1.3), c(0.25, 0.3), c(0.1, 0.12)] {
            let a = eta_log_derivative(z);
            let o = eta_ld_oracle(z);
            assert!((a - o).norm() <= 1e-10 * o.norm(), "{z}: {a} vs {o}");
        }
    }

    #[test]
    fn log_eta_is_a_primitive() {
        for z in [c(0.1, 0.9), c(-0.45, 0.6), c(3.2, 2.0)] {
            let h = 1e-5;
            let d = (log_eta(z + h) - log_eta(z - h)) / (2.0 * h);
            assert!((d - eta_log_derivative(z)).norm() < 1e-8);
        }
    }

    #[test]
    fn eta4_coefficients() {
        assert_eq!(eta4_product_coeffs(4), vec![1, -4, 2, 8, -5]);
        // against the direct product evaluated numerically
        let z = c(0.13, 0.4);
        let q = (I * TAU * z).exp();
        let mut prod = c(1.0, 0.0);
        for n in 1..200 {
            prod *= (1.0 - q.powi(n)).powi(4);
        }
        let coeffs = eta4_product_coeffs(60);
        let series: Complex64 = coeffs.iter().enumerate().map(|(m, a)| q.powu(m as u32) * *a as f64).sum();
        assert!((prod - series).norm() < 1e-12);
    }

    #[test]
    fn omega0_examples() {
        let g1 = builtin_group(GroupName::Gamma1);
        let w0 = builtin_form("OMEGA0", &g1).unwrap();
        let cv = evaluate_form(&w0, &IwasawaPoint::new(1.0, 0.0, 0.0), 0);
        assert!(cv.c_y.abs() < 1e-12 && (cv.c_x - 1.0).abs() < 1e-12 && cv.c_theta == 1.0);
        let cv = evaluate_form(&w0, &IwasawaPoint::new(10.0, 0.0, 0.0), 0);
        assert!((cv.c_x - PI / 3.0).abs() < 1e-8 && cv.c_theta == 1.0);
        assert_eq!(w0.residues(), vec![PI / 3.0]);
        let g2 = builtin_group(GroupName::Gamma2);
        assert_eq!(builtin_form("OMEGA0", &g2).unwrap().residues().len(), 3);
        assert!(builtin_form("NOPE", &g1).is_err());
        assert!(builtin_form("ETA4_CUSPFORM", &g1).is_err());
    }

    #[test]
    fn eta4_form() {
        let (_, _, eta4) = builtin_commutator_forms();
        assert_eq!(eta4.residues(), vec![0.0]);
        let b = &eta4.expansions[0].coeffs;
        assert_eq!(&b[..6], &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!((b[7], b[13], b[19], b[25]), (c(-4.0, 0.0), c(2.0, 0.0), c(8.0, 0.0), c(-5.0, 0.0)));
        // eta^4 from the product definition
        let z = c(0.2, 0.9);
        let q = (I * TAU * z).exp();
        let mut eta = (I * PI * z / 12.0).exp();
        for n in 1..100 {
            eta *= 1.0 - q.powi(n);
        }
        let v = eta4.holomorphic_on_sheet(z, 0);
        assert!((v - eta.powi(4)).norm() < 1e-13);
        // decay high in the cusp
        let cv = evaluate_form(&eta4, &IwasawaPoint::new(12.0, 0.3, 0.0), 2);
        assert!(cv.c_x.abs() < 1e-5 && cv.c_y.abs() < 1e-5 && cv.c_theta == 0.0);
        let cv20 = evaluate_form(&eta4, &IwasawaPoint::new(20.0, 0.3, 0.0), 2);
        assert!(cv20.c_x.abs().max(cv20.c_y.abs()) < 1e-8);
    }

    fn random_subgroup_element(g: &ModularGroupSpec, r: &mut impl Rng) -> Moebius {
        let gens = [Moebius::s(), Moebius::n(1.0), Moebius::n(-1.0)];
        let mut word = Moebius::identity();
        for _ in 0..r.random_range(1..10) {
            word = word.compose(&gens[r.random_range(0..3)]);
        }
        let cw = g.coset_times(0, &word);
        g.representative(cw).inverse().compose(&word)
    }

    fn theta_forms_gamma2() -> Vec<HarmonicFormSpec> {
        // theta_3^4 and theta_4^4 in the three charts of the level-two group
        let g2 = builtin_group(GroupName::Gamma2);
        let k = 64;
        let pow4 = |base: &Vec<f64>| {
            let mut acc = vec![0.0; k];
            acc[0] = 1.0;
            for _ in 0..4 {
                let mut next = vec![0.0; k];
                for (i, a) in acc.iter().enumerate() {
                    for (j, b) in base.iter().enumerate() {
                        if i + j < k {
                            next[i + j] += a * b;
                        }
                    }
                }
                acc = next;
            }
            acc
        };
        let mut t3 = vec![0.0; k];
        let mut t4 = vec![0.0; k];
        for n in -8i64..=8 {
            let e = (n * n) as usize;
            if e < k {
                t3[e] += 1.0;
                t4[e] += if n % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        // theta_2^4 = 16 Q (sum Q^{m(m+1)})^4
        let mut s = vec![0.0; k];
        for m in 0..8 {
            if m * (m + 1) < k {
                s[m * (m + 1)] += 1.0;
            }
        }
        let s4 = pow4(&s);
        let mut t2_4 = vec![0.0; k];
        for i in 0..k - 1 {
            t2_4[i + 1] = 16.0 * s4[i];
        }
        let (t3_4, t4_4) = (pow4(&t3), pow4(&t4));
        let cx = |v: &Vec<f64>, sgn: f64| v.iter().map(|x| c(sgn * x, 0.0)).collect::<Vec<_>>();
        // theta_3^4: itself at infinity, -theta_3^4 at 0, -theta_2^4 at 1
        let f3 = HarmonicFormSpec::from_expansions(
            "THETA3_4",
            FormKind::Singular,
            &g2,
            vec![(1.0, cx(&t3_4, 1.0)), (-1.0, cx(&t3_4, -1.0)), (0.0, cx(&t2_4, -1.0))],
        )
        .unwrap();
        // theta_4^4: itself at infinity, -theta_2^4 at 0, -theta_3^4 at 1
        let f4 = HarmonicFormSpec::from_expansions(
            "THETA4_4",
            FormKind::Singular,
            &g2,
            vec![(1.0, cx(&t4_4, 1.0)), (0.0, cx(&t2_4, -1.0)), (-1.0, cx(&t3_4, -1.0))],
        )
        .unwrap();
        vec![f3, f4]
    }

    #[test]
    fn gamma_invariance() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut forms = vec![
            HarmonicFormSpec::omega0(&builtin_group(GroupName::Gamma1)),
            HarmonicFormSpec::omega0(&builtin_group(GroupName::Commutator)),
        ];
        forms.push(builtin_commutator_forms().2);
        forms.extend(theta_forms_gamma2());
        for form in &forms {
            let g = &form.group;
            for _ in 0..50 {
                let p = IwasawaPoint::new(r.random_range(0.3..3.0), r.random_range(-1.0..1.0), r.random_range(0.0..TAU));
                let c0 = r.random_range(0..g.index);
                let t = TangentVector { u: r.random_range(-1.0..1.0), v: r.random_range(-1.0..1.0), w: r.random_range(-1.0..1.0) };
                let gamma = random_subgroup_element(g, &mut r);
                // gamma lies in the subgroup; conjugating by rep(c0) keeps the sheet
                let rep = g.representative(c0);
                let h = rep.inverse().compose(&gamma).compose(rep);
                let hp = crate::hyperbolic_core::left_translate(&h, &p);
                let ht = push_tangent(&h, &p, &t);
                let a = evaluate_form(form, &p, c0).pair(p.y, &t);
                let b = evaluate_form(form, &hp, c0).pair(hp.y, &ht);
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{}: {a} {b}", form.name);
            }
        }
    }

    #[test]
    fn sheets_glue_across_domain_sides() {
        // evaluate without reduction on both sides of each side of the domain
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut forms = theta_forms_gamma2();
        forms.push(builtin_commutator_forms().2);
        for form in &forms {
            let g = &form.group;
            for _ in 0..40 {
                let c0 = r.random_range(0..g.index);
                let t = TangentVector { u: 0.3, v: -0.7, w: 0.0 };
                // arc |w| = 1: w and S w, coset c0 and c0 * S
                let phi = r.random_range(PI / 3.0..2.0 * PI / 3.0);
                let p = IwasawaPoint::new(phi.sin(), phi.cos(), 0.0);
                let s = Moebius::s();
                let (sp, st) = (crate::hyperbolic_core::left_translate(&s, &p), push_tangent(&s, &p, &t));
                let a = form.covector_on_sheet(p.z(), c0).pair(p.y, &t);
                let b = form.covector_on_sheet(sp.z(), g.act_u(c0)).pair(sp.y, &st);
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{} arc: {a} {b}", form.name);
                // side Re w = -1/2 glued to Re w = 1/2 by T, coset c0 * T^{-1}
                let p = IwasawaPoint::new(r.random_range(0.9..2.0), -0.5, 0.0);
                let tp = IwasawaPoint::new(p.y, 0.5, 0.0);
                let a = form.covector_on_sheet(p.z(), c0).pair(p.y, &t);
                let b = form.covector_on_sheet(tp.z(), g.act_t_pow(c0, -1)).pair(tp.y, &t);
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{} side: {a} {b}", form.name);
            }
        }
    }

    #[test]
    fn primitive_increment_examples() {
        let p = IwasawaPoint::new(0.7, 0.2, 1.0);
        assert_eq!(primitive_increment_omega0(&p, &p, 0.0).unwrap(), 0.0);
        let a = IwasawaPoint::new(10.0, 0.0, 0.0);
        let b = IwasawaPoint::new(10.0, 1.0, 0.0);
        assert!((primitive_increment_omega0(&a, &b, 0.0).unwrap() - PI / 3.0).abs() < 1e-8);
        assert!((primitive_increment_omega0(&p, &p, 0.8).unwrap() - 0.8).abs() < 1e-15);
        // quadrature against the log-eta primitive, including a segment
        // through small heights
        for (z1, z2) in [(c(0.0, 1.0), c(0.4, 0.2)), (c(-1.0, 0.05), c(1.0, 0.05)), (c(0.2, 2.0), c(5.0, 0.9))] {
            let q = primitive_increment_omega0(&IwasawaPoint::new(z1.im, z1.re, 0.0), &IwasawaPoint::new(z2.im, z2.re, 0.0), 0.0).unwrap();
            let exact = 4.0 * (log_eta(z2) - log_eta(z1)).im;
            assert!((q - exact).abs() < 1e-9, "{z1} {z2}: {q} {exact}");
        }
        assert!(primitive_increment_omega0(&IwasawaPoint { y: -1.0, x: 0.0, theta: 0.0 }, &p, 0.0).is_err());
    }

    fn polyline(pts: &[(f64, f64, f64)], coset: usize, sub: usize) -> Vec<PathPoint> {
        let mut out = Vec::new();
        for w in pts.windows(2) {
            for k in 0..sub {
                let t = k as f64 / sub as f64;
                out.push(PathPoint {
                    y: w[0].0 + t * (w[1].0 - w[0].0),
                    x: w[0].1 + t * (w[1].1 - w[0].1),
                    theta: w[0].2 + t * (w[1].2 - w[0].2),
                    coset,
                });
            }
        }
        let l = pts.last().unwrap();
        out.push(PathPoint { y: l.0, x: l.1, theta: l.2, coset });
        out
    }

    #[test]
    fn line_integral_examples() {
        let g1 = builtin_group(GroupName::Gamma1);
        let w0 = HarmonicFormSpec::omega0(&g1);
        let square = [(0.8, 0.1, 0.0), (0.8, 0.3, 0.5), (1.0, 0.3, 0.5), (1.0, 0.1, 0.2), (0.8, 0.1, 0.0)];
        assert!(line_integral(&w0, &polyline(&square, 0, 50)).abs() < 1e-8);
        let forms = theta_forms_gamma2();
        for f in &forms {
            assert!(line_integral(f, &polyline(&square, 3, 50)).abs() < 1e-8);
            // one period of width 2 high in each cusp
            for (l, cu) in f.group.cusps.iter().enumerate() {
                let loop_path = polyline(&[(8.0, 0.0, 0.0), (8.0, 2.0, 0.0)], cu.base_coset, 400);
                let v = line_integral(f, &loop_path);
                assert!((v - f.residues()[l] * 2.0).abs() < 1e-6, "{} cusp {l}: {v}", f.name);
            }
        }
        let fwd = polyline(&[(0.6, -0.3, 0.0), (1.4, 0.9, 2.0)], 0, 100);
        let mut back = fwd.clone();
        back.reverse();
        let (a, b) = (line_integral(&w0, &fwd), line_integral(&w0, &back));
        assert!((a + b).abs() < 1e-12);
        // against summed primitive increments
        let mut s = 0.0;
        for w in fwd.windows(2) {
            let p1 = IwasawaPoint { y: w[0].y, x: w[0].x, theta: w[0].theta };
            let p2 = IwasawaPoint { y: w[1].y, x: w[1].x, theta: w[1].theta };
            s += primitive_increment_omega0(&p1, &p2, w[1].theta - w[0].theta).unwrap();
        }
        assert!((a - s).abs() < 1e-8 * 1.5, "{a} {s}");
    }

    #[test]
    fn cusp_decay_of_singular_forms() {
        for f in theta_forms_gamma2() {
            for (l, e) in f.expansions.iter().enumerate() {
                let h = e.width;
                let mut worst: f64 = 0.0;
                for k in 0..=18 {
                    let yt = 3.0 + 0.5 * k as f64;
                    let v = e.value(c(0.37, yt)) - f.residues()[l];
                    worst = worst.max(v.norm() / (yt * (-PI * yt / h).exp()));
                }
                // fitted constant stays moderate over the whole range
                assert!(worst < 200.0, "{} cusp {l}: {worst}", f.name);
            }
        }
    }

    #[test]
    fn residue_validation() {
        let g2 = builtin_group(GroupName::Gamma2);
        let bad = vec![(1.0, vec![c(1.0, 0.0)]), (0.0, vec![c(0.0, 0.0)]), (0.0, vec![c(0.0, 0.0)])];
        assert!(HarmonicFormSpec::from_expansions("bad", FormKind::Singular, &g2, bad).is_err());
        let mismatch = vec![(1.0, vec![c(2.0, 0.0)]), (-1.0, vec![c(-1.0, 0.0)]), (0.0, vec![c(0.0, 0.0)])];
        assert!(HarmonicFormSpec::from_expansions("bad", FormKind::Singular, &g2, mismatch).is_err());
        let sums: Vec<f64> = theta_forms_gamma2().iter().map(|f| f.residues().iter().sum()).collect();
        assert!(sums.iter().all(|s| s.abs() < 1e-12));
        let w0 = HarmonicFormSpec::omega0(&g2);
        assert!(w0.residues().iter().sum::<f64>() != 0.0);
    }

    #[test]
    fn petersson_basic() {
        let (g, w0, eta4) = builtin_commutator_forms();
        assert!(petersson_norm(&w0, 100, 1).is_err());
        let zero = eta4.scaled(0.0).unwrap();
        assert_eq!(petersson_norm(&zero, 1000, 1).unwrap().value, 0.0);
        let a = petersson_norm(&eta4, 20_000, 1).unwrap();
        let b = petersson_norm(&eta4.scaled(3.0).unwrap(), 20_000, 1).unwrap();
        assert!((b.value - 9.0 * a.value).abs() < 1e-12 * b.value);
        assert!(a.value > 0.0 && g.index == 6);
    }
}
