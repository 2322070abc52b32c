//! Limit-law checks: empirical characteristic functions, law and
//! independence tests, excursion summaries, sphere equidistribution and the
//! first-passage functional.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

use crate::brownian::ExcursionRecord;
use crate::forms::{FormKind, HarmonicFormSpec};
use crate::hyperbolic_core::{iwasawa_compose, iwasawa_decompose, left_translate, IwasawaPoint, Moebius};
use crate::modular_group::{op_matrix, reduce_gamma1_with, ModularGroupSpec};
use crate::rng;
use crate::CoreError;

fn err(msg: impl Into<String>) -> CoreError {
    CoreError::Stats(msg.into())
}

/// `n` equally spaced points on [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default evaluation grid: 17 points on [-4, 4].
pub fn default_q_grid() -> Vec<f64> {
    linear_grid(-4.0, 4.0, 17)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EcfReport {
    pub q_grid: Vec<Vec<f64>>,
    pub ecf_re: Vec<f64>,
    pub ecf_im: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
}

impl EcfReport {
    pub fn value(&self, i: usize) -> Complex64 {
        Complex64::new(self.ecf_re[i], self.ecf_im[i])
    }
}

/// Empirical characteristic function of vector samples. The jackknife
/// standard error of a mean is the sample standard deviation over sqrt(n),
/// which is what is reported (combined over real and imaginary parts).
pub fn ecf(samples: &[Vec<f64>], q_grid: &[Vec<f64>]) -> Result<EcfReport, CoreError> {
    let n = samples.len();
    if n == 0 {
        return Err(err("ecf of an empty sample"));
    }
    if n < 100 {
        return Err(err(format!("ecf needs at least 100 samples, got {n}")));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) || q_grid.iter().any(|q| q.len() != dim) {
        return Err(err("sample and grid dimensions differ"));
    }
    let nf = n as f64;
    let rows: Vec<(f64, f64, f64)> = q_grid
        .par_iter()
        .map(|q| {
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for x in samples {
                let t: f64 = q.iter().zip(x).map(|(a, b)| a * b).sum();
                let (s, c) = if t == 0.0 { (0.0, 1.0) } else { t.sin_cos() };
                sc += c;
                ss += s;
                sc2 += c * c;
                ss2 += s * s;
            }
            let (mc, ms) = (sc / nf, ss / nf);
            let var = ((sc2 / nf - mc * mc) + (ss2 / nf - ms * ms)).max(0.0) * nf / (nf - 1.0);
            (mc, ms, (var / nf).sqrt())
        })
        .collect();
    Ok(EcfReport {
        q_grid: q_grid.to_vec(),
        ecf_re: rows.iter().map(|r| r.0).collect(),
        ecf_im: rows.iter().map(|r| r.1).collect(),
        stderr: rows.iter().map(|r| r.2).collect(),
        n,
    })
}

pub fn ecf_1d(samples: &[f64], q_grid: &[f64]) -> Result<EcfReport, CoreError> {
    let s: Vec<Vec<f64>> = samples.iter().map(|&x| vec![x]).collect();
    let q: Vec<Vec<f64>> = q_grid.iter().map(|&x| vec![x]).collect();
    ecf(&s, &q)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CfMode {
    Brownian,
    Geodesic { k: f64, a: f64 },
}

/// Factors (shift, Cauchy scale, Gaussian variance) of the geodesic law
/// relative to the Brownian one.
pub fn geodesic_factors(k: f64, a: f64) -> (f64, f64, f64) {
    let s = 1.0 + a * a * k * k;
    let shift = (1.0 + a * a) * k / s.sqrt();
    let cauchy = 2.0 * ((1.0 - k * k) / s).sqrt();
    let gauss_sd = (4.0 * (1.0 - k * k) / s).powf(0.25);
    (shift, cauchy, gauss_sd * gauss_sd)
}

/// Limit characteristic function of the joint winding vector, the fast
/// components (angular and singular forms) normalized by t and the cusp
/// forms by sqrt(t). `weights` pairs with `forms`; `petersson` gives the
/// norm of each cusp form (ignored for the others).
pub fn target_cf(
    group: &ModularGroupSpec,
    forms: &[HarmonicFormSpec],
    petersson: &[f64],
    mode: CfMode,
    weights: &[f64],
) -> Result<Complex64, CoreError> {
    if weights.len() != forms.len() || petersson.len() != forms.len() {
        return Err(err("weights, norms and forms must have equal length"));
    }
    let (shift, cs, gv) = match mode {
        CfMode::Brownian => (0.0, 1.0, 1.0),
        CfMode::Geodesic { k, a } => geodesic_factors(k, a),
    };
    let v = group.covolume();
    let mut gauss = 0.0;
    let mut drift = 0.0;
    let mut fast = vec![0.0; group.nu_inf()];
    for ((f, &w), &pn) in forms.iter().zip(weights).zip(petersson) {
        match f.kind {
            FormKind::Cusp => gauss += w * w * pn,
            kind => {
                if kind == FormKind::Omega0 {
                    drift += w;
                }
                for (l, r) in f.residues().iter().enumerate() {
                    fast[l] += w * r;
                }
            }
        }
    }
    let cauchy: f64 = fast.iter().zip(&group.cusps).map(|(s, c)| s.abs() * c.width as f64 / (2.0 * v)).sum();
    Ok(Complex64::new(-0.5 * gauss * gv - cauchy * cs, drift * shift).exp())
}

pub enum LawTarget<'a> {
    Cauchy(f64),
    Gaussian(f64),
    Cf(&'a (dyn Fn(f64) -> Complex64 + Sync)),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawTestResult {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Fitted Cauchy scale or Gaussian variance, when meaningful.
    pub fitted: Option<f64>,
    pub table: Vec<TableRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub point: Vec<f64>,
    pub measured: [f64; 2],
    pub target: [f64; 2],
    pub stderr: f64,
}

impl LawTestResult {
    fn new(statistic: f64, threshold: f64, fitted: Option<f64>, table: Vec<TableRow>) -> Self {
        LawTestResult { statistic, threshold, pass: statistic <= threshold, fitted, table }
    }
}

/// Cauchy scale from the ECF modulus, ignoring |q| < 0.1.
pub fn fit_cauchy_scale(rep: &EcfReport) -> Option<f64> {
    let mut est: Vec<f64> = (0..rep.q_grid.len())
        .filter_map(|i| {
            let q = rep.q_grid[i][0].abs();
            let m = rep.value(i).norm();
            (q >= 0.1 && m > 0.0 && m < 1.0).then(|| -m.ln() / q)
        })
        .collect();
    if est.is_empty() {
        return None;
    }
    est.sort_by(f64::total_cmp);
    Some(est[est.len() / 2])
}

pub fn law_test(samples: &[f64], target: LawTarget<'_>, q_grid: &[f64], threshold: f64) -> Result<LawTestResult, CoreError> {
    if q_grid.is_empty() {
        return Err(err("empty evaluation grid"));
    }
    if samples.len() < 500 {
        return Err(err(format!("law test needs at least 500 samples, got {}", samples.len())));
    }
    let rep = ecf_1d(samples, q_grid)?;
    let cf = |q: f64| -> Complex64 {
        match &target {
            LawTarget::Cauchy(b) => Complex64::new((-b * q.abs()).exp(), 0.0),
            LawTarget::Gaussian(v) => Complex64::new((-0.5 * v * q * q).exp(), 0.0),
            LawTarget::Cf(f) => f(q),
        }
    };
    let mut stat: f64 = 0.0;
    let mut table = Vec::with_capacity(q_grid.len());
    for (i, &q) in q_grid.iter().enumerate() {
        let t = cf(q);
        let e = rep.value(i);
        stat = stat.max((e - t).norm());
        table.push(TableRow { point: vec![q], measured: [e.re, e.im], target: [t.re, t.im], stderr: rep.stderr[i] });
    }
    let fitted = match target {
        LawTarget::Gaussian(_) => {
            let n = samples.len() as f64;
            let m = samples.iter().sum::<f64>() / n;
            Some(samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
        }
        _ => fit_cauchy_scale(&rep),
    };
    Ok(LawTestResult::new(stat, threshold, fitted, table))
}

/// sup over the product grid of |joint ECF - product of marginal ECFs|.
pub fn independence_test(
    pairs: &[(f64, f64)],
    q_grid: &[f64],
    lambda_grid: &[f64],
    threshold: f64,
) -> Result<LawTestResult, CoreError> {
    if q_grid.is_empty() || lambda_grid.is_empty() {
        return Err(err("empty evaluation grid"));
    }
    if pairs.len() < 500 {
        return Err(err(format!("independence test needs at least 500 pairs, got {}", pairs.len())));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ex = ecf_1d(&xs, q_grid)?;
    let ey = ecf_1d(&ys, lambda_grid)?;
    let joint: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.0, p.1]).collect();
    let grid: Vec<Vec<f64>> = q_grid.iter().flat_map(|&q| lambda_grid.iter().map(move |&l| vec![q, l])).collect();
    let ej = ecf(&joint, &grid)?;
    let mut stat: f64 = 0.0;
    let mut table = Vec::with_capacity(grid.len());
    for (i, g) in grid.iter().enumerate() {
        let (qi, li) = (i / lambda_grid.len(), i % lambda_grid.len());
        let prod = ex.value(qi) * ey.value(li);
        let j = ej.value(i);
        stat = stat.max((j - prod).norm());
        table.push(TableRow { point: g.clone(), measured: [j.re, j.im], target: [prod.re, prod.im], stderr: ej.stderr[i] });
    }
    Ok(LawTestResult::new(stat, threshold, None, table))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub phi_ecf: f64,
    pub duration_rel: f64,
    pub occupation_rel: f64,
    pub rate_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { phi_ecf: 0.06, duration_rel: 0.05, occupation_rel: 0.10, rate_rel: 0.15 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub measured: f64,
    pub target: f64,
    pub rel_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Comparison {
    pub fn relative(measured: f64, target: f64, tolerance: f64) -> Self {
        let rel_dev = (measured - target) / target;
        Comparison { measured, target, rel_dev, tolerance, pass: rel_dev.abs() <= tolerance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcursionSummary {
    pub r: f64,
    pub cusp: usize,
    pub count: usize,
    pub phi: LawTestResult,
    pub duration: Comparison,
    /// sqrt(r) times the excursion rate.
    pub rate: Comparison,
    pub occupation: Option<Comparison>,
    pub pass: bool,
}

/// Observed excursions of one cusp over `total_time` of path time (summed
/// over paths), with the time spent above r if it was tracked.
pub struct ExcursionData<'a> {
    pub records: &'a [ExcursionRecord],
    pub total_time: f64,
    pub occupation_time: Option<f64>,
}

pub fn excursion_report(
    data: &ExcursionData<'_>,
    r: f64,
    group: &ModularGroupSpec,
    cusp: usize,
    tol: &Tolerances,
) -> Result<ExcursionSummary, CoreError> {
    if cusp >= group.nu_inf() {
        return Err(err(format!("cusp {cusp} out of range")));
    }
    let recs: Vec<&ExcursionRecord> = data.records.iter().filter(|e| e.cusp == cusp).collect();
    if recs.len() < 300 {
        return Err(err(format!("excursion report needs at least 300 records, got {}", recs.len())));
    }
    if !(data.total_time > 0.0) {
        return Err(err("total time must be positive"));
    }
    let h = group.cusps[cusp].width as f64;
    let v = group.covolume();
    let phis: Vec<f64> = recs.iter().map(|e| e.phi).collect();
    let phi = law_test(&phis, LawTarget::Cauchy(r.sqrt()), &default_q_grid(), tol.phi_ecf)?;
    let mean_dur = recs.iter().map(|e| e.sigma - e.tau).sum::<f64>() / recs.len() as f64;
    let duration = Comparison::relative(mean_dur, 2.0 * (1.0 + 1.0 / r.sqrt()).ln(), tol.duration_rel);
    let rate = Comparison::relative(r.sqrt() * recs.len() as f64 / data.total_time, h / (2.0 * v), tol.rate_rel);
    let occupation = data
        .occupation_time
        .map(|o| Comparison::relative(o / data.total_time, h / r / v, tol.occupation_rel));
    let pass = phi.pass && duration.pass && rate.pass && occupation.map_or(true, |o| o.pass);
    Ok(ExcursionSummary { r, cusp, count: recs.len(), phi, duration, rate, occupation, pass })
}

/// Partition of the fundamental domain times angle bins. Below height 1 the
/// domain is cut along x; above it, bands equally spaced in log y up to
/// `y_max` are cut along x; everything higher is one overflow cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellPartition {
    pub bottom_x: Vec<f64>,
    pub band_y: Vec<f64>,
    pub band_x: Vec<f64>,
    pub theta_bins: usize,
}

impl CellPartition {
    /// 12 regions of the domain times 4 angle bins.
    pub fn standard() -> Self {
        let ymax: f64 = 6.0;
        CellPartition {
            bottom_x: vec![-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5],
            band_y: (0..=4).map(|i| ymax.powf(i as f64 / 4.0)).collect(),
            band_x: vec![-0.5, 0.0, 0.5],
            theta_bins: 4,
        }
    }

    pub fn n_regions(&self) -> usize {
        (self.bottom_x.len() - 1) + (self.band_y.len() - 1) * (self.band_x.len() - 1) + 1
    }

    pub fn n_cells(&self) -> usize {
        self.n_regions() * self.theta_bins
    }

    fn bin(edges: &[f64], v: f64) -> usize {
        let i = edges.partition_point(|&e| e <= v);
        i.clamp(1, edges.len() - 1) - 1
    }

    /// Region of a point of the fundamental domain.
    pub fn region(&self, z: Complex64) -> usize {
        let nb = self.bottom_x.len() - 1;
        let ymax = *self.band_y.last().unwrap();
        if z.im < self.band_y[0] {
            Self::bin(&self.bottom_x, z.re)
        } else if z.im >= ymax {
            self.n_regions() - 1
        } else {
            let by = Self::bin(&self.band_y, z.im);
            nb + by * (self.band_x.len() - 1) + Self::bin(&self.band_x, z.re)
        }
    }

    pub fn cell(&self, z: Complex64, theta: f64) -> usize {
        let tb = ((theta / TAU * self.theta_bins as f64) as usize).min(self.theta_bins - 1);
        self.region(z) * self.theta_bins + tb
    }

    /// Normalized hyperbolic area of each region, in closed form.
    pub fn region_masses(&self) -> Vec<f64> {
        let area = PI / 3.0;
        // below y = 1 the domain is bounded by the unit circle
        let below = |x: f64| x.asin() - x;
        let mut m: Vec<f64> = self.bottom_x.windows(2).map(|w| (below(w[1]) - below(w[0])) / area).collect();
        for yb in self.band_y.windows(2) {
            for xb in self.band_x.windows(2) {
                m.push((xb[1] - xb[0]) * (1.0 / yb[0] - 1.0 / yb[1]) / area);
            }
        }
        m.push(1.0 / self.band_y.last().unwrap() / area);
        m
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        let tb = self.theta_bins as f64;
        self.region_masses().iter().flat_map(|&m| std::iter::repeat(m / tb).take(self.theta_bins)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereReport {
    pub radius: f64,
    pub n: usize,
    pub histogram: Vec<f64>,
    pub masses: Vec<f64>,
    pub result: LawTestResult,
}

/// Distribution of the reduced points g k(phi) a(e^R), phi uniform, over the
/// cells (and sheets) of the quotient.
pub fn sphere_equidistribution(
    group: &ModularGroupSpec,
    center: &IwasawaPoint,
    radius: f64,
    n: usize,
    cells: &CellPartition,
    seed: u64,
    threshold: f64,
) -> Result<SphereReport, CoreError> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(err("radius must be finite and >= 0"));
    }
    if n == 0 {
        return Err(err("need at least one direction"));
    }
    let g = iwasawa_compose(center);
    let flow = Moebius::a(radius.exp());
    let idx = group.index;
    let nc = cells.n_cells();
    const CHUNK: usize = 4096;
    let counts: Vec<Vec<u64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut r = rng::stream_rng(seed, ch as u64, rng::CHANNEL_AUX);
            let mut h = vec![0u64; nc * idx];
            for _ in 0..CHUNK.min(n - ch * CHUNK) {
                let phi = r.random::<f64>() * TAU;
                let m = g.compose(&Moebius::k(phi)).compose(&flow);
                let p = iwasawa_decompose(&m);
                let mut word = Moebius::identity();
                let mut c = 0usize;
                reduce_gamma1_with(p.z(), |op| {
                    word = op_matrix(op).compose(&word);
                    c = group.apply_op(c, op);
                });
                let q = left_translate(&word, &p);
                h[c * nc + cells.cell(q.z(), q.theta)] += 1;
            }
            h
        })
        .collect();
    let mut hist = vec![0.0; nc * idx];
    for h in &counts {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += *b as f64;
        }
    }
    for v in hist.iter_mut() {
        *v /= n as f64;
    }
    let base = cells.cell_masses();
    let masses: Vec<f64> = (0..idx).flat_map(|_| base.iter().map(|m| m / idx as f64)).collect();
    let stat = 0.5 * hist.iter().zip(&masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let table = hist
        .iter()
        .zip(&masses)
        .enumerate()
        .map(|(i, (a, b))| TableRow { point: vec![i as f64], measured: [*a, 0.0], target: [*b, 0.0], stderr: (b * (1.0 - b) / n as f64).sqrt() })
        .collect();
    Ok(SphereReport { radius, n, histogram: hist, masses, result: LawTestResult::new(stat, threshold, None, table) })
}

/// 1 / sum_k Gamma(3/2) c^{2k} / (4^k k! Gamma(k + 3/2)); the sum is
/// sinh(c)/c, so this equals c / sinh(c). Each term is a ratio of the
/// previous one, and 30 terms suffice for |c| <= 4.
pub fn hitting_series(c: f64) -> f64 {
    let x = c * c / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let kf = k as f64;
        term *= x / (kf * (kf + 0.5));
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    1.0 / sum
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HittingSummary {
    pub t: f64,
    pub dt: f64,
    pub n: usize,
    pub mean_ratio: f64,
    pub mean_ratio_stderr: f64,
    pub ecf: LawTestResult,
}

/// Simulates h_t = inf{s : w_s + s/2 = t} and Z = e^{-t} int_0^{h_t}
/// e^{w_s + s/2} dW_s with W independent of w, on a grid of step dt.
pub fn hitting_time_samples(n_paths: usize, t: f64, dt: f64, seed: u64) -> Result<Vec<(f64, f64)>, CoreError> {
    if !(t >= 1.0) || !(dt > 0.0) {
        return Err(err("need t >= 1 and dt > 0"));
    }
    let sq = dt.sqrt();
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rw = rng::stream_rng(seed, i, rng::CHANNEL_U);
            let mut rb = rng::stream_rng(seed, i, rng::CHANNEL_V);
            let (mut x, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64);
            while x < t {
                z += (x - t).exp() * sq * rng::normal(&mut rb);
                x += sq * rng::normal(&mut rw) + 0.5 * dt;
                s += dt;
            }
            (s, z)
        })
        .collect())
}

pub fn hitting_time_check(n_paths: usize, t: f64, dt: f64, seed: u64, threshold: f64) -> Result<HittingSummary, CoreError> {
    if !(t >= 10.0) {
        return Err(err("hitting-time check needs t >= 10"));
    }
    let s = hitting_time_samples(n_paths, t, dt, seed)?;
    let n = s.len() as f64;
    let ratios: Vec<f64> = s.iter().map(|p| p.0 / (2.0 * t)).collect();
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let zs: Vec<f64> = s.iter().map(|p| p.1).collect();
    let target = |c: f64| Complex64::new(hitting_series(c), 0.0);
    let ecf = law_test(&zs, LawTarget::Cf(&target), &default_q_grid(), threshold)?;
    Ok(HittingSummary { t, dt, n: s.len(), mean_ratio: mean, mean_ratio_stderr: (var / n).sqrt(), ecf })
}

/// Machine-readable test report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub test_name: String,
    pub n: usize,
    pub parameters: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub table: Vec<TableRow>,
}

impl Report {
    pub fn from_law(name: &str, n: usize, parameters: serde_json::Value, r: &LawTestResult) -> Self {
        Report {
            test_name: name.into(),
            n,
            parameters,
            statistic: r.statistic,
            threshold: r.threshold,
            pass: r.pass,
            table: r.table.clone(),
        }
    }
}
