//! Left Brownian motion on Gamma\G in Iwasawa coordinates,
//!   dy = y dU,  dx = y dV,  dtheta = a dW - dV,
//! with pathwise winding functionals and cusp excursion bookkeeping.
//!
//! Noise lives on a root grid of spacing `dt_base`; each root interval is
//! split dyadically by Brownian-bridge sampling (level-order, so the normal
//! attached to a bridge node never depends on how deep the split goes). Two
//! runs with the same seed and different refinement therefore see the same
//! Brownian path.

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::forms::{FormKind, HarmonicFormSpec};
use crate::hyperbolic_core::{reduce_angle, IwasawaPoint};
use crate::modular_group::{op_matrix, reduce_gamma1_with, sample_fundamental_domain, ModularGroupSpec};
use crate::rng::{self, NoiseStreams};
use crate::CoreError;

/// Which estimator of the winding integrals to accumulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Routes {
    /// Left-point Ito sums of the explicit martingale integrands.
    pub ito: bool,
    /// Differences of local primitives between reductions.
    pub primitive: bool,
}

impl Routes {
    pub const BOTH: Routes = Routes { ito: true, primitive: true };
    pub const PRIMITIVE: Routes = Routes { ito: false, primitive: true };
    pub const ITO: Routes = Routes { ito: true, primitive: false };
}

/// Initial condition of each path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    Identity,
    /// Normalized Haar measure on Gamma\G: uniform coset, uniform point of
    /// the fundamental domain, uniform angle.
    Liouville,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    pub dt_base: f64,
    pub a: f64,
    pub seed: u64,
    pub reduction_period: usize,
    /// Uniform dyadic refinement of every root interval.
    pub base_level: u32,
    /// Extra refinement allowed in the cusps, on top of `base_level`.
    pub max_cusp_levels: u32,
    /// Height above which steps shrink like (height/refine_height)^-2.
    pub refine_height: f64,
    /// Extra levels for root intervals starting near an excursion level.
    pub level_refine: u32,
    /// Half-width of that band in log-height, in units of sqrt(dt_base).
    pub level_band: f64,
    pub routes: Routes,
    pub start: Start,
    /// Negate the V and W channels, which produces the mirror image
    /// z -> -conj(z), theta -> -theta.
    pub mirror_v: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt_base: 1e-3,
            a: 1.0,
            seed: 0,
            reduction_period: 64,
            base_level: 0,
            max_cusp_levels: 3,
            refine_height: 5.0,
            level_refine: 2,
            level_band: 4.0,
            routes: Routes::BOTH,
            mirror_v: false,
            start: Start::Identity,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.dt_base > 0.0 && self.dt_base.is_finite()) {
            return Err(CoreError::Stats("dt_base must be positive".into()));
        }
        if !self.a.is_finite() {
            return Err(CoreError::NonFinite);
        }
        if self.reduction_period == 0 {
            return Err(CoreError::Stats("reduction_period must be >= 1".into()));
        }
        if self.base_level + self.max_cusp_levels + self.level_refine > 20 {
            return Err(CoreError::Stats("refinement levels capped at 20".into()));
        }
        if !(self.routes.ito || self.routes.primitive) {
            return Err(CoreError::Stats("no winding route enabled".into()));
        }
        Ok(())
    }
}

/// Per-form accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct Windings {
    pub ito: Vec<f64>,
    /// Primitive route, closed blocks only.
    pub prim_closed: Vec<f64>,
    /// Primitive value at the start of the open block.
    pub prim_open: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianState {
    pub point: IwasawaPoint,
    pub coset: usize,
    pub t: f64,
    pub theta_accum: f64,
    pub windings: Windings,
    steps_since_reduction: usize,
}

impl BrownianState {
    pub fn new(point: IwasawaPoint, coset: usize, forms: &[HarmonicFormSpec]) -> Self {
        let n = forms.len();
        let mut s = BrownianState {
            point,
            coset,
            t: 0.0,
            theta_accum: point.theta,
            windings: Windings { ito: vec![0.0; n], prim_closed: vec![0.0; n], prim_open: vec![0.0; n] },
            steps_since_reduction: 0,
        };
        s.open_block(forms);
        s
    }

    pub fn at_identity(forms: &[HarmonicFormSpec]) -> Self {
        Self::new(IwasawaPoint::origin(), 0, forms)
    }

    #[inline]
    fn z(&self) -> Complex64 {
        Complex64::new(self.point.x, self.point.y)
    }

    fn open_block(&mut self, forms: &[HarmonicFormSpec]) {
        let z = self.z();
        for (k, f) in forms.iter().enumerate() {
            self.windings.prim_open[k] = f.primitive_on_sheet(z, self.theta_accum, self.coset);
        }
    }

    fn close_block(&mut self, forms: &[HarmonicFormSpec]) {
        let z = self.z();
        for (k, f) in forms.iter().enumerate() {
            let end = f.primitive_on_sheet(z, self.theta_accum, self.coset);
            self.windings.prim_closed[k] += end - self.windings.prim_open[k];
        }
    }

    /// Primitive-route value including the open block.
    pub fn primitive_winding(&self, forms: &[HarmonicFormSpec], k: usize) -> f64 {
        let end = forms[k].primitive_on_sheet(self.z(), self.theta_accum, self.coset);
        self.windings.prim_closed[k] + end - self.windings.prim_open[k]
    }

    /// Reduces into the fundamental domain, keeping the winding integrals
    /// continuous.
    pub fn reduce(&mut self, group: &ModularGroupSpec, forms: &[HarmonicFormSpec], routes: Routes) {
        if routes.primitive {
            self.close_block(forms);
        }
        let z = self.z();
        let mut word = crate::hyperbolic_core::Moebius::identity();
        let mut c = self.coset;
        let w = reduce_gamma1_with(z, |op| {
            word = op_matrix(op).compose(&word);
            c = group.apply_op(c, op);
        });
        let j = word.cocycle(z);
        self.point = IwasawaPoint { y: w.im, x: w.re, theta: reduce_angle(self.point.theta - 2.0 * j.arg()) };
        self.coset = c;
        self.steps_since_reduction = 0;
        if routes.primitive {
            self.open_block(forms);
        }
    }
}

/// One step driven by (dU, dV, dW), already scaled by sqrt(dt). The
/// integrand route evaluates each form at the midpoint of the step against
/// the actual coordinate increments, which for harmonic forms converges to
/// the Ito integral. Returns the raw x increment.
#[inline]
pub fn step(
    state: &mut BrownianState,
    a: f64,
    forms: &[HarmonicFormSpec],
    ito: bool,
    noise: (f64, f64, f64),
    dt: f64,
) -> f64 {
    let (du, dv, dw) = noise;
    let (y, x) = (state.point.y, state.point.x);
    let dtheta = a * dw - dv;
    let y2 = y * (du - 0.5 * dt).exp();
    let ybar = (y * y2).sqrt();
    let dx = ybar * dv;
    if ito {
        let dy = y2 - y;
        let zm = Complex64::new(x + 0.5 * dx, ybar);
        for (k, f) in forms.iter().enumerate() {
            let h = f.holomorphic_on_sheet(zm, state.coset);
            let inc = match f.kind {
                FormKind::Omega0 => 4.0 * (h.re * dy + h.im * dx) + dtheta,
                // Re(f dz) = Re f dx - Im f dy
                _ => h.re * dx - h.im * dy,
            };
            state.windings.ito[k] += inc;
        }
    }
    state.point.y = y2;
    state.point.x = x + dx;
    state.point.theta += dtheta;
    state.theta_accum += dtheta;
    state.t += dt;
    state.steps_since_reduction += 1;
    dx
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcursionLevel {
    pub r: f64,
    pub entry: f64,
}

impl ExcursionLevel {
    /// Entry at r + sqrt(r), exit at r.
    pub fn standard(r: f64) -> Self {
        ExcursionLevel { r, entry: r + r.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcursionRecord {
    pub cusp: usize,
    pub tau: f64,
    pub sigma: f64,
    pub phi: f64,
}

/// Streaming two-level crossing detector for one level pair, all cusps.
#[derive(Clone, Debug)]
pub struct ExcursionTracker {
    pub level: ExcursionLevel,
    /// Cusp of the excursion in progress.
    active: Option<usize>,
    /// Per cusp: has been at or below r since the last exit.
    armed: Vec<bool>,
    tau: f64,
    phi: f64,
    pub records: Vec<ExcursionRecord>,
    /// Time spent per cusp strictly above r.
    pub occupation: Vec<f64>,
}

impl ExcursionTracker {
    pub fn new(level: ExcursionLevel, n_cusps: usize, start: Option<(usize, f64)>) -> Self {
        let mut armed = vec![true; n_cusps];
        if let Some((cusp, h)) = start {
            armed[cusp] = h <= level.r;
        }
        ExcursionTracker { level, active: None, armed, tau: 0.0, phi: 0.0, records: Vec::new(), occupation: vec![0.0; n_cusps] }
    }

    /// Feeds the step that ends at time `t` with height `height` in `cusp`
    /// (other cusps count as low), where `dx` is the step's x~ increment,
    /// `dt` its length and `start_height` the height at its start.
    #[inline]
    pub fn observe(&mut self, cusp: usize, start_height: f64, height: f64, dx: f64, t: f64, dt: f64) {
        if start_height > self.level.r {
            self.occupation[cusp] += dt;
        }
        match self.active {
            Some(c) => {
                self.phi += dx;
                if c != cusp || height < self.level.r {
                    self.records.push(ExcursionRecord { cusp: c, tau: self.tau, sigma: t, phi: self.phi });
                    self.active = None;
                    self.armed[c] = c != cusp || height <= self.level.r;
                }
            }
            None => {
                if height <= self.level.r {
                    self.armed[cusp] = true;
                } else if height > self.level.entry && self.armed[cusp] {
                    self.active = Some(cusp);
                    self.armed[cusp] = false;
                    self.tau = t;
                    self.phi = 0.0;
                }
            }
        }
    }

    pub fn in_progress(&self) -> bool {
        self.active.is_some()
    }
}

/// Sample of a recorded trajectory in cusp coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub cusp: usize,
    pub height: f64,
    pub x_tilde: f64,
}

/// Excursions of a recorded trajectory above the level pair (r + sqrt r, r).
pub fn extract_excursions(trajectory: &[TrajectoryPoint], cusp: usize, r: f64) -> Result<Vec<ExcursionRecord>, CoreError> {
    if r < 2.0 {
        return Err(CoreError::Stats("excursion level r must be >= 2".into()));
    }
    let n_cusps = trajectory.iter().map(|p| p.cusp + 1).max().unwrap_or(1).max(cusp + 1);
    let Some(first) = trajectory.first() else { return Ok(Vec::new()) };
    let mut tr = ExcursionTracker::new(ExcursionLevel::standard(r), n_cusps, Some((first.cusp, first.height)));
    for w in trajectory.windows(2) {
        let dx = if w[0].cusp == w[1].cusp { w[1].x_tilde - w[0].x_tilde } else { 0.0 };
        tr.observe(w[1].cusp, w[0].height, w[1].height, dx, w[1].t, w[1].t - w[0].t);
    }
    Ok(tr.records.into_iter().filter(|e| e.cusp == cusp).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    /// Per form; NaN where the route is disabled.
    pub ito: Vec<f64>,
    pub primitive: Vec<f64>,
    pub excursion_count: usize,
}

impl Checkpoint {
    /// Preferred raw winding per form (primitive route when available).
    pub fn raw(&self, k: usize) -> f64 {
        if self.primitive[k].is_nan() {
            self.ito[k]
        } else {
            self.primitive[k]
        }
    }

    /// Winding divided by t for fast forms and by sqrt(t) for cusp forms.
    pub fn normalized(&self, forms: &[HarmonicFormSpec], k: usize) -> f64 {
        let v = self.raw(k);
        match forms[k].kind {
            FormKind::Cusp => v / self.time.sqrt(),
            _ => v / self.time,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindingSample {
    pub seed: u64,
    pub path_id: u64,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub sample: WindingSample,
    pub excursions: Vec<ExcursionTracker>,
    pub final_state: BrownianState,
    /// Total W and V noise.
    pub total_w: f64,
    pub total_v: f64,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct SimulationRequest<'a> {
    pub cfg: &'a StepConfig,
    pub group: &'a ModularGroupSpec,
    pub forms: &'a [HarmonicFormSpec],
    pub horizon: f64,
    /// Fractions of the horizon in (0, 1].
    pub checkpoints: &'a [f64],
    pub excursion_levels: &'a [ExcursionLevel],
}

fn refine_level_order(root: f64, m: u32, tau: f64, rng: &mut impl RngCore, buf: &mut Vec<f64>, tmp: &mut Vec<f64>) {
    // level-order: the j-th normal of level d always goes to node j of level d
    buf.clear();
    buf.push(root);
    let mut len = tau;
    for _ in 0..m {
        let sd = 0.5 * len.sqrt();
        tmp.clear();
        for &d in buf.iter() {
            let xi = rng::normal(rng) * sd;
            tmp.push(0.5 * d + xi);
            tmp.push(0.5 * d - xi);
        }
        std::mem::swap(buf, tmp);
        len *= 0.5;
    }
}

/// Runs one path from the identity.
pub fn simulate_winding(req: &SimulationRequest, path_id: u64) -> Result<PathResult, CoreError> {
    let cfg = req.cfg;
    cfg.validate()?;
    if !(req.horizon >= 0.0) {
        return Err(CoreError::Stats("horizon must be >= 0".into()));
    }
    let forms = req.forms;
    let group = req.group;
    let n_root = (req.horizon / cfg.dt_base).round() as u64;
    let mut marks: Vec<(u64, usize)> = req
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, &c)| (((c * n_root as f64).round() as u64).min(n_root), i))
        .collect();
    marks.sort_unstable();

    let mut state = match cfg.start {
        Start::Identity => BrownianState::at_identity(forms),
        Start::Liouville => {
            let mut r = rng::stream_rng(cfg.seed, path_id, rng::CHANNEL_AUX);
            let z = sample_fundamental_domain(&mut r);
            let theta = r.random::<f64>() * std::f64::consts::TAU;
            let c = r.random_range(0..group.index);
            BrownianState::new(IwasawaPoint::new(z.im, z.re, theta), c, forms)
        }
    };
    let start_cusp = group.cusp_of(state.coset).0;
    let mut noise = NoiseStreams::new(cfg.seed, path_id);
    let mut trackers: Vec<ExcursionTracker> = req
        .excursion_levels
        .iter()
        .map(|&l| ExcursionTracker::new(l, group.nu_inf(), Some((start_cusp, state.point.y))))
        .collect();
    let mut checkpoints: Vec<Option<Checkpoint>> = vec![None; req.checkpoints.len()];
    let sqrt_root = cfg.dt_base.sqrt();
    let refine_h2 = cfg.refine_height * cfg.refine_height;
    let band = (cfg.level_band * cfg.dt_base.sqrt()).exp();
    let bands: Vec<(f64, f64)> = req
        .excursion_levels
        .iter()
        .flat_map(|l| [l.r, l.entry])
        .map(|h| (h / band, h * band))
        .collect();
    let (mut bu, mut bv, mut bw, mut tmp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut total_w, mut total_v) = (0.0, 0.0);
    let mut steps = 0u64;
    let mut mark = 0;

    let snapshot = |state: &BrownianState, trackers: &[ExcursionTracker]| Checkpoint {
        time: state.t,
        ito: (0..forms.len()).map(|k| if cfg.routes.ito { state.windings.ito[k] } else { f64::NAN }).collect(),
        primitive: (0..forms.len())
            .map(|k| if cfg.routes.primitive { state.primitive_winding(forms, k) } else { f64::NAN })
            .collect(),
        excursion_count: trackers.iter().map(|t| t.records.len()).sum(),
    };

    for k in 0..=n_root {
        while mark < marks.len() && marks[mark].0 == k {
            checkpoints[marks[mark].1] = Some(snapshot(&state, &trackers));
            mark += 1;
        }
        if k == n_root {
            break;
        }
        let [nu, nv, nw] = noise.draw();
        let (ru, rv, rw) = (nu * sqrt_root, nv * sqrt_root, nw * sqrt_root);

        // refinement level from the height at the start of the interval
        let y0 = state.point.y;
        let mut level = cfg.base_level;
        if y0 > cfg.refine_height && cfg.max_cusp_levels > 0 {
            let extra = ((y0 * y0 / refine_h2).log2()).ceil().max(0.0) as u32;
            level += extra.min(cfg.max_cusp_levels);
        }
        if y0 >= 1.0 && bands.iter().any(|&(lo, hi)| y0 > lo && y0 < hi) {
            level += cfg.level_refine;
        }
        let sub = 1usize << level;
        let dt = cfg.dt_base / sub as f64;
        if level == 0 {
            bu.clear();
            bu.push(ru);
            bv.clear();
            bv.push(rv);
            bw.clear();
            bw.push(rw);
        } else {
            let mut r = rng::bridge_rng(cfg.seed, path_id, rng::CHANNEL_U, k);
            refine_level_order(ru, level, cfg.dt_base, &mut r, &mut bu, &mut tmp);
            let mut r = rng::bridge_rng(cfg.seed, path_id, rng::CHANNEL_V, k);
            refine_level_order(rv, level, cfg.dt_base, &mut r, &mut bv, &mut tmp);
            let mut r = rng::bridge_rng(cfg.seed, path_id, rng::CHANNEL_W, k);
            refine_level_order(rw, level, cfg.dt_base, &mut r, &mut bw, &mut tmp);
        }
        if cfg.mirror_v {
            bv.iter_mut().for_each(|v| *v = -*v);
            bw.iter_mut().for_each(|v| *v = -*v);
        }

        for i in 0..sub {
            let h0 = state.point.y;
            total_w += bw[i];
            total_v += bv[i];
            let dx = step(&mut state, cfg.a, forms, cfg.routes.ito, (bu[i], bv[i], bw[i]), dt);
            steps += 1;
            if !trackers.is_empty() {
                let (cusp, _) = group.cusp_of(state.coset);
                let h1 = state.point.y;
                for tr in trackers.iter_mut() {
                    tr.observe(cusp, h0, h1, dx, state.t, dt);
                }
            }
            if state.point.y < 0.5 {
                state.reduce(group, forms, cfg.routes);
            }
        }
        if state.steps_since_reduction >= cfg.reduction_period {
            state.reduce(group, forms, cfg.routes);
        }
    }
    let checkpoints = checkpoints.into_iter().map(|c| c.expect("all checkpoints visited")).collect();
    Ok(PathResult {
        sample: WindingSample { seed: cfg.seed, path_id, checkpoints },
        excursions: trackers,
        final_state: state,
        total_w,
        total_v,
        steps,
    })
}

/// Independent paths 0..n; output order and values do not depend on the
/// thread pool.
pub fn batch_simulate(req: &SimulationRequest, n_paths: usize) -> Result<Vec<PathResult>, CoreError> {
    if n_paths == 0 {
        return Err(CoreError::Stats("need at least one path".into()));
    }
    (0..n_paths as u64).into_par_iter().map(|p| simulate_winding(req, p)).collect()
}
