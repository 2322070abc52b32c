//! Experiment execution and output writing.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use winding_lab::brownian::{batch_simulate, ExcursionLevel, SimulationRequest};
use winding_lab::forms::{petersson_norm, FormKind};
use winding_lab::geodesic::batch_geodesic_winding;
use winding_lab::hyperbolic_core::IwasawaPoint;
use winding_lab::Complex64;
use winding_lab::stats::{
    default_q_grid, excursion_report, geodesic_factors, hitting_series, hitting_time_samples, independence_test,
    law_test, sphere_equidistribution, target_cf, CellPartition, CfMode, Comparison, ExcursionData, LawTarget, Report,
    TableRow,
};

use crate::config::{ExperimentConfig, Mode};

const MIN_MEDIAN_SAMPLES: usize = 500;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Skipped {
    pub test_name: String,
    pub reason: String,
}

#[derive(Serialize)]
pub struct RunReport<'a> {
    pub version: &'static str,
    pub name: &'a str,
    pub mode: &'static str,
    pub config: &'a std::collections::BTreeMap<String, std::collections::BTreeMap<String, String>>,
    pub tests: Vec<Report>,
    pub skipped: Vec<Skipped>,
    pub pass: bool,
}

#[derive(Default)]
pub struct Outcome {
    pub tests: Vec<Report>,
    pub skipped: Vec<Skipped>,
    /// Header and rows of the sample CSV.
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Outcome {
    fn skip(&mut self, name: impl Into<String>, reason: impl ToString) {
        self.skipped.push(Skipped { test_name: name.into(), reason: reason.to_string() });
    }
}

/// Full-precision scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn comparison_report(name: &str, n: usize, parameters: serde_json::Value, c: &Comparison) -> Report {
    Report {
        test_name: name.into(),
        n,
        parameters,
        statistic: c.rel_dev.abs(),
        threshold: c.tolerance,
        pass: c.pass,
        table: vec![TableRow { point: vec![], measured: [c.measured, 0.0], target: [c.target, 0.0], stderr: f64::NAN }],
    }
}

fn abs_report(name: &str, n: usize, parameters: serde_json::Value, measured: f64, target: f64, tol: f64) -> Report {
    let d = (measured - target).abs();
    Report {
        test_name: name.into(),
        n,
        parameters,
        statistic: d,
        threshold: tol,
        pass: d <= tol,
        table: vec![TableRow { point: vec![], measured: [measured, 0.0], target: [target, 0.0], stderr: f64::NAN }],
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn petersson(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.forms
        .iter()
        .enumerate()
        .map(|(i, f)| match f.kind {
            FormKind::Cusp => Ok(petersson_norm(f, cfg.petersson_samples, cfg.seed ^ (0x9E37 + i as u64))?.value),
            _ => Ok(0.0),
        })
        .collect()
}

/// Per-form law tests of the final-checkpoint windings `x[k]`.
fn winding_laws(cfg: &ExperimentConfig, x: &[Vec<f64>], mode: CfMode, out: &mut Outcome) -> Result<()> {
    let pn = petersson(cfg)?;
    let grid = default_q_grid();
    let n = x.first().map_or(0, Vec::len);
    let (ecf_tol, tag) = match mode {
        CfMode::Brownian => (cfg.tol.cauchy_ecf, "brownian"),
        CfMode::Geodesic { .. } => (cfg.tol.geodesic_ecf, "geodesic"),
    };
    let (_, _, gauss_factor) = match mode {
        CfMode::Geodesic { k, a } => geodesic_factors(k, a),
        CfMode::Brownian => (0.0, 1.0, 1.0),
    };
    for (k, f) in cfg.forms.iter().enumerate() {
        let name_ecf = format!("{tag}_ecf_{}", f.name);
        let params = json!({"form": f.name, "kind": format!("{:?}", f.kind), "petersson": pn[k]});
        let target = |q: f64| {
            let mut w = vec![0.0; cfg.forms.len()];
            w[k] = q;
            target_cf(&cfg.group, &cfg.forms, &pn, mode, &w).expect("lengths match")
        };
        let tol = if f.kind == FormKind::Cusp && matches!(mode, CfMode::Brownian) { cfg.tol.gaussian_ecf } else { ecf_tol };
        match law_test(&x[k], LawTarget::Cf(&target), &grid, tol) {
            Ok(r) => {
                let mut params = params.clone();
                params["fitted"] = json!(r.fitted);
                out.tests.push(Report::from_law(&name_ecf, n, params, &r));
            }
            Err(e) => out.skip(name_ecf, e),
        }
        if f.kind == FormKind::Cusp && n >= 2 {
            let m = x[k].iter().sum::<f64>() / n as f64;
            let var = x[k].iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let c = Comparison::relative(var, pn[k] * gauss_factor, cfg.tol.variance_rel);
            out.tests.push(comparison_report(&format!("{tag}_variance_{}", f.name), n, params, &c));
        }
    }
    if matches!(mode, CfMode::Brownian) {
        let fast = cfg.forms.iter().position(|f| f.kind != FormKind::Cusp);
        let slow = cfg.forms.iter().position(|f| f.kind == FormKind::Cusp);
        if let (Some(i), Some(j)) = (fast, slow) {
            let name = format!("independence_{}_{}", cfg.forms[i].name, cfg.forms[j].name);
            let pairs: Vec<(f64, f64)> = x[i].iter().zip(&x[j]).map(|(a, b)| (*a, *b)).collect();
            match independence_test(&pairs, &grid, &grid, cfg.tol.independence) {
                Ok(r) => out.tests.push(Report::from_law(&name, n, json!({"forms": [cfg.forms[i].name, cfg.forms[j].name]}), &r)),
                Err(e) => out.skip(name, e),
            }
        }
    }
    Ok(())
}

fn brownian_request<'a>(cfg: &'a ExperimentConfig, levels: &'a [ExcursionLevel]) -> SimulationRequest<'a> {
    SimulationRequest {
        cfg: &cfg.brownian.step,
        group: &cfg.group,
        forms: &cfg.forms,
        horizon: cfg.brownian.horizon,
        checkpoints: &cfg.brownian.checkpoints,
        excursion_levels: levels,
    }
}

fn run_brownian(cfg: &ExperimentConfig) -> Result<Outcome> {
    let b = &cfg.brownian;
    let paths = batch_simulate(&brownian_request(cfg, &[]), b.n_paths)?;
    let mut out = Outcome { header: vec!["seed", "path_id", "time", "form", "ito", "primitive", "normalized"], ..Default::default() };
    for p in &paths {
        for c in &p.sample.checkpoints {
            for (k, f) in cfg.forms.iter().enumerate() {
                out.rows.push(vec![
                    p.sample.seed.to_string(),
                    p.sample.path_id.to_string(),
                    num(c.time),
                    f.name.clone(),
                    num(c.ito[k]),
                    num(c.primitive[k]),
                    num(c.normalized(&cfg.forms, k)),
                ]);
            }
        }
    }
    if let Some(last) = b.checkpoints.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map(|x| x.0) {
        if b.horizon > 0.0 {
            let x: Vec<Vec<f64>> =
                (0..cfg.forms.len()).map(|k| paths.iter().map(|p| p.sample.checkpoints[last].normalized(&cfg.forms, k)).collect()).collect();
            winding_laws(cfg, &x, CfMode::Brownian, &mut out)?;
        }
    }
    Ok(out)
}

fn run_excursions(cfg: &ExperimentConfig) -> Result<Outcome> {
    let b = &cfg.brownian;
    let levels: Vec<ExcursionLevel> = b.levels.iter().map(|&r| ExcursionLevel::standard(r)).collect();
    let paths = batch_simulate(&brownian_request(cfg, &levels), b.n_paths)?;
    let mut out = Outcome { header: vec!["seed", "path_id", "r", "cusp", "tau", "sigma", "phi"], ..Default::default() };
    for p in &paths {
        for tr in &p.excursions {
            for e in &tr.records {
                out.rows.push(vec![
                    p.sample.seed.to_string(),
                    p.sample.path_id.to_string(),
                    num(tr.level.r),
                    e.cusp.to_string(),
                    num(e.tau),
                    num(e.sigma),
                    num(e.phi),
                ]);
            }
        }
    }
    let total_time = b.horizon * paths.len() as f64;
    for (li, &r) in b.levels.iter().enumerate() {
        let records: Vec<_> = paths.iter().flat_map(|p| p.excursions[li].records.iter().copied()).collect();
        for cusp in 0..cfg.group.nu_inf() {
            let occ: f64 = paths.iter().map(|p| p.excursions[li].occupation[cusp]).sum();
            let data = ExcursionData { records: &records, total_time, occupation_time: Some(occ) };
            let tag = format!("excursion_r{r}_cusp{cusp}");
            let params = json!({"r": r, "cusp": cusp, "width": cfg.group.cusps[cusp].width});
            match excursion_report(&data, r, &cfg.group, cusp, &cfg.tol.excursion) {
                Ok(s) => {
                    out.tests.push(Report::from_law(&format!("{tag}_phi_ecf"), s.count, params.clone(), &s.phi));
                    out.tests.push(comparison_report(&format!("{tag}_mean_duration"), s.count, params.clone(), &s.duration));
                    out.tests.push(comparison_report(&format!("{tag}_rate"), s.count, params.clone(), &s.rate));
                    if let Some(o) = &s.occupation {
                        out.tests.push(comparison_report(&format!("{tag}_occupation"), s.count, params, o));
                    }
                }
                Err(e) => out.skip(tag, e),
            }
        }
    }
    Ok(out)
}

fn run_geodesic(cfg: &ExperimentConfig) -> Result<Outcome> {
    let g = &cfg.geodesic;
    let samples = batch_geodesic_winding(&cfg.group, &cfg.forms, g.k, g.eps, g.a, g.horizon, &g.checkpoints, g.n, cfg.seed)?;
    let mut out = Outcome {
        header: vec!["seed", "path_id", "k", "eps", "time", "form", "primitive", "normalized", "dtheta"],
        ..Default::default()
    };
    for s in &samples {
        for (ci, c) in s.sample.checkpoints.iter().enumerate() {
            for (k, f) in cfg.forms.iter().enumerate() {
                out.rows.push(vec![
                    s.sample.seed.to_string(),
                    s.sample.path_id.to_string(),
                    num(s.k),
                    s.eps.to_string(),
                    num(c.time),
                    f.name.clone(),
                    num(c.primitive[k]),
                    num(c.normalized(&cfg.forms, k)),
                    num(s.dtheta[ci]),
                ]);
            }
        }
    }
    let Some(last) = g.checkpoints.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map(|x| x.0) else {
        return Ok(out);
    };
    if g.horizon <= 0.0 {
        return Ok(out);
    }
    let x: Vec<Vec<f64>> =
        (0..cfg.forms.len()).map(|k| samples.iter().map(|s| s.sample.checkpoints[last].normalized(&cfg.forms, k)).collect()).collect();
    winding_laws(cfg, &x, CfMode::Geodesic { k: g.k, a: g.a }, &mut out)?;
    let shift = geodesic_factors(g.k, g.a).0;
    let n = samples.len();
    let params = json!({"k": g.k, "a": g.a, "eps": g.eps});
    let omega = cfg.forms.iter().position(|f| f.kind == FormKind::Omega0);
    if omega.is_some() && n < MIN_MEDIAN_SAMPLES {
        out.skip("geodesic_median_shift", format!("median checks need at least {MIN_MEDIAN_SAMPLES} samples, got {n}"));
    } else if let Some(k) = omega {
        out.tests.push(abs_report("geodesic_median_shift", n, params.clone(), median(&x[k]), shift, cfg.tol.shift_abs));
        let time = g.checkpoints[last] * g.horizon;
        let dth: Vec<f64> = samples.iter().map(|s| s.dtheta[last] / time).collect();
        out.tests.push(abs_report("geodesic_dtheta_shift", n, params, median(&dth), shift, cfg.tol.dtheta_abs));
    }
    Ok(out)
}

fn run_spheres(cfg: &ExperimentConfig) -> Result<Outcome> {
    let s = &cfg.spheres;
    let cells = CellPartition::standard();
    let center = IwasawaPoint::new(s.center[0], s.center[1], s.center[2]);
    let mut out = Outcome { header: vec!["radius", "coset", "region", "theta_bin", "empirical", "exact"], ..Default::default() };
    let mut prev: Option<f64> = None;
    let mut monotone = true;
    for (&r, &thr) in s.radii.iter().zip(&s.thresholds) {
        let rep = sphere_equidistribution(&cfg.group, &center, r, s.n, &cells, cfg.seed, thr)?;
        let nc = cells.n_cells();
        for (i, (h, m)) in rep.histogram.iter().zip(&rep.masses).enumerate() {
            let cell = i % nc;
            out.rows.push(vec![
                num(r),
                (i / nc).to_string(),
                (cell / cells.theta_bins).to_string(),
                (cell % cells.theta_bins).to_string(),
                num(*h),
                num(*m),
            ]);
        }
        if let Some(p) = prev {
            monotone &= rep.result.statistic < p;
        }
        prev = Some(rep.result.statistic);
        out.tests.push(Report::from_law(&format!("sphere_R{r}"), s.n, json!({"radius": r, "cells": nc * cfg.group.index}), &rep.result));
    }
    if s.radii.len() >= 2 {
        let stats: Vec<f64> = out.tests.iter().map(|t| t.statistic).collect();
        out.tests.push(Report {
            test_name: "sphere_monotone".into(),
            n: s.n,
            parameters: json!({"radii": s.radii}),
            statistic: if monotone { 0.0 } else { 1.0 },
            threshold: 0.0,
            pass: monotone,
            table: s.radii.iter().zip(&stats).map(|(r, d)| TableRow { point: vec![*r], measured: [*d, 0.0], target: [f64::NAN, 0.0], stderr: f64::NAN }).collect(),
        });
    }
    Ok(out)
}

fn run_hitting(cfg: &ExperimentConfig) -> Result<Outcome> {
    let h = &cfg.hitting;
    let mut out = Outcome { header: vec!["seed", "path_id", "hitting_time", "z"], ..Default::default() };
    let samples = hitting_time_samples(h.n, h.t, h.dt, cfg.seed)?;
    for (i, (s, z)) in samples.iter().enumerate() {
        out.rows.push(vec![cfg.seed.to_string(), i.to_string(), num(*s), num(*z)]);
    }
    let params = json!({"t": h.t, "dt": h.dt});
    let mean = samples.iter().map(|p| p.0 / (2.0 * h.t)).sum::<f64>() / samples.len().max(1) as f64;
    out.tests.push(abs_report("hitting_mean_ratio", h.n, params.clone(), mean, 1.0, cfg.tol.hitting_mean));
    let zs: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let target = |c: f64| Complex64::new(hitting_series(c), 0.0);
    match law_test(&zs, LawTarget::Cf(&target), &default_q_grid(), cfg.tol.hitting_ecf) {
        Ok(r) => out.tests.push(Report::from_law("hitting_ecf", h.n, params, &r)),
        Err(e) => out.skip("hitting_ecf", e),
    }
    Ok(out)
}

pub fn execute(cfg: &ExperimentConfig, mode: Mode) -> Result<Outcome> {
    match mode {
        Mode::Brownian => run_brownian(cfg),
        Mode::Excursions => run_excursions(cfg),
        Mode::Geodesic => run_geodesic(cfg),
        Mode::Spheres => run_spheres(cfg),
        Mode::HittingTime => run_hitting(cfg),
    }
}

/// Writes `<mode>_samples.csv` and `<mode>_report.json` under `dir`;
/// returns whether every test passed.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, mode: Mode, out: Outcome) -> Result<(bool, PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let stem = mode.as_str().replace('-', "_");
    let csv_path = dir.join(format!("{stem}_samples.csv"));
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    w.write_record(&out.header)?;
    for r in &out.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    let pass = out.tests.iter().all(|t| t.pass);
    let report = RunReport { version: VERSION, name: &cfg.name, mode: mode.as_str(), config: &cfg.resolved, tests: out.tests, skipped: out.skipped, pass };
    let json_path = dir.join(format!("{stem}_report.json"));
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(&json_path, text).with_context(|| format!("cannot write {}", json_path.display()))?;
    Ok((pass, csv_path, json_path))
}
