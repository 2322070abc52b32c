//! Plain-text experiment configuration: `key = value` lines grouped under
//! `[section]` headers, `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use winding_lab::brownian::{Routes, Start, StepConfig};
use winding_lab::forms::{builtin_form, FormKind, HarmonicFormSpec};
use winding_lab::modular_group::{builtin_group_by_name, ModularGroupSpec};
use winding_lab::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Brownian,
    Geodesic,
    Excursions,
    Spheres,
    HittingTime,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Brownian => "brownian",
            Mode::Geodesic => "geodesic",
            Mode::Excursions => "excursions",
            Mode::Spheres => "spheres",
            Mode::HittingTime => "hitting-time",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "brownian" => Ok(Mode::Brownian),
            "geodesic" => Ok(Mode::Geodesic),
            "excursions" => Ok(Mode::Excursions),
            "spheres" => Ok(Mode::Spheres),
            "hitting-time" | "hitting_time" | "hitting" => Ok(Mode::HittingTime),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
}

/// Sections as written, before typing.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut errors = Vec::new();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                match rest.strip_suffix(']') {
                    Some(name) if !name.trim().is_empty() => {
                        section = name.trim().to_string();
                        raw.sections.entry(section.clone()).or_default();
                    }
                    _ => errors.push(format!("line {ln}: malformed section header `{line}`")),
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {ln}: expected `key = value`, found `{line}`"));
                continue;
            };
            if section.is_empty() {
                errors.push(format!("line {ln}: key `{}` outside any section", k.trim()));
                continue;
            }
            let map = raw.sections.entry(section.clone()).or_default();
            let key = k.trim().to_string();
            if map.contains_key(&key) {
                errors.push(format!("line {ln}: duplicate key `{section}.{key}`"));
            }
            map.insert(key, Entry { value: v.trim().to_string(), line: ln });
        }
        if errors.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigError(errors))
        }
    }
}

#[derive(Clone, Debug)]
pub struct BrownianSettings {
    pub step: StepConfig,
    pub horizon: f64,
    pub n_paths: usize,
    pub checkpoints: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GeodesicSettings {
    pub a: f64,
    pub k: f64,
    pub eps: i8,
    pub horizon: f64,
    pub n: usize,
    pub checkpoints: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SphereSettings {
    pub radii: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub n: usize,
    pub center: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct HittingSettings {
    pub t: f64,
    pub n: usize,
    pub dt: f64,
}

#[derive(Clone, Debug)]
pub struct Tolerances {
    pub cauchy_ecf: f64,
    pub gaussian_ecf: f64,
    pub variance_rel: f64,
    pub independence: f64,
    pub excursion: winding_lab::stats::Tolerances,
    pub geodesic_ecf: f64,
    pub shift_abs: f64,
    pub dtheta_abs: f64,
    pub hitting_mean: f64,
    pub hitting_ecf: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Option<Mode>,
    pub seed: u64,
    pub out: Option<String>,
    pub group: ModularGroupSpec,
    pub forms: Vec<HarmonicFormSpec>,
    pub petersson_samples: usize,
    pub brownian: BrownianSettings,
    pub geodesic: GeodesicSettings,
    pub spheres: SphereSettings,
    pub hitting: HittingSettings,
    pub tol: Tolerances,
    /// Every resolved value, including defaults, as text.
    pub resolved: BTreeMap<String, BTreeMap<String, String>>,
    /// `section.key` names that took their default.
    pub defaulted: Vec<String>,
}

/// Known keys and their defaults, per section.
const SCHEMA: &[(&str, &[(&str, &str)])] = &[
    ("experiment", &[("name", "experiment"), ("mode", ""), ("seed", "1"), ("out", "")]),
    ("group", &[("name", "GAMMA1"), ("index", ""), ("cusp_widths", ""), ("perm_u", ""), ("perm_t", "")]),
    ("forms", &[("list", "OMEGA0"), ("petersson_samples", "4000000")]),
    (
        "brownian",
        &[
            ("a", "1"),
            ("horizon", "10"),
            ("n_paths", "100"),
            ("dt", "1e-3"),
            ("checkpoints", "1"),
            ("start", "liouville"),
            ("routes", "both"),
            ("reduction_period", "64"),
            ("base_level", "0"),
            ("max_cusp_levels", "3"),
            ("refine_height", "5"),
            ("level_refine", "2"),
            ("level_band", "4"),
        ],
    ),
    ("excursions", &[("levels", "4, 9")]),
    ("geodesic", &[("a", "1"), ("k", "0"), ("eps", "1"), ("horizon", "100"), ("n", "100"), ("checkpoints", "1")]),
    ("spheres", &[("radii", "8, 12"), ("thresholds", "0.12, 0.05"), ("n", "20000"), ("center", "1, 0, 0")]),
    ("hitting", &[("t", "50"), ("n", "2000"), ("dt", "1e-3")]),
    (
        "tolerances",
        &[
            ("cauchy_ecf", "0.08"),
            ("gaussian_ecf", "0.06"),
            ("variance_rel", "0.10"),
            ("independence", "0.08"),
            ("phi_ecf", "0.06"),
            ("duration_rel", "0.05"),
            ("occupation_rel", "0.10"),
            ("rate_rel", "0.15"),
            ("geodesic_ecf", "0.10"),
            ("shift_abs", "0.05"),
            ("dtheta_abs", "1e-3"),
            ("hitting_mean", "0.03"),
            ("hitting_ecf", "0.05"),
        ],
    ),
];

const FORM_KEYS: &[&str] = &["kind"];

struct Resolver<'a> {
    raw: &'a RawConfig,
    errors: Vec<String>,
    resolved: BTreeMap<String, BTreeMap<String, String>>,
    defaulted: Vec<String>,
}

impl<'a> Resolver<'a> {
    fn text(&mut self, section: &str, key: &str) -> String {
        let default = SCHEMA
            .iter()
            .find(|(s, _)| *s == section)
            .and_then(|(_, keys)| keys.iter().find(|(k, _)| *k == key))
            .map(|(_, d)| *d)
            .unwrap_or("");
        let v = match self.raw.sections.get(section).and_then(|m| m.get(key)) {
            Some(e) => e.value.clone(),
            None => {
                self.defaulted.push(format!("{section}.{key}"));
                default.to_string()
            }
        };
        self.resolved.entry(section.into()).or_default().insert(key.into(), v.clone());
        v
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.text(section, key);
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                let line = self.line(section, key);
                self.errors.push(format!("{line}{section}.{key}: cannot parse `{v}`: {e}"));
                None
            }
        }
    }

    fn list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let v = self.text(section, key);
        let parsed: Result<Vec<f64>, _> = v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(x) => Some(x),
            Err(e) => {
                let line = self.line(section, key);
                self.errors.push(format!("{line}{section}.{key}: cannot parse list `{v}`: {e}"));
                None
            }
        }
    }

    fn line(&self, section: &str, key: &str) -> String {
        self.raw
            .sections
            .get(section)
            .and_then(|m| m.get(key))
            .map(|e| format!("line {}: ", e.line))
            .unwrap_or_default()
    }

    fn check(&mut self, ok: bool, msg: String) {
        if !ok {
            self.errors.push(msg);
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let s = s.trim();
    let (re, im) = match s.split_once(':') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "0"),
    };
    let re = re.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?;
    let im = im.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))?;
    Ok(Complex64::new(re, im))
}

fn parse_form_section(name: &str, map: &BTreeMap<String, Entry>, group: &ModularGroupSpec) -> Result<HarmonicFormSpec, String> {
    let kind = match map.get("kind").map(|e| e.value.to_ascii_lowercase()) {
        Some(k) if k == "singular" => FormKind::Singular,
        Some(k) if k == "cusp" => FormKind::Cusp,
        Some(k) => return Err(format!("form.{name}.kind: expected `singular` or `cusp`, got `{k}`")),
        None => return Err(format!("form.{name}: missing `kind`")),
    };
    let mut table = vec![None; group.nu_inf()];
    for (k, e) in map {
        if FORM_KEYS.contains(&k.as_str()) {
            continue;
        }
        let Some(l) = k.strip_prefix("cusp.").and_then(|l| l.parse::<usize>().ok()) else {
            return Err(format!("line {}: form.{name}: unknown key `{k}`", e.line));
        };
        if l >= group.nu_inf() {
            return Err(format!("line {}: form.{name}: cusp {l} out of range ({} cusps)", e.line, group.nu_inf()));
        }
        let (r, coeffs) = e
            .value
            .split_once(';')
            .ok_or_else(|| format!("line {}: form.{name}.{k}: expected `residue ; b0, b1, ...`", e.line))?;
        let r = r.trim().parse::<f64>().map_err(|err| format!("line {}: form.{name}.{k}: residue: {err}", e.line))?;
        let coeffs: Result<Vec<Complex64>, String> = coeffs.split(',').filter(|s| !s.trim().is_empty()).map(parse_complex).collect();
        let coeffs = coeffs.map_err(|err| format!("line {}: form.{name}.{k}: {err}", e.line))?;
        table[l] = Some((r, coeffs));
    }
    let table: Option<Vec<_>> = table.into_iter().collect();
    let table = table.ok_or_else(|| format!("form.{name}: every cusp needs a `cusp.<l>` line"))?;
    HarmonicFormSpec::from_expansions(name, kind, group, table).map_err(|e| format!("form.{name}: {e}"))
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        Self::resolve(&raw)
    }

    pub fn resolve(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut r = Resolver { raw, errors: Vec::new(), resolved: BTreeMap::new(), defaulted: Vec::new() };
        for (section, keys) in &raw.sections {
            if section.starts_with("form.") {
                continue;
            }
            match SCHEMA.iter().find(|(s, _)| s == section) {
                None => r.errors.push(format!("unknown section `[{section}]`")),
                Some((_, known)) => {
                    for (k, e) in keys {
                        if !known.iter().any(|(kk, _)| kk == k) {
                            r.errors.push(format!("line {}: unknown key `{section}.{k}`", e.line));
                        }
                    }
                }
            }
        }

        let name = r.text("experiment", "name");
        let mode_text = r.text("experiment", "mode");
        let mode = if mode_text.is_empty() {
            None
        } else {
            match mode_text.parse::<Mode>() {
                Ok(m) => Some(m),
                Err(e) => {
                    r.errors.push(format!("experiment.mode: {e}"));
                    None
                }
            }
        };
        let seed = r.parse::<u64>("experiment", "seed").unwrap_or(1);
        let out = Some(r.text("experiment", "out")).filter(|s| !s.is_empty());

        let gname = r.text("group", "name");
        let custom_keys = ["index", "cusp_widths", "perm_u", "perm_t"];
        let custom: Vec<String> = custom_keys.iter().map(|k| r.text("group", k)).collect();
        let group = if gname.eq_ignore_ascii_case("custom") {
            let mut block = String::new();
            for (k, v) in custom_keys.iter().zip(&custom) {
                if !v.is_empty() {
                    block.push_str(&format!("{k} = {v}\n"));
                }
            }
            block.push_str("name = custom\n");
            ModularGroupSpec::from_config_block(&block).map_err(|e| format!("group: {e}"))
        } else {
            if custom.iter().any(|v| !v.is_empty()) {
                r.errors.push("group: index/perm_u/perm_t/cusp_widths are only read when name = custom".into());
            }
            builtin_group_by_name(&gname).map_err(|e| format!("group.name: {e}"))
        };
        let group = match group {
            Ok(g) => Some(g),
            Err(e) => {
                r.errors.push(e);
                None
            }
        };

        let list = r.text("forms", "list");
        let petersson_samples = r.parse::<usize>("forms", "petersson_samples").unwrap_or(0);
        let mut forms = Vec::new();
        if let Some(g) = &group {
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let section = format!("form.{name}");
                let f = match raw.sections.get(&section) {
                    Some(map) => parse_form_section(name, map, g),
                    None => builtin_form(name, g).map_err(|e| format!("forms.list: {e}")),
                };
                match f {
                    Ok(f) => forms.push(f),
                    Err(e) => r.errors.push(e),
                }
            }
            if forms.is_empty() && r.errors.is_empty() {
                r.errors.push("forms.list: no forms given".into());
            }
            for s in raw.sections.keys() {
                if let Some(n) = s.strip_prefix("form.") {
                    if !list.split(',').any(|x| x.trim() == n) {
                        r.errors.push(format!("section `[{s}]` is not referenced by forms.list"));
                    }
                }
            }
        }

        let d = StepConfig::default();
        let ba = r.parse::<f64>("brownian", "a").unwrap_or(1.0);
        let horizon = r.parse::<f64>("brownian", "horizon").unwrap_or(0.0);
        let n_paths = r.parse::<usize>("brownian", "n_paths").unwrap_or(0);
        let dt = r.parse::<f64>("brownian", "dt").unwrap_or(d.dt_base);
        let checkpoints = r.list("brownian", "checkpoints").unwrap_or_default();
        let start = match r.text("brownian", "start").to_ascii_lowercase().as_str() {
            "identity" => Start::Identity,
            "liouville" => Start::Liouville,
            other => {
                r.errors.push(format!("brownian.start: expected `identity` or `liouville`, got `{other}`"));
                Start::Identity
            }
        };
        let routes = match r.text("brownian", "routes").to_ascii_lowercase().as_str() {
            "both" => Routes::BOTH,
            "primitive" => Routes::PRIMITIVE,
            "ito" => Routes::ITO,
            other => {
                r.errors.push(format!("brownian.routes: expected `both`, `primitive` or `ito`, got `{other}`"));
                Routes::BOTH
            }
        };
        let step = StepConfig {
            dt_base: dt,
            a: ba,
            seed,
            reduction_period: r.parse("brownian", "reduction_period").unwrap_or(d.reduction_period),
            base_level: r.parse("brownian", "base_level").unwrap_or(d.base_level),
            max_cusp_levels: r.parse("brownian", "max_cusp_levels").unwrap_or(d.max_cusp_levels),
            refine_height: r.parse("brownian", "refine_height").unwrap_or(d.refine_height),
            level_refine: r.parse("brownian", "level_refine").unwrap_or(d.level_refine),
            level_band: r.parse("brownian", "level_band").unwrap_or(d.level_band),
            routes,
            start,
            mirror_v: false,
        };
        if let Err(e) = step.validate() {
            r.errors.push(format!("brownian: {e}"));
        }
        let levels = r.list("excursions", "levels").unwrap_or_default();
        r.check(horizon >= 0.0 && horizon.is_finite(), "brownian.horizon must be finite and >= 0".into());
        r.check(checkpoints.iter().all(|c| (0.0..=1.0).contains(c)), "brownian.checkpoints must lie in [0, 1]".into());
        r.check(levels.iter().all(|&l| l >= 2.0), "excursions.levels must be >= 2".into());

        let ga = r.parse::<f64>("geodesic", "a").unwrap_or(1.0);
        let k = r.parse::<f64>("geodesic", "k").unwrap_or(0.0);
        let eps = r.parse::<i8>("geodesic", "eps").unwrap_or(1);
        let ghorizon = r.parse::<f64>("geodesic", "horizon").unwrap_or(0.0);
        let gn = r.parse::<usize>("geodesic", "n").unwrap_or(0);
        let gcheck = r.list("geodesic", "checkpoints").unwrap_or_default();
        let geodesic_used = mode.map_or(true, |m| m == Mode::Geodesic);
        if geodesic_used && (!ga.is_finite() || ga == 0.0) {
            r.errors.push("geodesic.a must be finite and nonzero".into());
        }
        r.check(k.abs() < 1.0, "geodesic.k must satisfy |k| < 1".into());
        r.check(eps == 1 || eps == -1, "geodesic.eps must be 1 or -1".into());
        r.check(gcheck.iter().all(|c| (0.0..=1.0).contains(c)), "geodesic.checkpoints must lie in [0, 1]".into());

        let radii = r.list("spheres", "radii").unwrap_or_default();
        let thresholds = r.list("spheres", "thresholds").unwrap_or_default();
        let sn = r.parse::<usize>("spheres", "n").unwrap_or(0);
        let center = r.list("spheres", "center").unwrap_or_default();
        r.check(radii.len() == thresholds.len(), "spheres.radii and spheres.thresholds must have equal length".into());
        r.check(center.len() == 3 && center[0] > 0.0, "spheres.center must be `y, x, theta` with y > 0".into());
        r.check(radii.iter().all(|&x| x >= 0.0), "spheres.radii must be >= 0".into());

        let ht = r.parse::<f64>("hitting", "t").unwrap_or(50.0);
        let hn = r.parse::<usize>("hitting", "n").unwrap_or(0);
        let hdt = r.parse::<f64>("hitting", "dt").unwrap_or(1e-3);
        r.check(ht >= 10.0, "hitting.t must be >= 10".into());
        r.check(hdt > 0.0, "hitting.dt must be > 0".into());

        let mut tol = |k: &str| r.parse::<f64>("tolerances", k).unwrap_or(0.0);
        let tol = Tolerances {
            cauchy_ecf: tol("cauchy_ecf"),
            gaussian_ecf: tol("gaussian_ecf"),
            variance_rel: tol("variance_rel"),
            independence: tol("independence"),
            excursion: winding_lab::stats::Tolerances {
                phi_ecf: tol("phi_ecf"),
                duration_rel: tol("duration_rel"),
                occupation_rel: tol("occupation_rel"),
                rate_rel: tol("rate_rel"),
            },
            geodesic_ecf: tol("geodesic_ecf"),
            shift_abs: tol("shift_abs"),
            dtheta_abs: tol("dtheta_abs"),
            hitting_mean: tol("hitting_mean"),
            hitting_ecf: tol("hitting_ecf"),
        };

        // form sections are part of the record too
        for (s, map) in &raw.sections {
            if s.starts_with("form.") {
                let e = r.resolved.entry(s.clone()).or_default();
                for (k, v) in map {
                    e.insert(k.clone(), v.value.clone());
                }
            }
        }

        if !r.errors.is_empty() {
            return Err(ConfigError(r.errors));
        }
        Ok(ExperimentConfig {
            name,
            mode,
            seed,
            out,
            group: group.expect("checked"),
            forms,
            petersson_samples,
            brownian: BrownianSettings { step, horizon, n_paths, checkpoints, levels },
            geodesic: GeodesicSettings { a: ga, k, eps, horizon: ghorizon, n: gn, checkpoints: gcheck },
            spheres: SphereSettings { radii, thresholds, n: sn, center: [center[0], center[1], center[2]] },
            hitting: HittingSettings { t: ht, n: hn, dt: hdt },
            tol,
            resolved: r.resolved,
            defaulted: r.defaulted,
        })
    }

    /// Overrides the master seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.brownian.step.seed = seed;
        self.resolved.entry("experiment".into()).or_default().insert("seed".into(), seed.to_string());
    }
}
