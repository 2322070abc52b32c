use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use winding_cli::config::{ExperimentConfig, Mode, RawConfig};
use winding_cli::run;
use winding_lab::modular_group::{builtin_group_by_name, ModularGroupSpec};

pub const SEED_ENV: &str = "WINDING_LAB_SEED";

#[derive(Parser)]
#[command(name = "winding-lab", version, about = "Winding of Brownian paths and geodesics on modular surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; the WINDING_LAB_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: experiment.out, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    Brownian(Common),
    Geodesic(Common),
    Excursions(Common),
    Spheres(Common),
    HittingTime(Common),
    /// Index, elliptic points, cusps, genus and covolume of a group.
    GroupInfo {
        /// Built-in group name; defaults to the [group] of --config.
        name: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Checks a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    ExperimentConfig::from_text(&text).map_err(|e| format!("{}:\n{e}", path.display()))
}

fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse::<u64>().map(Some).map_err(|e| format!("{SEED_ENV}=`{v}`: {e}")),
        Err(_) => Ok(flag),
    }
}

fn run_mode(mode: Mode, c: Common) -> ExitCode {
    let mut cfg = match &c.config {
        Some(p) => match load(p) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => ExperimentConfig::from_text("").expect("defaults are valid"),
    };
    if let Some(m) = cfg.mode {
        if m != mode {
            eprintln!("error: config declares mode `{}` but the `{}` subcommand was given", m.as_str(), mode.as_str());
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match resolve_seed(c.seed) {
        Ok(Some(s)) => cfg.set_seed(s),
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    if let Some(n) = c.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let dir = c.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let out = match run::execute(&cfg, mode) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for t in &out.tests {
        println!("{} {:<40} statistic {:.6} threshold {:.6}", if t.pass { "PASS" } else { "FAIL" }, t.test_name, t.statistic, t.threshold);
    }
    for s in &out.skipped {
        println!("SKIP {:<40} {}", s.test_name, s.reason);
    }
    match run::write_outputs(&dir, &cfg, mode, out) {
        Ok((pass, csv, json)) => {
            println!("wrote {} and {}", csv.display(), json.display());
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn group_info(g: &ModularGroupSpec) -> String {
    let widths: Vec<String> = g.cusps.iter().map(|c| c.width.to_string()).collect();
    let rows = [
        ("name", g.name.clone()),
        ("index", g.index.to_string()),
        ("nu2", g.nu2.to_string()),
        ("nu3", g.nu3.to_string()),
        ("nu_inf", g.nu_inf().to_string()),
        ("cusp widths", widths.join(", ")),
        ("genus", g.genus.to_string()),
        ("covolume", format!("{:.16e}", g.covolume())),
    ];
    rows.iter().map(|(k, v)| format!("{k:<12} {v}\n")).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Brownian(c) => run_mode(Mode::Brownian, c),
        Command::Geodesic(c) => run_mode(Mode::Geodesic, c),
        Command::Excursions(c) => run_mode(Mode::Excursions, c),
        Command::Spheres(c) => run_mode(Mode::Spheres, c),
        Command::HittingTime(c) => run_mode(Mode::HittingTime, c),
        Command::GroupInfo { name, config } => {
            let g = match (name, config) {
                (Some(n), _) => builtin_group_by_name(&n).map_err(|e| e.to_string()),
                (None, Some(p)) => load(&p).map(|c| c.group),
                (None, None) => Err("give a group name or --config".into()),
            };
            match g {
                Ok(g) => {
                    print!("{}", group_info(&g));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read config file {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let raw = match RawConfig::parse(&text) {
                Ok(r) => r,
                Err(e) => {
                    println!("invalid: {}\n{e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match ExperimentConfig::resolve(&raw) {
                Ok(c) => {
                    println!("valid: {}", config.display());
                    for d in &c.defaulted {
                        let (s, k) = d.split_once('.').unwrap_or((d, ""));
                        println!("default {d} = {}", c.resolved[s][k]);
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    println!("invalid: {}\n{e}", config.display());
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
    }
}
