//! The shipped GAMMA2 config must describe theta3^4 dz and theta2^4 dz on
//! every sheet.

use std::f64::consts::PI;
use std::path::Path;

use winding_cli::config::ExperimentConfig;
use winding_lab::hyperbolic_core::Moebius;
use winding_lab::Complex64;

/// theta_j(z)^4 by the defining theta series; j = 3 or 2.
fn theta4(j: u8, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let s: Complex64 = (-60i64..=60)
        .map(|n| {
            let e = if j == 3 { (n * n) as f64 } else { (n as f64 + 0.5).powi(2) };
            (i * PI * e * z).exp()
        })
        .sum();
    s.powi(4)
}

fn slash(j: u8, g: &Moebius, w: Complex64) -> Complex64 {
    theta4(j, g.apply(w)) / (g.c * w + g.d).powi(2)
}

#[test]
fn expansions_match_theta_series_on_all_sheets() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gamma2_theta.cfg");
    let cfg = ExperimentConfig::from_text(&std::fs::read_to_string(path).unwrap()).unwrap();
    let g = &cfg.group;
    assert_eq!(g.name, "GAMMA2");
    assert_eq!(cfg.forms[0].residues(), vec![1.0, -1.0, 0.0]);
    assert_eq!(cfg.forms[1].residues(), vec![0.0, -1.0, 1.0]);
    let pts = [Complex64::new(0.1, 0.9), Complex64::new(-0.45, 0.62), Complex64::new(0.3, 1.7)];
    for (form, j) in cfg.forms.iter().zip([3u8, 2]) {
        for c in 0..g.index {
            let rep = g.representative(c);
            for &w in &pts {
                let want = slash(j, rep, w);
                let got = form.holomorphic_on_sheet(w, c);
                assert!((got - want).norm() < 1e-9 * (1.0 + want.norm()), "{} coset {c} at {w}: {got} vs {want}", form.name);
            }
        }
    }
}

#[test]
fn theta_fourth_powers_are_gamma2_invariant() {
    // generators of GAMMA2 mod -1
    let gens = [Moebius { a: 1.0, b: 2.0, c: 0.0, d: 1.0 }, Moebius { a: 1.0, b: 0.0, c: 2.0, d: 1.0 }];
    let w = Complex64::new(0.21, 1.3);
    for j in [3u8, 2] {
        for g in &gens {
            assert!((slash(j, g, w) - theta4(j, w)).norm() < 1e-9 * theta4(j, w).norm().max(1.0));
        }
    }
}
