//! Prints a GAMMA2 configuration with the singular forms theta3^4 dz and
//! theta2^4 dz. The expansion at each cusp is found by matching the slash
//! image numerically against +-theta_j^4, then written with exact
//! divisor-sum coefficients.
//!
//!     cargo run -p winding_cli --example gamma2_theta_config > configs/gamma2_theta.cfg

use winding_lab::forms::DEFAULT_TRUNCATION;
use winding_lab::hyperbolic_core::Moebius;
use winding_lab::modular_group::builtin_group_by_name;
use winding_lab::Complex64;

fn sigma(n: u64) -> u64 {
    (1..=n).filter(|d| n % d == 0).sum()
}

/// Coefficients in Q = exp(i pi w) of theta3^4, theta4^4, theta2^4.
fn fourth_powers(k: usize) -> [Vec<i64>; 3] {
    let r4 = |n: u64| -> i64 {
        if n == 0 {
            1
        } else {
            8 * sigma(n) as i64 - if n % 4 == 0 { 32 * sigma(n / 4) as i64 } else { 0 }
        }
    };
    let t3: Vec<i64> = (0..k as u64).map(r4).collect();
    let t4: Vec<i64> = t3.iter().enumerate().map(|(n, c)| if n % 2 == 1 { -c } else { *c }).collect();
    let t2: Vec<i64> = (0..k as u64).map(|n| if n % 2 == 1 { 16 * sigma(n) as i64 } else { 0 }).collect();
    [t3, t4, t2]
}

fn theta4_direct(j: usize, z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut s = Complex64::new(0.0, 0.0);
    for n in -40i64..=40 {
        let (e, sign) = match j {
            0 => (n as f64 * n as f64, 1.0),
            1 => (n as f64 * n as f64, if n % 2 == 0 { 1.0 } else { -1.0 }),
            _ => ((n as f64 + 0.5).powi(2), 1.0),
        };
        s += sign * (i * std::f64::consts::PI * e * z).exp();
    }
    s.powi(4)
}

fn slash(j: usize, g: &Moebius, w: Complex64) -> Complex64 {
    theta4_direct(j, g.apply(w)) / (g.c * w + g.d).powi(2)
}

fn main() {
    let group = builtin_group_by_name("GAMMA2").expect("built-in");
    let coeffs = fourth_powers(DEFAULT_TRUNCATION);
    let probes = [Complex64::new(0.13, 1.1), Complex64::new(-0.41, 0.8)];
    println!("# GAMMA2 with the singular forms theta3^4 dz and theta2^4 dz.");
    println!("[experiment]\nname = gamma2-theta\nmode = brownian\nseed = 7\n");
    println!("[group]\nname = GAMMA2\n");
    println!("[forms]\nlist = THETA3_4, THETA2_4\n");
    println!("[brownian]\nhorizon = 50\nn_paths = 1000\ncheckpoints = 1\n");
    for (name, j0) in [("THETA3_4", 0usize), ("THETA2_4", 2usize)] {
        println!("[form.{name}]\nkind = singular");
        for cusp in &group.cusps {
            let rep = cusp.chart.inverse();
            let mut hit = None;
            'search: for j in 0..3 {
                for sign in [1i64, -1] {
                    if probes.iter().all(|&w| (slash(j0, &rep, w) - sign as f64 * theta4_direct(j, w)).norm() < 1e-9) {
                        hit = Some((j, sign));
                        break 'search;
                    }
                }
            }
            let (j, sign) = hit.expect("slash image is +-theta_j^4");
            let c: Vec<String> = coeffs[j].iter().map(|&b| (sign * b).to_string()).collect();
            println!("cusp.{} = {} ; {}", cusp.label, sign * coeffs[j][0], c.join(", "));
        }
        println!();
    }
}
