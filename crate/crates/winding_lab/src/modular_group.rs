//! Finite-index subgroups of PSL(2,Z) described through the right action of
//! the generators u: z -> -1/z and t: z -> z+1 on the coset space.
//!
//! A point of the quotient is stored as (w, c): w is a point of G (usually
//! reduced into the standard fundamental domain of PSL(2,Z)) and c labels a
//! right coset, so the represented orbit is Gamma * rep(c) * w. Replacing w by
//! op*w therefore replaces c by c * op^{-1}.

use num_complex::Complex64;
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::hyperbolic_core::Moebius;
use crate::CoreError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupName {
    Gamma1,
    Commutator,
    Gamma2,
}

impl std::str::FromStr for GroupName {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GAMMA1" => Ok(GroupName::Gamma1),
            "COMMUTATOR" => Ok(GroupName::Commutator),
            "GAMMA2" => Ok(GroupName::Gamma2),
            _ => Err(CoreError::UnknownGroup(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuspChart {
    pub label: usize,
    pub width: usize,
    /// Sends the cusp to infinity.
    pub chart: Moebius,
    /// First coset of the t-cycle, in breadth-first order.
    pub base_coset: usize,
    /// Cosets of the t-cycle; `cosets[m] = base * t^m`.
    pub cosets: Vec<usize>,
}

/// Elementary move of the fundamental-domain reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionOp {
    Translate(i64),
    Invert,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModularGroupSpec {
    pub name: String,
    pub index: usize,
    pub nu2: usize,
    pub nu3: usize,
    pub genus: usize,
    pub cusps: Vec<CuspChart>,
    perm_u: Vec<usize>,
    perm_t: Vec<usize>,
    reps: Vec<Moebius>,
    coset_cusp: Vec<usize>,
    coset_shift: Vec<usize>,
    /// tpow[k][c] = c * t^k for k below the order of t on cosets.
    tpow: Vec<Vec<usize>>,
}

fn check_perm(p: &[usize], n: usize) -> Result<(), CoreError> {
    let mut seen = vec![false; n];
    if p.len() != n {
        return Err(CoreError::InvalidGroup("permutation length mismatch".into()));
    }
    for &i in p {
        if i >= n || seen[i] {
            return Err(CoreError::InvalidGroup("not a permutation".into()));
        }
        seen[i] = true;
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ModularGroupSpec {
    /// Builds a group from the right action of u and t on cosets, coset 0
    /// being the subgroup itself.
    pub fn from_permutations(name: &str, perm_u: Vec<usize>, perm_t: Vec<usize>) -> Result<Self, CoreError> {
        let n = perm_u.len();
        if n == 0 {
            return Err(CoreError::InvalidGroup("empty coset set".into()));
        }
        check_perm(&perm_u, n)?;
        check_perm(&perm_t, n)?;
        let perm_v: Vec<usize> = (0..n).map(|c| perm_u[perm_t[c]]).collect();
        for c in 0..n {
            if perm_u[perm_u[c]] != c {
                return Err(CoreError::InvalidGroup("u^2 does not act trivially".into()));
            }
            if perm_v[perm_v[perm_v[c]]] != c {
                return Err(CoreError::InvalidGroup("(tu)^3 does not act trivially".into()));
            }
        }
        let mut perm_tinv = vec![0; n];
        for c in 0..n {
            perm_tinv[perm_t[c]] = c;
        }

        // breadth-first coset representatives
        let t = Moebius::n(1.0);
        let tinv = Moebius::n(-1.0);
        let mut reps: Vec<Option<Moebius>> = vec![None; n];
        let mut order = Vec::with_capacity(n);
        reps[0] = Some(Moebius::identity());
        let mut queue = VecDeque::from([0usize]);
        while let Some(c) = queue.pop_front() {
            order.push(c);
            let r = reps[c].unwrap();
            for (next, g) in [(perm_u[c], Moebius::s()), (perm_t[c], t), (perm_tinv[c], tinv)] {
                if reps[next].is_none() {
                    reps[next] = Some(r.compose(&g));
                    queue.push_back(next);
                }
            }
        }
        if order.len() != n {
            return Err(CoreError::InvalidGroup("coset action is not transitive".into()));
        }
        let reps: Vec<Moebius> = reps.into_iter().map(Option::unwrap).collect();

        let mut coset_cusp = vec![usize::MAX; n];
        let mut coset_shift = vec![0; n];
        let mut cusps = Vec::new();
        for &c0 in &order {
            if coset_cusp[c0] != usize::MAX {
                continue;
            }
            let label = cusps.len();
            let mut cosets = vec![c0];
            let mut c = perm_t[c0];
            while c != c0 {
                cosets.push(c);
                c = perm_t[c];
            }
            for (m, &ci) in cosets.iter().enumerate() {
                coset_cusp[ci] = label;
                coset_shift[ci] = m;
            }
            cusps.push(CuspChart {
                label,
                width: cosets.len(),
                chart: reps[c0].inverse(),
                base_coset: c0,
                cosets,
            });
        }

        let nu2 = (0..n).filter(|&c| perm_u[c] == c).count();
        let nu3 = (0..n).filter(|&c| perm_v[c] == c).count();
        let twelve_g = 12 + n as i64 - 3 * nu2 as i64 - 4 * nu3 as i64 - 6 * cusps.len() as i64;
        if twelve_g < 0 || twelve_g % 12 != 0 {
            return Err(CoreError::InvalidGroup(format!("genus formula gives {twelve_g}/12")));
        }

        let t_order = cusps.iter().fold(1, |acc, cu| acc / gcd(acc, cu.width) * cu.width);
        let mut tpow = vec![(0..n).collect::<Vec<_>>()];
        for k in 1..t_order {
            let prev: &Vec<usize> = &tpow[k - 1];
            let next = (0..n).map(|c| perm_t[prev[c]]).collect();
            tpow.push(next);
        }

        Ok(ModularGroupSpec {
            name: name.to_string(),
            index: n,
            nu2,
            nu3,
            genus: (twelve_g / 12) as usize,
            cusps,
            perm_u,
            perm_t,
            reps,
            coset_cusp,
            coset_shift,
            tpow,
        })
    }

    pub fn nu_inf(&self) -> usize {
        self.cusps.len()
    }

    pub fn perm_u(&self) -> &[usize] {
        &self.perm_u
    }

    pub fn perm_t(&self) -> &[usize] {
        &self.perm_t
    }

    /// Representative of coset c in PSL(2,Z).
    pub fn representative(&self, c: usize) -> &Moebius {
        &self.reps[c]
    }

    /// Cusp of the t-cycle through c and the position m with c = base * t^m.
    #[inline]
    pub fn cusp_of(&self, c: usize) -> (usize, usize) {
        (self.coset_cusp[c], self.coset_shift[c])
    }

    #[inline]
    pub fn act_u(&self, c: usize) -> usize {
        self.perm_u[c]
    }

    /// c * t^n for any integer n.
    #[inline]
    pub fn act_t_pow(&self, c: usize, n: i64) -> usize {
        let k = n.rem_euclid(self.tpow.len() as i64) as usize;
        self.tpow[k][c]
    }

    /// Coset update for replacing w by op * w.
    #[inline]
    pub fn apply_op(&self, c: usize, op: ReductionOp) -> usize {
        match op {
            ReductionOp::Translate(n) => self.act_t_pow(c, -n),
            ReductionOp::Invert => self.perm_u[c],
        }
    }

    /// Coset c * g for an element g of PSL(2,Z).
    pub fn coset_times(&self, c: usize, g: &Moebius) -> usize {
        // z0 is interior to the fundamental domain, so the reduction word of
        // g(z0) is exactly g^{-1}
        let z0 = Complex64::new(0.1234, 1.7321);
        coset_reduce(self, g.apply(z0), c).2
    }

    pub fn covolume(&self) -> f64 {
        covolume(self)
    }

    /// Key-value block with cycle notation for the generator actions.
    pub fn to_config_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "index = {}", self.index);
        let widths: Vec<String> = self.cusps.iter().map(|c| c.width.to_string()).collect();
        let _ = writeln!(s, "cusp_widths = {}", widths.join(","));
        let _ = writeln!(s, "perm_u = {}", cycles(&self.perm_u));
        let _ = writeln!(s, "perm_t = {}", cycles(&self.perm_t));
        s
    }

    pub fn from_config_block(text: &str) -> Result<Self, CoreError> {
        let mut name = None;
        let mut index = None;
        let mut widths = None;
        let mut pu = None;
        let mut pt = None;
        for line in text.lines() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CoreError::InvalidGroup(format!("malformed line `{line}`")))?;
            let v = v.trim();
            match k.trim() {
                "name" => name = Some(v.to_string()),
                "index" => {
                    index = Some(v.parse::<usize>().map_err(|e| CoreError::InvalidGroup(e.to_string()))?)
                }
                "cusp_widths" => {
                    let w: Result<Vec<usize>, _> = v.split(',').map(|x| x.trim().parse::<usize>()).collect();
                    widths = Some(w.map_err(|e| CoreError::InvalidGroup(e.to_string()))?);
                }
                "perm_u" => pu = Some(v.to_string()),
                "perm_t" => pt = Some(v.to_string()),
                other => return Err(CoreError::InvalidGroup(format!("unknown key `{other}`"))),
            }
        }
        let index = index.ok_or_else(|| CoreError::InvalidGroup("missing index".into()))?;
        let pu = parse_cycles(&pu.ok_or_else(|| CoreError::InvalidGroup("missing perm_u".into()))?, index)?;
        let pt = parse_cycles(&pt.ok_or_else(|| CoreError::InvalidGroup("missing perm_t".into()))?, index)?;
        let spec = Self::from_permutations(name.as_deref().unwrap_or("CUSTOM"), pu, pt)?;
        if let Some(w) = widths {
            let have: Vec<usize> = spec.cusps.iter().map(|c| c.width).collect();
            let (mut a, mut b) = (w.clone(), have.clone());
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(CoreError::InvalidGroup(format!("declared widths {w:?} but t-cycles give {have:?}")));
            }
        }
        Ok(spec)
    }
}

fn cycles(p: &[usize]) -> String {
    let mut seen = vec![false; p.len()];
    let mut out = String::new();
    for s in 0..p.len() {
        if seen[s] {
            continue;
        }
        let mut cyc = vec![s];
        seen[s] = true;
        let mut c = p[s];
        while c != s {
            seen[c] = true;
            cyc.push(c);
            c = p[c];
        }
        let items: Vec<String> = cyc.iter().map(|x| x.to_string()).collect();
        let _ = write!(out, "({})", items.join(" "));
    }
    out
}

fn parse_cycles(s: &str, n: usize) -> Result<Vec<usize>, CoreError> {
    let mut p: Vec<usize> = (0..n).collect();
    for chunk in s.split('(').map(str::trim).filter(|c| !c.is_empty()) {
        let body = chunk
            .strip_suffix(')')
            .ok_or_else(|| CoreError::InvalidGroup(format!("bad cycle `{chunk}`")))?;
        let items: Result<Vec<usize>, _> = body.split_whitespace().map(str::parse::<usize>).collect();
        let items = items.map_err(|e| CoreError::InvalidGroup(e.to_string()))?;
        for (i, &a) in items.iter().enumerate() {
            if a >= n {
                return Err(CoreError::InvalidGroup(format!("coset {a} out of range")));
            }
            p[a] = items[(i + 1) % items.len()];
        }
    }
    check_perm(&p, n)?;
    Ok(p)
}

fn mat2_mul_mod2(a: [u8; 4], b: [u8; 4]) -> [u8; 4] {
    [
        (a[0] * b[0] + a[1] * b[2]) % 2,
        (a[0] * b[1] + a[1] * b[3]) % 2,
        (a[2] * b[0] + a[3] * b[2]) % 2,
        (a[2] * b[1] + a[3] * b[3]) % 2,
    ]
}

pub fn builtin_group(name: GroupName) -> ModularGroupSpec {
    match name {
        GroupName::Gamma1 => ModularGroupSpec::from_permutations("GAMMA1", vec![0], vec![0]),
        GroupName::Commutator => {
            // abelianization onto Z/6 with u -> 3, tu -> 2, hence t -> 5
            let pu = (0..6).map(|c| (c + 3) % 6).collect();
            let pt = (0..6).map(|c| (c + 5) % 6).collect();
            ModularGroupSpec::from_permutations("COMMUTATOR", pu, pt)
        }
        GroupName::Gamma2 => {
            // cosets are the elements of SL(2, F_2), identity first
            let mut elems: Vec<[u8; 4]> = Vec::new();
            for bits in 0..16u8 {
                let m = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1];
                if (m[0] * m[3] + m[1] * m[2]) % 2 == 1 {
                    elems.push(m);
                }
            }
            elems.sort_by_key(|m| *m != [1, 0, 0, 1]);
            let idx = |m: [u8; 4]| elems.iter().position(|e| *e == m).unwrap();
            let u = [0, 1, 1, 0];
            let t = [1, 1, 0, 1];
            let pu = elems.iter().map(|&m| idx(mat2_mul_mod2(m, u))).collect();
            let pt = elems.iter().map(|&m| idx(mat2_mul_mod2(m, t))).collect();
            ModularGroupSpec::from_permutations("GAMMA2", pu, pt)
        }
    }
    .expect("built-in group data is consistent")
}

pub fn builtin_group_by_name(name: &str) -> Result<ModularGroupSpec, CoreError> {
    Ok(builtin_group(name.parse()?))
}

pub fn covolume(spec: &ModularGroupSpec) -> f64 {
    2.0 * PI
        * (2.0 * spec.genus as f64 - 2.0
            + spec.nu_inf() as f64
            + 0.5 * spec.nu2 as f64
            + 2.0 / 3.0 * spec.nu3 as f64)
}

const MAX_REDUCTION_STEPS: usize = 10_000;

/// Reduction into |Re z| <= 1/2, |z| >= 1, calling `f` for every elementary
/// move in order of application. Returns the reduced point.
#[inline]
pub fn reduce_gamma1_with<F: FnMut(ReductionOp)>(mut z: Complex64, mut f: F) -> Complex64 {
    for _ in 0..MAX_REDUCTION_STEPS {
        let n = (z.re + 0.5).floor();
        if n != 0.0 {
            z.re -= n;
            f(ReductionOp::Translate(-(n as i64)));
        }
        let r2 = z.norm_sqr();
        if r2 < 1.0 && !(r2 >= 1.0 - 1e-15 && z.re <= 0.0) {
            z = Complex64::new(-z.re, z.im) / r2;
            f(ReductionOp::Invert);
        } else {
            break;
        }
    }
    z
}

/// Element of the word as a matrix.
pub fn op_matrix(op: ReductionOp) -> Moebius {
    match op {
        ReductionOp::Translate(n) => Moebius::n(n as f64),
        ReductionOp::Invert => Moebius::s(),
    }
}

pub fn reduce_gamma1(z: Complex64) -> (Complex64, Moebius) {
    let mut word = Moebius::identity();
    let w = reduce_gamma1_with(z, |op| word = op_matrix(op).compose(&word));
    (w, word)
}

pub fn coset_reduce(spec: &ModularGroupSpec, z: Complex64, coset: usize) -> (Complex64, Moebius, usize) {
    let mut word = Moebius::identity();
    let mut c = coset;
    let w = reduce_gamma1_with(z, |op| {
        word = op_matrix(op).compose(&word);
        c = spec.apply_op(c, op);
    });
    (w, word, c)
}

/// Chart coordinates (x~, y~) of a point already reduced into the standard
/// fundamental domain and lying on the sheet of coset c.
#[inline]
pub fn chart_coordinates(spec: &ModularGroupSpec, w: Complex64, c: usize) -> (usize, f64, f64) {
    let (cusp, m) = spec.cusp_of(c);
    (cusp, w.re + m as f64, w.im)
}

/// Height of the orbit of (z, coset) in the given cusp. Exact when it is at
/// least 1; below that the largest height over the depth-one sheets.
pub fn cusp_height(spec: &ModularGroupSpec, cusp: usize, z: Complex64, coset: usize) -> f64 {
    let (w, _, c) = coset_reduce(spec, z, coset);
    if spec.cusp_of(c).0 == cusp {
        return w.im;
    }
    let mut best: f64 = 0.0;
    for j in -2i64..=2 {
        // w'' = S T^j w, coset c * (S T^j)^{-1} = c * T^{-j} * S
        let cc = spec.perm_u[spec.act_t_pow(c, -j)];
        if spec.cusp_of(cc).0 == cusp {
            let zj = w + j as f64;
            best = best.max(w.im / zj.norm_sqr());
        }
    }
    best
}

/// Point of the standard fundamental domain drawn from the normalized
/// hyperbolic area dx dy / y^2.
pub fn sample_fundamental_domain<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // the part above y = 1 carries area 1 out of pi/3
    if rng.random::<f64>() < 3.0 / PI {
        let y = 1.0 / (1.0 - rng.random::<f64>());
        return Complex64::new(rng.random::<f64>() - 0.5, y);
    }
    let top = 2.0 / 3f64.sqrt() - 1.0;
    loop {
        let x = rng.random::<f64>() - 0.5;
        let y = 1.0 / (1.0 + top * rng.random::<f64>());
        if x * x + y * y >= 1.0 {
            return Complex64::new(x, y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn all() -> Vec<ModularGroupSpec> {
        [GroupName::Gamma1, GroupName::Commutator, GroupName::Gamma2].map(builtin_group).to_vec()
    }

    #[test]
    fn builtin_data() {
        let g1 = builtin_group(GroupName::Gamma1);
        assert_eq!((g1.index, g1.nu2, g1.nu3, g1.nu_inf(), g1.genus), (1, 1, 1, 1, 0));
        assert_eq!(g1.cusps[0].width, 1);
        let cm = builtin_group(GroupName::Commutator);
        assert_eq!((cm.index, cm.nu2, cm.nu3, cm.nu_inf(), cm.genus), (6, 0, 0, 1, 1));
        assert_eq!(cm.cusps[0].width, 6);
        let g2 = builtin_group(GroupName::Gamma2);
        assert_eq!((g2.index, g2.nu2, g2.nu3, g2.nu_inf(), g2.genus), (6, 0, 0, 3, 0));
        assert!(g2.cusps.iter().all(|c| c.width == 2));
        assert!("gamma3".parse::<GroupName>().is_err());
    }

    #[test]
    fn genus_and_volume_formulas() {
        for g in all() {
            let twelve_g = 12 + g.index as i64 - 3 * g.nu2 as i64 - 4 * g.nu3 as i64 - 6 * g.nu_inf() as i64;
            assert_eq!(twelve_g, 12 * g.genus as i64);
            // the volume is also index * pi/3
            assert!((covolume(&g) - g.index as f64 * PI / 3.0).abs() < 1e-12);
        }
        assert!((covolume(&builtin_group(GroupName::Gamma1)) - PI / 3.0).abs() < 1e-15);
        assert!((covolume(&builtin_group(GroupName::Commutator)) - 2.0 * PI).abs() < 1e-15);
        assert!((covolume(&builtin_group(GroupName::Gamma2)) - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn relations_and_widths() {
        for g in all() {
            let n = g.index;
            for c0 in 0..n {
                assert_eq!(g.perm_u[g.perm_u[c0]], c0);
                let ut = |c: usize| g.perm_t[g.perm_u[c]];
                let tu = |c: usize| g.perm_u[g.perm_t[c]];
                assert_eq!(ut(ut(ut(c0))), c0);
                assert_eq!(tu(tu(tu(c0))), c0);
            }
            assert_eq!(g.cusps.iter().map(|c| c.width).sum::<usize>(), n);
        }
    }

    #[test]
    fn cusp_stabilizers() {
        for g in all() {
            for cu in &g.cusps {
                // chart^{-1} n(h) chart must lie in the subgroup, i.e. fix coset 0
                let gen = cu.chart.inverse().compose(&Moebius::n(cu.width as f64)).compose(&cu.chart);
                assert_eq!(g.coset_times(0, &gen), 0, "{} cusp {}", g.name, cu.label);
                // and no smaller translation does
                for h in 1..cu.width {
                    let p = cu.chart.inverse().compose(&Moebius::n(h as f64)).compose(&cu.chart);
                    assert_ne!(g.coset_times(0, &p), 0);
                }
            }
        }
    }

    #[test]
    fn gamma2_charts() {
        let g2 = builtin_group(GroupName::Gamma2);
        let targets: Vec<Complex64> = g2
            .cusps
            .iter()
            .map(|cu| {
                let inv = cu.chart.inverse();
                // image of infinity is a/c
                if inv.c.abs() < 1e-12 {
                    c(f64::INFINITY, 0.0)
                } else {
                    c(inv.a / inv.c, 0.0)
                }
            })
            .collect();
        assert!(targets[0].re.is_infinite());
        assert!((targets[1].re - 0.0).abs() < 1e-12);
        assert!((targets[2].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduce_examples() {
        let (w, g) = reduce_gamma1(c(0.0, 1.0));
        assert_eq!(w, c(0.0, 1.0));
        assert!(g.approx_eq(&Moebius::identity(), 0.0));
        let (w, g) = reduce_gamma1(c(5.0, 1.0));
        assert!((w - c(0.0, 1.0)).norm() < 1e-15);
        assert!(g.approx_eq(&Moebius::n(-5.0), 0.0));
        let (w, g) = reduce_gamma1(c(0.1, 0.1));
        let s = -1.0 / c(0.1, 0.1);
        assert!((s - c(-5.0, 5.0)).norm() < 1e-12);
        assert!((w - c(0.0, 5.0)).norm() < 1e-12);
        assert!(g.approx_eq(&Moebius::n(5.0).compose(&Moebius::s()), 1e-15));
    }

    #[test]
    fn reduce_many_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let y = 10f64.powf(rng.random_range(-6.0..1.0));
            let z = c(rng.random_range(-50.0..50.0), y);
            let mut steps = 0;
            let w = reduce_gamma1_with(z, |_| steps += 1);
            assert!(steps <= 200);
            assert!(w.re.abs() <= 0.5 + 1e-12 && w.norm() >= 1.0 - 1e-12, "{z} -> {w}");
            let (w2, g) = reduce_gamma1(z);
            assert_eq!(w, w2);
            // the map has derivative Im w / Im z, so input rounding alone
            // is amplified by that factor
            let err = (g.apply(z) - w).norm();
            let cond = w.im / z.im * z.norm() * 1e-15;
            if z.im >= 1e-3 {
                assert!(err <= 1e-10 * w.norm().max(1.0), "{z} {w} {err}");
            }
            assert!(err <= 1e-10 + 100.0 * cond, "{z} {w} {err}");
        }
    }

    #[test]
    fn coset_bookkeeping() {
        let cm = builtin_group(GroupName::Commutator);
        // translating the point by +1 acts as t^{-1} on the coset, i.e. the
        // coset moves by the generator ab(t) = 5 of Z/6 read backwards
        assert_eq!(cm.apply_op(0, ReductionOp::Translate(-1)), 5);
        assert_eq!(cm.apply_op(0, ReductionOp::Translate(1)), 1);
        assert_eq!(cm.perm_t[0], 5);
        let (_, _, c2) = coset_reduce(&cm, c(0.0, 1.0), 4);
        assert_eq!(c2, 4);
        assert_eq!(cm.apply_op(cm.apply_op(2, ReductionOp::Invert), ReductionOp::Invert), 2);
    }

    #[test]
    fn total_deck_transformation() {
        // rep(c') * w' must equal gamma * rep(c) * z for some gamma in the
        // subgroup, i.e. rep(c) * word^{-1} * rep(c')^{-1} has trivial coset
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for g in all() {
            for _ in 0..200 {
                let z = c(rng.random_range(-3.0..3.0), rng.random_range(0.01..2.0));
                let c0 = rng.random_range(0..g.index);
                let (_, word, c1) = coset_reduce(&g, z, c0);
                let elt = g.reps[c0].compose(&word.inverse()).compose(&g.reps[c1].inverse());
                assert_eq!(g.coset_times(0, &elt), 0);
            }
        }
    }

    #[test]
    fn heights() {
        let g1 = builtin_group(GroupName::Gamma1);
        assert!((cusp_height(&g1, 0, c(0.0, 10.0), 0) - 10.0).abs() < 1e-12);
        assert!((cusp_height(&g1, 0, c(0.1, 0.1), 0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn height_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let gens = [Moebius::s(), Moebius::n(1.0), Moebius::n(-1.0)];
        for g in all() {
            for cu in 0..g.nu_inf() {
                for _ in 0..50 {
                    let z = c(rng.random_range(-0.5..0.5), rng.random_range(1.0..8.0));
                    let h0 = cusp_height(&g, cu, z, 0);
                    // random word in the subgroup: conjugate back into coset 0
                    let mut word = Moebius::identity();
                    for _ in 0..8 {
                        word = word.compose(&gens[rng.random_range(0..3)]);
                    }
                    let cw = g.coset_times(0, &word);
                    let gamma = g.reps[cw].inverse().compose(&word);
                    assert_eq!(g.coset_times(0, &gamma), 0);
                    let h1 = cusp_height(&g, cu, gamma.apply(z), 0);
                    assert!((h0 - h1).abs() < 1e-9 * h0.max(1.0), "{} {h0} {h1}", g.name);
                }
            }
        }
    }

    #[test]
    fn config_round_trip() {
        for g in all() {
            let text = g.to_config_block();
            let back = ModularGroupSpec::from_config_block(&text).unwrap();
            assert_eq!(back, g);
        }
        // index-two subgroup generated by squares
        let sq = ModularGroupSpec::from_config_block("index = 2\nperm_u = (0 1)\nperm_t = (0 1)\n").unwrap();
        assert_eq!((sq.nu2, sq.nu3, sq.genus), (0, 2, 0));
        assert!(ModularGroupSpec::from_config_block("index = 2\nperm_u = (0 1)\nperm_t = (0)(1)\n").is_err());
    }
}
