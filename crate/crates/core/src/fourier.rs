//! Sparse real Fourier series on T² × S¹ with decay certificates.
//!
//! A mode `k` contributes `a cos⟨k,θ⟩ + b sin⟨k,θ⟩` with `θ = (q₁, q₂, 2πt)`. Only one
//! representative of each `±k` pair is stored (the lexicographically positive one).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{bail, Result};
use crate::grid::GridFunction;
use crate::resonance::{max_norm, IVec3, Lattice};

#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeq {
    coeffs: BTreeMap<IVec3, (f64, f64)>,
    pub r: u32,
    pub norm_cr: f64,
}

fn is_positive(k: IVec3) -> bool {
    match k.iter().find(|&&x| x != 0) {
        Some(&x) => x > 0,
        None => true,
    }
}

/// Representative of `±k` in the stored half-space and the sign flip applied to `b`.
pub fn canonical(k: IVec3) -> (IVec3, f64) {
    if is_positive(k) {
        (k, 1.0)
    } else {
        ([-k[0], -k[1], -k[2]], -1.0)
    }
}

impl FourierSeq {
    pub fn new(r: u32, norm_cr: f64) -> Self {
        FourierSeq { coeffs: BTreeMap::new(), r, norm_cr }
    }

    /// Add `a cos⟨k,θ⟩ + b sin⟨k,θ⟩` (accumulates on an existing mode).
    pub fn insert(&mut self, k: IVec3, a: f64, b: f64) {
        let (kc, s) = canonical(k);
        let b = if kc == [0, 0, 0] { 0.0 } else { s * b };
        let e = self.coeffs.entry(kc).or_insert((0.0, 0.0));
        e.0 += a;
        e.1 += b;
        if e.0 == 0.0 && e.1 == 0.0 {
            self.coeffs.remove(&kc);
        }
    }

    pub fn with(mut self, k: IVec3, a: f64, b: f64) -> Self {
        self.insert(k, a, b);
        self
    }

    /// `(a, b)` as seen from `k` itself (sine flips sign under `k → −k`).
    pub fn get(&self, k: IVec3) -> (f64, f64) {
        let (kc, s) = canonical(k);
        self.coeffs.get(&kc).map_or((0.0, 0.0), |&(a, b)| (a, s * b))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IVec3, &(f64, f64))> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Magnitude of the complex coefficient `f_k`.
    pub fn complex_abs(k: IVec3, a: f64, b: f64) -> f64 {
        if k == [0, 0, 0] {
            a.abs()
        } else {
            0.5 * a.hypot(b)
        }
    }

    pub fn decay_bound(&self, k: IVec3) -> f64 {
        let n = max_norm(k);
        if n == 0 {
            self.norm_cr
        } else {
            (2.0 * PI * n as f64).powi(-(self.r as i32)) * self.norm_cr
        }
    }

    /// First stored mode breaking `|f_k| <= (2π|k|)^{-r} ‖f‖`.
    pub fn decay_violation(&self) -> Option<IVec3> {
        self.coeffs
            .iter()
            .find(|(&k, &(a, b))| Self::complex_abs(k, a, b) > self.decay_bound(k) * (1.0 + 1e-12))
            .map(|(k, _)| *k)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.decay_violation() {
            bail!(Fourier, "coefficient at {:?} exceeds the declared C^{} decay bound", k, self.r);
        }
        Ok(())
    }

    /// Keep the modes selected by `keep`; the certificate is inherited.
    pub fn filter(&self, mut keep: impl FnMut(IVec3) -> bool) -> FourierSeq {
        FourierSeq {
            coeffs: self.coeffs.iter().filter(|(&k, _)| keep(k)).map(|(k, v)| (*k, *v)).collect(),
            r: self.r,
            norm_cr: self.norm_cr,
        }
    }

    /// `α·self + β·other`, certificate `|α|‖self‖ + |β|‖other‖` at the smaller smoothness.
    pub fn combine(&self, alpha: f64, other: &FourierSeq, beta: f64) -> FourierSeq {
        let mut out = FourierSeq::new(self.r.min(other.r), alpha.abs() * self.norm_cr + beta.abs() * other.norm_cr);
        for (&k, &(a, b)) in &self.coeffs {
            out.insert(k, alpha * a, alpha * b);
        }
        for (&k, &(a, b)) in &other.coeffs {
            out.insert(k, beta * a, beta * b);
        }
        out
    }

    pub fn scale(&self, s: f64) -> FourierSeq {
        let mut out = self.filter(|_| true);
        for v in out.coeffs.values_mut() {
            v.0 *= s;
            v.1 *= s;
        }
        out.norm_cr *= s.abs();
        out
    }

    pub fn eval(&self, theta: [f64; 3]) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, &(a, b))| {
                let ph = k[0] as f64 * theta[0] + k[1] as f64 * theta[1] + k[2] as f64 * theta[2];
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    }

    /// Value at angles `q` and time `t` (period 1).
    pub fn eval_qt(&self, q: [f64; 2], t: f64) -> f64 {
        self.eval([q[0], q[1], 2.0 * PI * t])
    }

    /// `Σ |k|²·|f_k|` over the full lattice (both members of each pair).
    pub fn c2_mass(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|(k, _)| **k != [0, 0, 0])
            .map(|(&k, &(a, b))| (max_norm(k) as f64).powi(2) * a.hypot(b))
            .sum()
    }

    pub fn max_component(&self) -> [i64; 3] {
        let mut m = [0i64; 3];
        for k in self.coeffs.keys() {
            for i in 0..3 {
                m[i] = m[i].max(k[i].abs());
            }
        }
        m
    }

    /// Text records `k1 k2 k3 a b` after an `r` / `norm_cr` header.
    pub fn to_records(&self) -> String {
        let mut s = format!("r {}\nnorm_cr {:e}\n", self.r, self.norm_cr);
        for (k, (a, b)) in &self.coeffs {
            let _ = writeln!(s, "{} {} {} {:e} {:e}", k[0], k[1], k[2], a, b);
        }
        s
    }

    pub fn from_records(text: &str) -> Result<FourierSeq> {
        let mut r = None;
        let mut norm = None;
        let mut f = FourierSeq::new(0, 0.0);
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || crate::Error::Fourier(format!("line {}: cannot parse '{}'", ln + 1, line));
            match parts[0] {
                "r" if parts.len() == 2 => r = Some(parts[1].parse::<u32>().map_err(|_| bad())?),
                "norm_cr" if parts.len() == 2 => norm = Some(parts[1].parse::<f64>().map_err(|_| bad())?),
                _ if parts.len() == 5 => {
                    let k: Vec<i64> = parts[..3].iter().map(|s| s.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
                    let a: f64 = parts[3].parse().map_err(|_| bad())?;
                    let b: f64 = parts[4].parse().map_err(|_| bad())?;
                    f.insert([k[0], k[1], k[2]], a, b);
                }
                _ => return Err(bad()),
            }
        }
        match (r, norm) {
            (Some(r), Some(n)) => {
                f.r = r;
                f.norm_cr = n;
                Ok(f)
            }
            _ => bail!(Fourier, "coefficient file needs 'r' and 'norm_cr' header lines"),
        }
    }
}

/// Keep the coefficients on the lattice.
pub fn pickup(f: &FourierSeq, lat: &Lattice) -> FourierSeq {
    f.filter(|k| lat.contains(k))
}

/// Keep the lattice coefficients with `|k| >= cutoff`.
pub fn shear(f: &FourierSeq, lat: &Lattice, cutoff: f64) -> Result<FourierSeq> {
    if !(cutoff >= 0.0) {
        bail!(Fourier, "shear cutoff must be >= 0");
    }
    Ok(f.filter(|k| max_norm(k) as f64 >= cutoff && lat.contains(k)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kappa3 {
    pub partial: f64,
    pub remainder: f64,
}

impl Kappa3 {
    /// Upper bound for the full sum.
    pub fn value(&self) -> f64 {
        self.partial + self.remainder
    }
}

/// `Σ_{k∈Z³\{0}} |k|∞^{-4}` by shells `|k|∞ = n` (each holds `24n²+2` points) up to 10⁴,
/// plus the integral bound on the rest.
pub fn kappa3_estimate() -> Kappa3 {
    static K: OnceLock<Kappa3> = OnceLock::new();
    *K.get_or_init(|| {
        let n_max = 10_000u64;
        // sum small terms first
        let partial: f64 = (1..=n_max).rev().map(|n| (24 * n * n + 2) as f64 / (n as f64).powi(4)).sum();
        let n = n_max as f64;
        Kappa3 { partial, remainder: 24.0 / n + 2.0 / (3.0 * n.powi(3)) }
    })
}

pub fn kappa3() -> f64 {
    kappa3_estimate().value()
}

/// Split off the modes with `|k| >= cutoff`; the bound covers their C² mass.
pub fn truncate(f: &FourierSeq, cutoff: f64) -> Result<(FourierSeq, f64)> {
    if f.r <= 6 {
        bail!(Fourier, "truncation bound needs r >= 7, got r = {}", f.r);
    }
    if !(cutoff >= 1.0) {
        bail!(Fourier, "truncation cutoff must be >= 1");
    }
    let low = f.filter(|k| (max_norm(k) as f64) < cutoff);
    let tail = kappa3() * cutoff.powf(6.0 - f.r as f64) * f.norm_cr;
    Ok((low, tail))
}

/// Random series with `modes` distinct harmonics in `|k|∞ <= k_max`, each at a uniform fraction of its
/// decay bound, so the `C^r` certificate `norm_cr` holds by construction.
pub fn random_admissible<R: rand::Rng>(rng: &mut R, r: u32, norm_cr: f64, k_max: i64, modes: usize) -> FourierSeq {
    let mut f = FourierSeq::new(r, norm_cr);
    for _ in 0..modes {
        let k = loop {
            let k = [rng.gen_range(-k_max..=k_max), rng.gen_range(-k_max..=k_max), rng.gen_range(-k_max..=k_max)];
            if k != [0, 0, 0] && f.get(k) == (0.0, 0.0) {
                break k;
            }
        };
        let amp = rng.gen_range(0.0..1.0) * f.decay_bound(k);
        let phase = rng.gen_range(0.0..2.0 * PI);
        f.insert(k, 2.0 * amp * phase.cos(), 2.0 * amp * phase.sin());
    }
    f
}

fn check_alias(f: &FourierSeq, dims: [usize; 3]) -> Result<()> {
    let m = f.max_component();
    for i in 0..3 {
        if dims[i] as i64 <= 2 * m[i] {
            bail!(Fourier, "grid size {} on axis {} aliases modes up to {}", dims[i], i, m[i]);
        }
    }
    Ok(())
}

/// Sample on the uniform grid of `T² × S¹` (`q` spacing `2π/N`, `t` spacing `1/N₃`).
pub fn synthesize(f: &FourierSeq, dims: [usize; 3]) -> Result<GridFunction> {
    check_alias(f, dims)?;
    let [n1, n2, n3] = dims;
    // per-axis tables e^{i k x_j}
    let table = |n: usize, kmax: i64| -> Vec<Vec<Complex64>> {
        (-kmax..=kmax)
            .map(|k| (0..n).map(|j| Complex64::from_polar(1.0, 2.0 * PI * ((k * j as i64).rem_euclid(n as i64)) as f64 / n as f64)).collect())
            .collect()
    };
    let mk = f.max_component();
    let (t1, t2, t3) = (table(n1, mk[0]), table(n2, mk[1]), table(n3, mk[2]));
    let modes: Vec<(IVec3, Complex64)> = f.coeffs.iter().map(|(&k, &(a, b))| (k, Complex64::new(a, -b))).collect();
    let mut values = vec![0.0; n1 * n2 * n3];
    values.par_chunks_mut(n2 * n3).enumerate().for_each(|(j1, slab)| {
        for (k, c) in &modes {
            let e1 = t1[(k[0] + mk[0]) as usize][j1] * c;
            let r2 = &t2[(k[1] + mk[1]) as usize];
            let r3 = &t3[(k[2] + mk[2]) as usize];
            for j2 in 0..n2 {
                let e12 = e1 * r2[j2];
                let row = &mut slab[j2 * n3..(j2 + 1) * n3];
                for (j3, v) in row.iter_mut().enumerate() {
                    *v += (e12 * r3[j3]).re;
                }
            }
        }
    });
    GridFunction::new(dims.to_vec(), vec![2.0 * PI / n1 as f64, 2.0 * PI / n2 as f64, 1.0 / n3 as f64], values)
}

/// Discrete transform of grid samples back to a series, dropping `|f_k| <= drop_below`.
pub fn analyze(g: &GridFunction, r: u32, norm_cr: f64, drop_below: f64) -> Result<FourierSeq> {
    if g.dims.len() != 3 {
        bail!(Fourier, "analysis needs a 3-axis grid");
    }
    let (n1, n2, n3) = (g.dims[0], g.dims[1], g.dims[2]);
    let mut data: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    // last axis: contiguous rows
    let f3 = planner.plan_fft_forward(n3);
    for row in data.chunks_mut(n3) {
        f3.process(row);
    }
    let f2 = planner.plan_fft_forward(n2);
    let mut buf = vec![Complex64::new(0.0, 0.0); n2];
    for j1 in 0..n1 {
        for j3 in 0..n3 {
            for j2 in 0..n2 {
                buf[j2] = data[(j1 * n2 + j2) * n3 + j3];
            }
            f2.process(&mut buf);
            for j2 in 0..n2 {
                data[(j1 * n2 + j2) * n3 + j3] = buf[j2];
            }
        }
    }
    let f1 = planner.plan_fft_forward(n1);
    let mut buf = vec![Complex64::new(0.0, 0.0); n1];
    for j2 in 0..n2 {
        for j3 in 0..n3 {
            for j1 in 0..n1 {
                buf[j1] = data[(j1 * n2 + j2) * n3 + j3];
            }
            f1.process(&mut buf);
            for j1 in 0..n1 {
                data[(j1 * n2 + j2) * n3 + j3] = buf[j1];
            }
        }
    }
    let scale = 1.0 / (n1 * n2 * n3) as f64;
    let signed = |j: usize, n: usize| -> i64 {
        if 2 * j < n {
            j as i64
        } else {
            j as i64 - n as i64
        }
    };
    let mut out = FourierSeq::new(r, norm_cr);
    for j1 in 0..n1 {
        for j2 in 0..n2 {
            for j3 in 0..n3 {
                let k = [signed(j1, n1), signed(j2, n2), signed(j3, n3)];
                // Nyquist rows are ambiguous; skip them
                if (2 * j1 == n1) || (2 * j2 == n2) || (2 * j3 == n3) || !is_positive(k) {
                    continue;
                }
                let c = data[(j1 * n2 + j2) * n3 + j3] * scale;
                let (a, b) = if k == [0, 0, 0] { (c.re, 0.0) } else { (2.0 * c.re, -2.0 * c.im) };
                if FourierSeq::complex_abs(k, a, b) > drop_below {
                    out.insert(k, a, b);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub pass: bool,
    pub violator: Option<IVec3>,
}

impl Condition {
    fn from_violator(v: Option<IVec3>) -> Self {
        Condition { pass: v.is_none(), violator: v }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub c1: Condition,
    pub c2: Condition,
    pub c2_prime: Condition,
    pub lambda: i64,
    pub mu: i64,
}

/// Smallest `μ >= 1` with `|μ·e₂|∞ > l^m`.
pub fn mu_threshold(e2: IVec3, l_pow_m: i64) -> Result<i64> {
    let n = max_norm(e2);
    if n == 0 {
        bail!(Fourier, "e2 must be nonzero");
    }
    Ok(l_pow_m / n + 1)
}

/// Conditions on the support of `f` relative to the resonant lattice and its maximal reduction
/// `lmax = span{e₁, e₂}` (with `lmax.multipliers[0] = λ`).
pub fn check_conditions(f: &FourierSeq, lat: &Lattice, lmax: &Lattice, m: u32, l: u32) -> Result<ConditionReport> {
    if lmax.rank() != 2 || !lmax.is_maximal {
        bail!(Fourier, "maximal lattice must be a reduced rank-2 basis");
    }
    let lpm = (l as i64).checked_pow(m).ok_or_else(|| crate::Error::Fourier("l^m overflows".into()))?;
    let (e1, e2) = (lmax.basis[0], lmax.basis[1]);
    let lambda = lmax.multipliers[0];
    let mu = mu_threshold(e2, lpm)?;
    let lam_mu = Lattice::new(vec![e1.map(|x| x * lambda), e2.map(|x| x * mu)])?;
    let nonzero = |(k, &(a, b)): (&IVec3, &(f64, f64))| (a != 0.0 || b != 0.0).then_some(*k);
    let support: Vec<IVec3> = f.coeffs.iter().filter_map(nonzero).collect();
    let c1 = support.iter().find(|&&k| lmax.contains(k) && !lat.contains(k)).copied();
    let c2 = support
        .iter()
        .find(|&&k| k != [0, 0, 0] && max_norm(k) <= lpm && lmax.contains(k))
        .copied();
    let c2p = support.iter().find(|&&k| lat.contains(k) != lam_mu.contains(k)).copied();
    Ok(ConditionReport {
        c1: Condition::from_violator(c1),
        c2: Condition::from_violator(c2),
        c2_prime: Condition::from_violator(c2p),
        lambda,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonance::maximal_reduce;

    #[test]
    fn canonical_pairs() {
        let f = FourierSeq::new(8, 1.0).with([-1, 2, 0], 0.3, 0.4);
        assert_eq!(f.get([1, -2, 0]), (0.3, -0.4));
        assert_eq!(f.get([-1, 2, 0]), (0.3, 0.4));
        let x = [0.3, 1.1, 2.0];
        assert!((f.eval(x) - (0.3 * (-0.3f64 + 2.2).cos() + 0.4 * (-0.3f64 + 2.2).sin())).abs() < 1e-14);
    }

    #[test]
    fn pickup_examples() {
        let f = FourierSeq::new(8, 1e6).with([1, 0, -1], 0.5, 0.0).with([0, 1, 0], 0.3, 0.0);
        let l = Lattice::new(vec![[1, 0, -1]]).unwrap();
        let p = pickup(&f, &l);
        assert_eq!(p.len(), 1);
        assert_eq!(p.get([1, 0, -1]), (0.5, 0.0));
        assert_eq!(pickup(&f, &Lattice::full()), f);
        assert_eq!(pickup(&p, &l), p);
    }

    #[test]
    fn shear_examples() {
        let mut f = FourierSeq::new(8, 1e12);
        for j in 1..=4 {
            f.insert([5 * j, 0, -2 * j], 1.0 / j as f64, 0.0);
        }
        let l = Lattice::new(vec![[5, 0, -2]]).unwrap();
        let s = shear(&f, &l, 11.0).unwrap();
        assert_eq!(s.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![[15, 0, -6], [20, 0, -8]]);
        assert_eq!(shear(&f, &l, 0.0).unwrap(), pickup(&f, &l));
        assert!(shear(&f, &l, -1.0).is_err());
    }

    #[test]
    fn kappa3_matches_zeta_values() {
        let exact = 4.0 * PI * PI + PI.powi(4) / 45.0;
        let k = kappa3_estimate();
        assert!(k.partial < exact && exact <= k.value());
        assert!(k.value() - exact < 3e-3);
    }

    #[test]
    fn truncate_keeps_low_modes() {
        let f = FourierSeq::new(8, 1e3).with([10, 0, 0], 1e-13, 0.0);
        f.validate().unwrap();
        let (low, tail) = truncate(&f, 5.0).unwrap();
        assert!(low.is_empty());
        assert!((tail - kappa3() * 1e3 / 25.0).abs() < 1e-9);
        assert!(f.c2_mass() <= tail);
        let (low, _) = truncate(&f, 11.0).unwrap();
        assert_eq!(low, f);
        assert!(truncate(&FourierSeq::new(6, 1.0), 5.0).is_err());
    }

    #[test]
    fn single_cosine_grid() {
        let f = FourierSeq::new(8, 1e9).with([1, 0, 0], 1.0, 0.0);
        let g = synthesize(&f, [8, 4, 4]).unwrap();
        for flat in 0..g.len() {
            let c = g.coords(flat);
            assert!((g.values[flat] - c[0].cos()).abs() < 1e-14);
        }
        let z = synthesize(&FourierSeq::new(8, 1.0), [4, 4, 4]).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert!(synthesize(&f, [2, 4, 4]).is_err());
    }

    #[test]
    fn time_axis_convention() {
        let f = FourierSeq::new(8, 1e9).with([0, 0, 1], 0.0, 1.0);
        let g = synthesize(&f, [4, 4, 8]).unwrap();
        let i = g.index(&[0, 0, 2]);
        assert!((g.values[i] - 1.0).abs() < 1e-14); // sin(2π·¼)
    }

    #[test]
    fn mu_example() {
        assert_eq!(mu_threshold([0, 7, -3], 100).unwrap(), 15);
    }

    #[test]
    fn conditions_on_constructed_support() {
        let lat = Lattice::new(vec![[10, 0, -4], [0, 10, -7]]).unwrap();
        let lmax = maximal_reduce(&lat).unwrap();
        // λ = 2, e₂ = (0,10,-7), l^m = 10 → μ = 2
        let good = FourierSeq::new(8, 1e12).with([10, 0, -4], 1.0, 0.0).with([0, 20, -14], 0.5, 0.0);
        let r = check_conditions(&good, &lat, &lmax, 1, 10).unwrap();
        assert_eq!((r.lambda, r.mu), (2, 2));
        assert!(r.c1.pass && r.c2_prime.pass);
        let bad = good.clone().with([0, 10, -7], 0.1, 0.0);
        let r = check_conditions(&bad, &lat, &lmax, 1, 10).unwrap();
        assert!(!r.c2_prime.pass);
        assert_eq!(r.c2_prime.violator, Some([0, 10, -7]));
        assert!(!r.c2.pass);
        let off = good.clone().with([5, 0, -2], 0.1, 0.0);
        let r = check_conditions(&off, &lat, &lmax, 1, 10).unwrap();
        assert_eq!(r.c1.violator, Some([5, 0, -2]));
    }

    #[test]
    fn records_round_trip() {
        let f = FourierSeq::new(9, 2.5).with([1, -2, 3], 0.25, -0.5).with([0, 0, 0], 1.0, 0.0);
        let g = FourierSeq::from_records(&f.to_records()).unwrap();
        assert_eq!(f, g);
        assert!(FourierSeq::from_records("1 2 3 4 5").is_err());
    }

    #[test]
    fn random_series_respect_their_certificate() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_admissible(&mut rng, 8, 1.0, 30, 40);
            assert_eq!(f.len(), 40);
            f.validate().unwrap();
            for k in [10.0, 20.0] {
                let (low, bound) = truncate(&f, k).unwrap();
                assert!(f.c2_mass() - low.c2_mass() <= bound);
            }
        }
    }
}
