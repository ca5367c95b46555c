//! Melnikov function of a perturbation along the homoclinic family of an uncoupled pair of
//! pendulum-like factors, its flow invariance and its critical lines.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dynamics::MechanicalSystem;
use crate::error::{bail, Result};
use crate::normalform::TrigPoly;

const TABLE_STEP: f64 = 1e-3;
const QUAD_STEP: f64 = 1e-2;
// the stencil is consistent, so a wide step costs nothing in the rank test and keeps roundoff small
const HESSIAN_STEP: f64 = 2e-2;

/// Perturbation `H₁(X, Y)`.
pub type Perturbation<'a> = &'a (dyn Fn([f64; 2], [f64; 2]) -> f64 + Sync);

/// Separatrix `Γ(t)` of `a·Y²/2 + Z(X)` at energy 0 running from `0` to `2π·sign`, with `Γ(0) = π·sign`.
#[derive(Clone, Debug)]
pub struct Separatrix {
    pub sign: f64,
    pub a: f64,
    pub lambda: f64,
    z: TrigPoly,
    t_max: f64,
    xs: Vec<f64>,
}

impl Separatrix {
    pub fn new(z: &TrigPoly, a: f64, sign: f64) -> Result<Self> {
        let kappa = -z.d2(0.0);
        if !(kappa > 0.0) || z.eval(0.0).abs() > 1e-12 {
            bail!(Melnikov, "factor potential must have a nondegenerate maximum 0 at the origin");
        }
        let probe = (1..1000).map(|k| z.eval(2.0 * PI * k as f64 / 1000.0)).fold(f64::NEG_INFINITY, f64::max);
        if probe >= 0.0 {
            bail!(Melnikov, "factor potential must be negative away from the origin");
        }
        let lambda = (a * kappa).sqrt();
        let t_max = 40.0 / lambda;
        let n = (t_max / TABLE_STEP).ceil() as usize;
        let mut sep = Separatrix { sign, a, lambda, z: z.clone(), t_max: n as f64 * TABLE_STEP, xs: vec![0.0; 2 * n + 1] };
        sep.xs[n] = sign * PI;
        // dX/dt = sign·F(X) is attracting towards both ends, so RK4 is stable either way
        for dir in [1.0, -1.0] {
            let mut x = sign * PI;
            for k in 1..=n {
                let h = dir * TABLE_STEP;
                let k1 = sep.velocity(x);
                let k2 = sep.velocity(x + 0.5 * h * k1);
                let k3 = sep.velocity(x + 0.5 * h * k2);
                let k4 = sep.velocity(x + h * k3);
                x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                let idx = if dir > 0.0 { n + k } else { n - k };
                sep.xs[idx] = x;
            }
        }
        Ok(sep)
    }

    /// `Ẋ` on the separatrix as a function of the position.
    pub fn velocity(&self, x: f64) -> f64 {
        self.sign * (2.0 * self.a * (-self.z.eval(x)).max(0.0)).sqrt()
    }

    pub fn position(&self, t: f64) -> f64 {
        let n = (self.xs.len() - 1) / 2;
        let u = t / TABLE_STEP + n as f64;
        if u <= 0.0 {
            return self.xs[0];
        }
        if u >= (self.xs.len() - 1) as f64 {
            return self.xs[self.xs.len() - 1];
        }
        let i = u.floor() as usize;
        let s = u - i as f64;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (v0, v1) = (self.velocity(x0) * TABLE_STEP, self.velocity(x1) * TABLE_STEP);
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * x0 + (s3 - 2.0 * s2 + s) * v0 + (-2.0 * s3 + 3.0 * s2) * x1 + (s3 - s2) * v1
    }

    pub fn momentum(&self, t: f64) -> f64 {
        self.velocity(self.position(t)) / self.a
    }

    /// Time at which the separatrix passes `x`, for `x` strictly between the two ends.
    pub fn time_of(&self, x: f64) -> Result<f64> {
        let (lo, hi) = if self.sign > 0.0 { (0.0, 2.0 * PI) } else { (-2.0 * PI, 0.0) };
        if !(x > lo && x < hi) {
            bail!(Melnikov, "point {x} is not on the open separatrix");
        }
        let key = |v: f64| self.sign * v;
        let i = self.xs.partition_point(|&v| key(v) < key(x)).clamp(1, self.xs.len() - 1);
        let n = (self.xs.len() - 1) / 2;
        let mut t = (i as f64 - n as f64) * TABLE_STEP;
        for _ in 0..50 {
            let v = self.velocity(self.position(t));
            if v == 0.0 {
                break;
            }
            let dt = (self.position(t) - x) / v;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        Ok(t.clamp(-self.t_max, self.t_max))
    }
}

/// Homoclinic family of the class `(s₁, s₂)` with `sᵢ = ±1`: both factors on their separatrices.
#[derive(Clone, Debug)]
pub struct HomoclinicFamily {
    pub f1: Separatrix,
    pub f2: Separatrix,
}

impl HomoclinicFamily {
    pub fn new(sys: &MechanicalSystem, class: [i64; 2]) -> Result<Self> {
        if sys.a[0][1] != 0.0 {
            bail!(Melnikov, "the unperturbed system must be uncoupled (diagonal kinetic form)");
        }
        if class.iter().any(|c| c.abs() != 1) {
            bail!(Melnikov, "class must be (±1, ±1), got {class:?}");
        }
        Ok(HomoclinicFamily {
            f1: Separatrix::new(&sys.z1, sys.a[0][0], class[0] as f64)?,
            f2: Separatrix::new(&sys.z2, sys.a[1][1], class[1] as f64)?,
        })
    }

    fn lambda_min(&self) -> f64 {
        self.f1.lambda.min(self.f2.lambda)
    }

    /// `−∫ (H₁(γ(s)) − H₁(0, 0)) ds` along the orbit `(Γ₁(s + τ₁), Γ₂(s + τ₂))`, and a tail bound.
    pub fn melnikov_at(&self, h1: Perturbation, tau: [f64; 2]) -> Result<(f64, f64)> {
        let base = h1([0.0; 2], [0.0; 2]);
        let t_cut = 40.0 / self.lambda_min() + tau[0].abs().max(tau[1].abs());
        let n = (t_cut / QUAD_STEP).ceil() as i64;
        let g = |s: f64| {
            let (p, q) = (s + tau[0], s + tau[1]);
            h1([self.f1.position(p), self.f2.position(q)], [self.f1.momentum(p), self.f2.momentum(q)]) - base
        };
        let mut sum = 0.0;
        let mut peak: f64 = 0.0;
        for k in -n..=n {
            let v = g(k as f64 * QUAD_STEP);
            peak = peak.max(v.abs());
            sum += if k.abs() == n { 0.5 * v } else { v };
        }
        let ends = g(-(n as f64) * QUAD_STEP).abs() + g(n as f64 * QUAD_STEP).abs();
        let tail = ends / self.lambda_min();
        if ends > 1e-6 * peak.max(1e-300) && ends > 1e-12 {
            bail!(Melnikov, "integrand does not decay along the homoclinic (end value {ends:e}, peak {peak:e})");
        }
        Ok((-sum * QUAD_STEP, tail))
    }

    /// Flow times `(τ₁, τ₂)` of the point `X` on the family.
    pub fn times(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        Ok([self.f1.time_of(x[0])?, self.f2.time_of(x[1])?])
    }

    /// Derivatives along the factor flows, `∇_{H₀,ᵢ} = Ẋᵢ ∂/∂Xᵢ`.
    pub fn flow_speeds(&self, x: [f64; 2]) -> [f64; 2] {
        [self.f1.velocity(x[0]), self.f2.velocity(x[1])]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelnikovGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub n: [usize; 2],
}

impl MelnikovGrid {
    pub fn axis(&self, i: usize) -> Vec<f64> {
        let n = self.n[i].max(2);
        (0..n).map(|k| self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelnikovField {
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    /// `values[i·q.len() + j] = M(x[i], q[j])`.
    pub values: Vec<f64>,
    pub tail_cut: f64,
    pub tail_estimate: f64,
}

impl MelnikovField {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.q.len() + j]
    }

    pub fn span(&self) -> f64 {
        let (lo, hi) = self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        hi - lo
    }

    /// Whether the truncation tail is negligible next to the variation of the field.
    pub fn tail_certified(&self) -> bool {
        self.tail_estimate <= 1e-3 * self.span() || self.span() == 0.0 && self.tail_estimate == 0.0
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,q,M\n");
        for (i, x) in self.x.iter().enumerate() {
            for (j, q) in self.q.iter().enumerate() {
                let _ = writeln!(s, "{x:.9},{q:.9},{:.12e}", self.get(i, j));
            }
        }
        s
    }
}

pub fn melnikov_evaluate(family: &HomoclinicFamily, h1: Perturbation, grid: &MelnikovGrid) -> Result<MelnikovField> {
    let (xs, qs) = (grid.axis(0), grid.axis(1));
    let pts: Vec<(f64, f64)> = xs.iter().flat_map(|&x| qs.iter().map(move |&q| (x, q))).collect();
    let out: Vec<(f64, f64, f64)> = pts
        .par_iter()
        .map(|&(x, q)| {
            let tau = family.times([x, q])?;
            let (m, tail) = family.melnikov_at(h1, tau)?;
            Ok((m, tail, tau[0].abs().max(tau[1].abs())))
        })
        .collect::<Result<_>>()?;
    let tail = out.iter().map(|o| o.1).fold(0.0, f64::max);
    let reach = out.iter().map(|o| o.2).fold(0.0, f64::max);
    Ok(MelnikovField {
        x: xs,
        q: qs,
        values: out.iter().map(|o| o.0).collect(),
        tail_cut: 40.0 / family.lambda_min() + reach,
        tail_estimate: tail,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    /// `max |∇_{H₀,₁}M + ∇_{H₀,₂}M|` over the interior, by central differences.
    pub residual: f64,
    /// The same defect relative to `max |∇_{H₀,₁}M|`.
    pub antisymmetry: f64,
}

pub fn check_flow_invariance(field: &MelnikovField, family: &HomoclinicFamily) -> InvarianceReport {
    let (nx, nq) = (field.x.len(), field.q.len());
    let (mut res, mut scale) = (0.0f64, 0.0f64);
    for i in 1..nx.saturating_sub(1) {
        for j in 1..nq.saturating_sub(1) {
            let sp = family.flow_speeds([field.x[i], field.q[j]]);
            let d1 = sp[0] * (field.get(i + 1, j) - field.get(i - 1, j)) / (field.x[i + 1] - field.x[i - 1]);
            let d2 = sp[1] * (field.get(i, j + 1) - field.get(i, j - 1)) / (field.q[j + 1] - field.q[j - 1]);
            res = res.max((d1 + d2).abs());
            scale = scale.max(d1.abs());
        }
    }
    InvarianceReport { residual: res, antisymmetry: if scale > 0.0 { res / scale } else { 0.0 } }
}

/// Hessian `(∇_{H₀,ᵢ}∇_{H₀,ⱼ}M)` in flow-time coordinates, by a stencil of step `2δ` in every direction.
pub fn flow_hessian(family: &HomoclinicFamily, h1: Perturbation, tau: [f64; 2], delta: f64) -> Result<[[f64; 2]; 2]> {
    let m = |a: f64, b: f64| family.melnikov_at(h1, [tau[0] + a, tau[1] + b]).map(|r| r.0);
    let c = m(0.0, 0.0)?;
    let d2 = 4.0 * delta * delta;
    let h11 = (m(2.0 * delta, 0.0)? - 2.0 * c + m(-2.0 * delta, 0.0)?) / d2;
    let h22 = (m(0.0, 2.0 * delta)? - 2.0 * c + m(0.0, -2.0 * delta)?) / d2;
    let h12 = (m(delta, delta)? - m(delta, -delta)? - m(-delta, delta)? + m(-delta, -delta)?) / d2;
    Ok([[h11, h12], [h12, h22]])
}

fn singular_values(m: &[[f64; 2]; 2]) -> (f64, f64) {
    let t = nalgebra::Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let sv = t.singular_values();
    (sv[0].max(sv[1]), sv[0].min(sv[1]))
}

pub fn numeric_rank(m: &[[f64; 2]; 2], scale: f64) -> usize {
    let (s1, s2) = singular_values(m);
    let thr = 1e-8 * scale;
    (s1 > thr) as usize + (s2 > thr) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub max_rank: usize,
    /// Largest `σ_min/σ_max` over the grid.
    pub worst_ratio: f64,
    pub samples: usize,
}

/// Pointwise rank of the flow Hessian over the grid nodes, threshold relative to the largest entry.
pub fn hessian_rank_scan(family: &HomoclinicFamily, h1: Perturbation, grid: &MelnikovGrid) -> Result<RankReport> {
    let (xs, qs) = (grid.axis(0), grid.axis(1));
    let pts: Vec<[f64; 2]> = xs.iter().flat_map(|&x| qs.iter().map(move |&q| [x, q])).collect();
    let hs: Vec<[[f64; 2]; 2]> = pts.par_iter().map(|&p| flow_hessian(family, h1, family.times(p)?, HESSIAN_STEP)).collect::<Result<_>>()?;
    let scale = hs.iter().flatten().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let max_rank = hs.iter().map(|h| numeric_rank(h, scale)).max().unwrap_or(0);
    let worst_ratio = hs
        .iter()
        .map(|h| {
            let (a, b) = singular_values(h);
            if a > 0.0 { b / a } else { 0.0 }
        })
        .fold(0.0, f64::max);
    Ok(RankReport { max_rank, worst_ratio, samples: hs.len() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPoint {
    /// Point of the critical flow line closest to the ball center.
    pub point: [f64; 2],
    /// Flow-time offset `τ₁ − τ₂` labelling the line.
    pub sigma: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
    pub hessian_rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalReport {
    pub points: Vec<CriticalPoint>,
    pub count: usize,
    pub u7_pass: bool,
}

/// Critical lines of `M` meeting the ball. `M` is constant along the unperturbed flow, so its
/// critical set is a union of flow lines, labelled by `σ = τ₁ − τ₂`.
pub fn critical_points(family: &HomoclinicFamily, h1: Perturbation, center: [f64; 2], radius: f64) -> Result<CriticalReport> {
    // range of σ realised inside the ball
    let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
    let k = 64;
    for a in 0..=k {
        for b in 0..=k {
            let p = [center[0] + radius * (2.0 * a as f64 / k as f64 - 1.0), center[1] + radius * (2.0 * b as f64 / k as f64 - 1.0)];
            if (p[0] - center[0]).hypot(p[1] - center[1]) > radius {
                continue;
            }
            if let Ok(t) = family.times(p) {
                smin = smin.min(t[0] - t[1]);
                smax = smax.max(t[0] - t[1]);
            }
        }
    }
    if !(smin <= smax) {
        bail!(Melnikov, "ball around {center:?} misses the homoclinic family");
    }
    let m = |s: f64| family.melnikov_at(h1, [s, 0.0]).map(|r| r.0);
    let dm = |s: f64| -> Result<f64> {
        let d = 1e-4;
        Ok((8.0 * (m(s + d)? - m(s - d)?) - (m(s + 2.0 * d)? - m(s - 2.0 * d)?)) / (12.0 * d))
    };
    let n = 256;
    let sig: Vec<f64> = (0..=n).map(|i| smin + (smax - smin) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = sig.par_iter().map(|&s| dm(s)).collect::<Result<_>>()?;
    let mscale = sig.iter().map(|&s| m(s).map(f64::abs)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let gscale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if gscale <= 1e-10 * (1.0 + mscale) {
        bail!(Melnikov, "degenerate field: the Melnikov function is constant near {center:?}");
    }
    let mut roots = vec![];
    for i in 0..n {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 {
            roots.push(sig[i]);
        } else if a * b < 0.0 {
            let (mut lo, mut hi, mut flo) = (sig[i], sig[i + 1], a);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = dm(mid)?;
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    if vals[n] == 0.0 {
        roots.push(sig[n]);
    }
    let mut points = vec![];
    for s in roots {
        // the line is s' ↦ (Γ₁(s' + σ), Γ₂(s')); take its point nearest to the center
        let line = |t: f64| [family.f1.position(t + s), family.f2.position(t)];
        let dist = |t: f64| {
            let p = line(t);
            (p[0] - center[0]).hypot(p[1] - center[1])
        };
        let (mut best, mut bd) = (0.0, f64::INFINITY);
        let span = 40.0 / family.lambda_min();
        let steps = 8000;
        for i in 0..=steps {
            let t = -span + 2.0 * span * i as f64 / steps as f64;
            let d = dist(t);
            if d < bd {
                bd = d;
                best = t;
            }
        }
        let (mut a, mut b) = (best - 2.0 * span / steps as f64, best + 2.0 * span / steps as f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if dist(c) < dist(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let t = 0.5 * (a + b);
        if dist(t) > radius {
            continue;
        }
        let p = line(t);
        let grad = dm(s)?;
        let hess = flow_hessian(family, h1, [t + s, t], HESSIAN_STEP)?;
        let hs = hess.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        points.push(CriticalPoint { point: p, sigma: s, gradient: [grad, -grad], hessian: hess, hessian_rank: numeric_rank(&hess, hs.max(1e-300)) });
    }
    let count = points.len();
    Ok(CriticalReport { points, count, u7_pass: count == 1 })
}
