//! One averaging step around a rational frequency: resonant part, cohomological solution,
//! small-denominator margin and the index inequalities that make the step admissible.

mod checks;
mod extrema;

pub use checks::{
    check_bifurcation, check_u1_u2, check_u3, check_u4, second_average, second_flow_direction, split_z, BifurcationReport, BifurcationSample,
    CapReport, U1U2Report, U3Report, ZSplit,
};
pub use extrema::{Extremum, TrigPoly};

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{bail, Result};
use crate::fourier::{truncate, FourierSeq};
use crate::resonance::{max_norm, IVec3};

/// `⟨k, (ω, 1)⟩` computed exactly.
pub fn pairing(k: IVec3, omega: &[BigRational; 2]) -> BigRational {
    &omega[0] * BigInt::from(k[0]) + &omega[1] * BigInt::from(k[1]) + BigInt::from(k[2])
}

/// Period of the linear flow `(q + 2πωt, t)` on `T² × S¹`: lcm of the denominators.
pub fn flow_period(omega: &[BigRational; 2]) -> BigInt {
    omega[0].denom().lcm(omega[1].denom())
}

/// `T* = lcm(l^m, ι)`.
pub fn t_star(l_pow_m: &BigInt, iota: &BigInt) -> Result<BigInt> {
    if !l_pow_m.is_positive() || !iota.is_positive() {
        bail!(NormalForm, "period factors must be positive");
    }
    Ok(l_pow_m.lcm(iota))
}

/// Recover an exact rational from a float, refusing anything that is not within `1e−15`
/// (relative) of a fraction with denominator at most `max_den`.
pub fn rational_frequency(omega: [f64; 2], max_den: u64) -> Result<[BigRational; 2]> {
    let conv = |x: f64| -> Result<BigRational> {
        if !x.is_finite() {
            bail!(NormalForm, "frequency {x} is not finite");
        }
        // continued fraction convergents
        let (mut h0, mut h1, mut k0, mut k1) = (0i128, 1i128, 1i128, 0i128);
        let mut y = x;
        for _ in 0..64 {
            let a = y.floor();
            let ai = a as i128;
            let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
            if k2 > max_den as i128 {
                break;
            }
            (h0, h1, k0, k1) = (h1, h2, k1, k2);
            if ((h1 as f64 / k1 as f64) - x).abs() <= 1e-15 * x.abs().max(1.0) {
                return Ok(BigRational::new(BigInt::from(h1), BigInt::from(k1)));
            }
            let frac = y - a;
            if frac == 0.0 {
                break;
            }
            y = 1.0 / frac;
        }
        bail!(NormalForm, "frequency {x} is not rational with denominator <= {max_den}")
    };
    Ok([conv(omega[0])?, conv(omega[1])?])
}

/// Resonant part: the modes with `⟨k, ω̃⟩ = 0`.
pub fn resonant_average(f: &FourierSeq, omega: &[BigRational; 2]) -> Result<FourierSeq> {
    f.validate()?;
    Ok(f.filter(|k| pairing(k, omega).is_zero()))
}

/// Solve `∂_ω̃ W = rhs` mode by mode for `|k| <= cutoff`; `rhs` must carry no resonant modes there.
pub fn solve_cohomological(rhs: &FourierSeq, omega: &[BigRational; 2], cutoff: f64) -> Result<FourierSeq> {
    if !(cutoff >= 0.0) {
        bail!(NormalForm, "cutoff must be >= 0");
    }
    let mut w = FourierSeq::new(rhs.r, 0.0);
    let mut certificate: f64 = 0.0;
    for (&k, &(a, b)) in rhs.iter() {
        if max_norm(k) as f64 > cutoff {
            continue;
        }
        let p = pairing(k, omega);
        if p.is_zero() {
            if a != 0.0 || b != 0.0 {
                bail!(NormalForm, "mode {:?} is resonant and should sit in the averaged part", k);
            }
            continue;
        }
        let nu = 2.0 * PI * p.to_f64().unwrap_or(f64::NAN);
        w.insert(k, -b / nu, a / nu);
        certificate = certificate.max(1.0 / nu.abs());
    }
    w.norm_cr = rhs.norm_cr * certificate;
    Ok(w)
}

/// Series of `Σ v_j ∂_{θ_j} f`.
pub fn derivative(f: &FourierSeq, v: [f64; 3]) -> FourierSeq {
    let mut out = FourierSeq::new(f.r.saturating_sub(1), 0.0);
    for (&k, &(a, b)) in f.iter() {
        let nu = v[0] * k[0] as f64 + v[1] * k[1] as f64 + v[2] * k[2] as f64;
        out.insert(k, nu * b, -nu * a);
    }
    out
}

/// Derivative along the flow `(q + 2πωt, t)`; with `θ₃ = 2πt` this is `2π⟨k, ω̃⟩`.
pub fn flow_derivative(f: &FourierSeq, omega: &[BigRational; 2]) -> FourierSeq {
    let w = |q: &BigRational| 2.0 * PI * q.to_f64().unwrap_or(f64::NAN);
    derivative(f, [w(&omega[0]), w(&omega[1]), 2.0 * PI])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemainderBounds {
    /// Truncation tail above the cutoff.
    pub r1: f64,
    /// Second-order term `{W, f}` through the C² proxies.
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonantNormalForm {
    pub omega_star: [BigRational; 2],
    pub z: FourierSeq,
    pub w: FourierSeq,
    pub t_star: BigInt,
    pub remainder_bounds: RemainderBounds,
    pub sigma: f64,
    pub delta: f64,
    pub delta_plus: f64,
}

impl ResonantNormalForm {
    /// One averaging step of `f` at `ω*` with modes `|k| <= cutoff` kept.
    pub fn compute(f: &FourierSeq, omega: &[BigRational; 2], cutoff: f64, sigma: f64, delta: f64, delta_plus: f64) -> Result<Self> {
        let z = resonant_average(f, omega)?;
        let (low, r1) = truncate(f, cutoff.floor() + 1.0)?;
        let rhs = low.combine(1.0, &z.filter(|k| (max_norm(k) as f64) <= cutoff), -1.0);
        let w = solve_cohomological(&rhs, omega, cutoff)?;
        let r2 = w.c2_mass() * f.c2_mass();
        Ok(ResonantNormalForm {
            omega_star: omega.clone(),
            z,
            w,
            t_star: flow_period(omega),
            remainder_bounds: RemainderBounds { r1, r2 },
            sigma,
            delta,
            delta_plus,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginInput {
    pub l: u32,
    pub m: u32,
    /// Numerator of the vertical line `ω₁ = a_m / l^m`.
    pub a_m: i64,
    /// `ω₂` range of the segment.
    pub y_range: (f64, f64),
    pub delta: f64,
    pub delta_plus: f64,
    pub k_max: i64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    pub alpha: f64,
    pub measured_min: f64,
    pub worst_k: IVec3,
    pub samples_used: usize,
    pub admissible: bool,
    pub pass: bool,
}

/// Closed-form lower bound `√(δ₊² − δ²)/√(l^{2m} + a_m²) − K·δ`.
pub fn margin_alpha(l: u32, m: u32, a_m: i64, delta: f64, delta_plus: f64, k_max: f64) -> Result<f64> {
    if !(delta >= 0.0 && delta_plus > delta) {
        bail!(NormalForm, "need delta_plus > delta >= 0");
    }
    let lm = (l as f64).powi(m as i32);
    Ok((delta_plus * delta_plus - delta * delta).sqrt() / (lm * lm + (a_m as f64).powi(2)).sqrt() - k_max * delta)
}

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Margin `α` plus the smallest `|⟨k, ω̃⟩|` seen over nonresonant `|k| <= K` at frequencies
/// in the `δ`-tube around the vertical segment, outside the `δ₊`-balls around its resonances.
pub fn small_denominator_margin(inp: &MarginInput) -> Result<MarginReport> {
    let alpha = margin_alpha(inp.l, inp.m, inp.a_m, inp.delta, inp.delta_plus, inp.k_max as f64)?;
    if inp.k_max < 1 || inp.samples == 0 {
        bail!(NormalForm, "need k_max >= 1 and at least one sample");
    }
    let lm = (inp.l as i64).checked_pow(inp.m).ok_or_else(|| crate::Error::NormalForm("l^m overflows".into()))?;
    let x = inp.a_m as f64 / lm as f64;
    let kk = inp.k_max;
    let (y0, y1) = (inp.y_range.0.min(inp.y_range.1), inp.y_range.0.max(inp.y_range.1));
    let (dl, dp) = (inp.delta, inp.delta_plus);
    // resonance points on the line whose balls reach the tube
    let (lo, hi) = (y0 - dl - dp, y1 + dl + dp);
    let mut centers = Vec::new();
    for k2 in 1..=kk {
        for k1 in -kk..=kk {
            let c = -(k1 as f64) * x;
            let j_lo = ((c - hi * k2 as f64).ceil() as i64).max(-kk);
            let j_hi = ((c - lo * k2 as f64).floor() as i64).min(kk);
            for k3 in j_lo..=j_hi {
                centers.push((c - k3 as f64) / k2 as f64);
            }
        }
    }
    centers.sort_by(f64::total_cmp);
    centers.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let in_ball = |u: f64, y: f64| -> bool {
        let i = centers.partition_point(|&c| c < y);
        [i.wrapping_sub(1), i].iter().any(|&j| j < centers.len() && u * u + (y - centers[j]).powi(2) < dp * dp)
    };
    let points: Vec<(f64, f64)> = (1..=inp.samples * 8)
        .map(|i| (x + dl * (2.0 * halton(i, 2) - 1.0), y0 - dl + (y1 - y0 + 2.0 * dl) * halton(i, 3)))
        .filter(|&(w1, y)| !in_ball(w1 - x, y))
        .take(inp.samples)
        .collect();
    if points.is_empty() {
        bail!(NormalForm, "the resonance balls cover the whole tube");
    }
    let resonant = |k1: i64, k2: i64, k3: i64| k2 == 0 && k1 * inp.a_m + k3 * lm == 0;
    let best = points
        .par_iter()
        .map(|&(w1, w2)| {
            let mut best = (f64::INFINITY, [0i64; 3]);
            for k1 in -kk..=kk {
                for k2 in 0..=kk {
                    if k2 == 0 && k1 < 0 {
                        continue;
                    }
                    let s = k1 as f64 * w1 + k2 as f64 * w2;
                    let near = (-s).round() as i64;
                    for k3 in [near - 1, near, near + 1] {
                        if k3.abs() > kk || (k1 == 0 && k2 == 0 && k3 == 0) || resonant(k1, k2, k3) {
                            continue;
                        }
                        let v = (s + k3 as f64).abs();
                        if v < best.0 {
                            best = (v, [k1, k2, k3]);
                        }
                    }
                }
            }
            best
        })
        .reduce(|| (f64::INFINITY, [0; 3]), |a, b| if b.0 < a.0 { b } else { a });
    Ok(MarginReport {
        alpha,
        measured_min: best.0,
        worst_k: best.1,
        samples_used: points.len(),
        admissible: alpha > 0.0,
        pass: alpha > 0.0 && best.0 >= alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityParams {
    pub sigma: f64,
    pub r: f64,
    pub xi: f64,
    pub m: u32,
    pub l: u32,
    pub d_m: f64,
    pub delta: f64,
    pub delta_plus: f64,
    /// Factor standing for `≪`.
    pub much_less: f64,
    /// Factor standing for `⋖`.
    pub less_dot: f64,
}

impl AdmissibilityParams {
    pub fn new(sigma: f64, r: f64, xi: f64, m: u32, l: u32, d_m: f64, delta: f64, delta_plus: f64) -> Self {
        AdmissibilityParams { sigma, r, xi, m, l, d_m, delta, delta_plus, much_less: 100.0, less_dot: 1.0 }
    }
}

/// One inequality `lhs < rhs` (or `<=` for the scale lines). `slack` is `rhs − lhs` for index
/// lines and `log10(rhs/lhs)` for scale lines, so it is positive exactly when the line passes.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityLine {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub lines: Vec<InequalityLine>,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn line(&self, name: &str) -> Option<&InequalityLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    /// One line per inequality: `name lhs rhs slack pass`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            let _ = writeln!(s, "{} {:.6e} {:.6e} {:.6e} {}", l.name, l.lhs, l.rhs, l.slack, if l.pass { "pass" } else { "fail" });
        }
        s
    }
}

fn index_line(name: &'static str, lhs: f64, rhs: f64) -> InequalityLine {
    let slack = rhs - lhs;
    InequalityLine { name, lhs, rhs, slack, pass: slack > 0.0 }
}

fn scale_line(name: &'static str, lhs: f64, rhs: f64) -> InequalityLine {
    let slack = (rhs / lhs).log10();
    InequalityLine { name, lhs, rhs, slack, pass: lhs <= rhs }
}

/// Evaluate every index and scale inequality of the averaging step.
pub fn admissibility_report(p: &AdmissibilityParams) -> AdmissibilityReport {
    let AdmissibilityParams { sigma, r, xi, m, l, d_m, delta, delta_plus, much_less, less_dot } = *p;
    let lf = l as f64;
    let pw = |e: f64| lf.powf(-(m as f64) * e);
    let xi_rhs = if r > 6.0 { 8.0 / (r - 6.0) } else { f64::INFINITY };
    let lines = vec![
        index_line("sigma_gt_r_plus_2", r + 2.0, sigma),
        index_line("xi_gt_8_over_r_minus_6", xi_rhs, xi),
        index_line("sigma_gt_3r_4xi_15", 3.0 * r + 4.0 * xi + 15.0, sigma),
        index_line("delta_plus_window_nonempty", r + 4.0 + xi, (sigma - 7.0 - r - 2.0 * xi) / 2.0),
        scale_line("d_m_lower", 2f64.sqrt() / lf.powi(m as i32 + 1), d_m),
        scale_line("d_m_upper", d_m, 2f64.sqrt() / lf.powi(m as i32)),
        scale_line("delta_radius", much_less * delta, pw(r + 4.0 + xi)),
        scale_line("delta_plus_lower", much_less * pw((sigma - 7.0 - r - 2.0 * xi) / 2.0), delta_plus),
        scale_line("delta_plus_upper", much_less * delta_plus, pw(r + 4.0 + xi)),
        scale_line("delta_lower", less_dot * pw(sigma - 2.0 - xi) / delta_plus, delta),
        scale_line("delta_upper", less_dot * delta, pw(2.0 + xi) * delta_plus),
    ];
    AdmissibilityReport { lines }
}

/// Exponent `(σ−7−r−2ξ)/(2(σ+r+2))` of the smallest admissible `δ₊` as a power of the size of `Z`.
pub fn inf_delta_plus_exponent(sigma: f64, r: f64, xi: f64) -> f64 {
    (sigma - 7.0 - r - 2.0 * xi) / (2.0 * (sigma + r + 2.0))
}
