//! Splitting of the resonant part and the nondegeneracy conditions on its blocks.

use std::f64::consts::PI;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use super::extrema::{Extremum, TrigPoly};
use crate::error::{bail, Result};
use crate::fourier::FourierSeq;
use crate::resonance::{IVec3, Lattice};

/// Relative tolerance deciding ties between maximizers.
const TIE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ZSplit {
    pub z1: FourierSeq,
    pub z21: FourierSeq,
    pub z22: FourierSeq,
}

/// Integer coordinates of `k` in the basis `{b1, b2}`.
fn coords(basis: &Lattice, k: IVec3) -> Result<(i64, i64)> {
    let Some(c) = basis.coordinates(k) else {
        bail!(NormalForm, "mode {:?} lies outside the span of {:?}", k, basis.basis);
    };
    if c.iter().any(|x| !x.is_integer()) {
        bail!(NormalForm, "mode {:?} is not an integer combination of {:?}", k, basis.basis);
    }
    Ok((c[0].to_integer() as i64, c[1].to_integer() as i64))
}

/// Bin the modes of `z` by their coordinates in `{λe₁, μe₂}`.
pub fn split_z(z: &FourierSeq, lambda_e1: IVec3, mu_e2: IVec3) -> Result<ZSplit> {
    let basis = Lattice::new(vec![lambda_e1, mu_e2])?;
    let mut out = ZSplit { z1: z.filter(|_| false), z21: z.filter(|_| false), z22: z.filter(|_| false) };
    for (&k, &(a, b)) in z.iter() {
        let target = match coords(&basis, k)? {
            (_, 0) => &mut out.z1,
            (0, _) => &mut out.z21,
            _ => &mut out.z22,
        };
        target.insert(k, a, b);
    }
    Ok(out)
}

fn tie_tol(p: &TrigPoly) -> f64 {
    TIE_TOL * p.terms.iter().map(|t| t.1.hypot(t.2)).sum::<f64>().max(1e-300)
}

#[derive(Clone, Debug, PartialEq)]
pub struct U1U2Report {
    pub direction: IVec3,
    pub maximizers: Vec<Extremum>,
    pub minimizers: Vec<Extremum>,
    /// `|Z₁''|` at the best maximizer.
    pub max_curvature: f64,
    pub min_curvature: f64,
    pub eigen_bound: f64,
    pub degenerate: bool,
    pub u1_pass: bool,
    pub u2_pass: bool,
}

/// Unique nondegenerate maximizer (and minimizer) of the single-variable block, with the
/// curvature bound `|Z₁''| >= c·d^σ / l^{m(r+2)}` at the maximizer.
pub fn check_u1_u2(z1: &FourierSeq, d_m: f64, sigma: f64, m: u32, l: u32, r: f64, c: f64) -> Result<U1U2Report> {
    let (p, direction) = TrigPoly::from_series(z1)?;
    let tol = tie_tol(&p);
    let maximizers = p.global(true, tol);
    let minimizers = p.global(false, tol);
    let curv = |v: &[Extremum]| v.iter().map(|e| e.second.abs()).fold(f64::INFINITY, f64::min);
    let max_curvature = if maximizers.is_empty() { 0.0 } else { curv(&maximizers) };
    let min_curvature = if minimizers.is_empty() { 0.0 } else { curv(&minimizers) };
    let eigen_bound = c * d_m.powf(sigma) / (l as f64).powf(m as f64 * (r + 2.0));
    let floor = p.degeneracy_floor();
    let degenerate = max_curvature < floor || min_curvature < floor;
    Ok(U1U2Report {
        direction,
        u1_pass: maximizers.len() == 1 && max_curvature >= floor && max_curvature >= eigen_bound * (1.0 - 1e-12),
        u2_pass: minimizers.len() == 1 && min_curvature >= floor,
        maximizers,
        minimizers,
        max_curvature,
        min_curvature,
        eigen_bound,
        degenerate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct U3Report {
    pub max_count: usize,
    pub curvature: f64,
    pub c2_norm: f64,
    pub cap: f64,
    /// `c2_norm / cap`.
    pub ratio: f64,
    /// `½ <= c₆ < c₅/2`.
    pub constants_ok: bool,
    /// Curvature of `Z₁` at its maximizer, for comparison with the cap.
    pub z1_curvature: f64,
    pub pass: bool,
}

/// Unique nondegenerate maximizer of `Z₂₁` and the cap `‖Z₂₁‖_{C²} <= c₆ d*^σ / (μι)^{r+2}`.
#[allow(clippy::too_many_arguments)]
pub fn check_u3(z21: &FourierSeq, z1: &FourierSeq, d_star: f64, sigma: f64, mu_iota: f64, r: f64, c5: f64, c6: f64) -> Result<U3Report> {
    let (p, _) = TrigPoly::from_series(z21)?;
    let top = p.global(true, tie_tol(&p));
    let curvature = top.iter().map(|e| e.second.abs()).fold(f64::INFINITY, f64::min);
    let curvature = if top.is_empty() { 0.0 } else { curvature };
    let c2_norm = z21.c2_mass();
    let cap = c6 * d_star.powf(sigma) / mu_iota.powf(r + 2.0);
    let (p1, _) = TrigPoly::from_series(z1)?;
    let z1_top = p1.global(true, tie_tol(&p1));
    let z1_curvature = z1_top.first().map_or(0.0, |e| e.second.abs());
    let constants_ok = c6 >= 0.5 && c6 < c5 / 2.0;
    Ok(U3Report {
        max_count: top.len(),
        curvature,
        c2_norm,
        cap,
        ratio: c2_norm / cap,
        constants_ok,
        z1_curvature,
        pass: top.len() == 1 && curvature >= p.degeneracy_floor() && c2_norm <= cap * (1.0 + 1e-12) && constants_ok,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapReport {
    pub norm: f64,
    pub cap: f64,
    /// `log10(cap / norm)`.
    pub slack: f64,
    pub pass: bool,
}

/// `‖Z₂₂‖_{C²} ⋖ 1 / (𝕃 (l^m)^{r+2+η})`.
pub fn check_u4(z22: &FourierSeq, big_l: f64, l: u32, m: u32, r: f64, eta: f64, less_dot: f64) -> Result<CapReport> {
    if !(big_l > 0.0) {
        bail!(NormalForm, "the constant 𝕃 must be positive");
    }
    let norm = z22.c2_mass();
    let cap = 1.0 / (less_dot * big_l * (l as f64).powf(m as f64 * (r + 2.0 + eta)));
    Ok(CapReport { norm, cap, slack: (cap / norm).log10(), pass: norm <= cap * (1.0 + 1e-12) })
}

/// Average `Z₂` along `x₂ ↦ x₂ + ω₂* s`: keep the modes with zero `e₂` coordinate.
pub fn second_average(z2: &FourierSeq, e1: IVec3, e2: IVec3, omega2: &BigRational) -> Result<FourierSeq> {
    if omega2.is_zero() {
        bail!(NormalForm, "second frequency must be nonzero");
    }
    let basis = Lattice::new(vec![e1, e2])?;
    let mut out = z2.filter(|_| false);
    for (&k, &(a, b)) in z2.iter() {
        if coords(&basis, k)?.1 == 0 {
            out.insert(k, a, b);
        }
    }
    Ok(out)
}

/// Shift in `θ` that advances `⟨e₂, θ⟩` by `2π ω₂* s` and leaves `⟨e₁, θ⟩` fixed, per unit `s`.
pub fn second_flow_direction(e1: IVec3, e2: IVec3, omega2: &BigRational) -> [f64; 3] {
    let f = |v: IVec3| v.map(|x| x as f64);
    let (a, b) = (f(e1), f(e2));
    let cross = |u: [f64; 3], v: [f64; 3]| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let w = cross(cross(a, b), a);
    let s = w[0] * b[0] + w[1] * b[1] + w[2] * b[2];
    let rate = 2.0 * PI * omega2.to_f64().unwrap_or(f64::NAN);
    w.map(|x| x / s * rate)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationSample {
    pub lambda: f64,
    pub max_count: usize,
    pub argmax: f64,
    /// Smallest `|F''|` over the global maximizers.
    pub margin: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BifurcationReport {
    pub samples: Vec<BifurcationSample>,
    /// Parameter midpoints where the global maximizer jumps to another branch.
    pub switches: Vec<f64>,
    pub worst_count: usize,
    /// Consecutive samples that both carry two maximizers (a tie that persists).
    pub persistent_ties: usize,
    pub pass: bool,
}

fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Scan `λ ∈ [λ₀, λ₁]`: maximizer counts, nondegeneracy and branch switches of the global max.
pub fn check_bifurcation<F>(family: F, lambda0: f64, lambda1: f64, steps: usize) -> Result<BifurcationReport>
where
    F: Fn(f64) -> TrigPoly + Sync,
{
    if steps < 2 || !(lambda1 > lambda0) {
        bail!(NormalForm, "need at least two samples on a nonempty interval");
    }
    let samples: Vec<BifurcationSample> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let lambda = lambda0 + (lambda1 - lambda0) * i as f64 / (steps - 1) as f64;
            let p = family(lambda);
            let top = p.global(true, tie_tol(&p));
            let margin = top.iter().map(|e| e.second.abs()).fold(f64::INFINITY, f64::min);
            BifurcationSample {
                lambda,
                degenerate: !top.is_empty() && margin < p.degeneracy_floor(),
                max_count: top.len(),
                argmax: top.first().map_or(0.0, |e| e.x),
                margin,
            }
        })
        .collect();
    let step = (lambda1 - lambda0) / (steps - 1) as f64;
    let mut switches = Vec::new();
    let mut persistent_ties = 0;
    for w in samples.windows(2) {
        if w[0].max_count == 1 && w[1].max_count == 1 && circle_dist(w[0].argmax, w[1].argmax) > 0.3 {
            switches.push(w[0].lambda + 0.5 * step);
        }
        if w[0].max_count >= 2 && w[1].max_count >= 2 {
            persistent_ties += 1;
        }
    }
    let worst_count = samples.iter().map(|s| s.max_count).max().unwrap_or(0);
    let degenerate = samples.iter().any(|s| s.degenerate);
    Ok(BifurcationReport {
        pass: worst_count <= 2 && persistent_ties == 0 && !degenerate,
        samples,
        switches,
        worst_count,
        persistent_ties,
    })
}
