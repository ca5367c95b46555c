//! Sampled check of the Gronwall estimate for the difference of two flows.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::integrate::{field, flow_with_tangent, State};
use super::system::MechanicalSystem;
use crate::error::{bail, Result};

/// Initial conditions: any angle, momenta in `[-y_max, y_max]²`, start times in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowDomain {
    pub y_max: f64,
    pub samples: usize,
    pub seed: u64,
    pub dt: f64,
}

impl Default for FlowDomain {
    fn default() -> Self {
        FlowDomain { y_max: 1.0, samples: 1000, seed: 7, dt: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GronwallReport {
    /// Largest `C²` size of the two Hamiltonians (vector-field Lipschitz constant) on the domain.
    pub a: f64,
    /// Largest `C¹` difference of the two vector fields on the domain.
    pub b: f64,
    pub t: f64,
    pub bound: f64,
    pub state_difference: f64,
    pub tangent_difference: f64,
    pub excluded: usize,
    pub used: usize,
    /// `bound / max(measured)`; infinite when the flows agree.
    pub slack: f64,
    pub pass: bool,
}

fn jacobian(sys: &MechanicalSystem, z: [f64; 4], t: f64) -> [[f64; 4]; 4] {
    let h = sys.hess_potential([z[0], z[1]], t);
    let mut m = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            m[i][2 + j] = sys.a[i][j];
            m[2 + i][j] = -h[i][j];
        }
    }
    m
}

fn spectral(m: &[[f64; 4]; 4]) -> f64 {
    let mm = nalgebra::Matrix4::from_fn(|i, j| m[i][j]);
    (mm.transpose() * mm).symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Measures `|φ_A^t − φ_B^t|` and `|Dφ_A^t − Dφ_B^t|` over sampled starts and compares them with
/// `(B/A)(e^{2At} − e^{At})`. Samples whose momenta leave `2·y_max` are excluded.
pub fn flow_difference_bound(sys_a: &MechanicalSystem, sys_b: &MechanicalSystem, t: f64, domain: FlowDomain) -> Result<GronwallReport> {
    if !(t > 0.0) || domain.samples == 0 {
        bail!(Dynamics, "flow comparison needs t > 0 and at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(domain.seed);
    let ym = domain.y_max;
    let draw = |rng: &mut ChaCha8Rng| -> ([f64; 4], f64) {
        (
            [rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), rng.gen_range(-ym..ym), rng.gen_range(-ym..ym)],
            rng.gen_range(0.0..1.0),
        )
    };
    // field sizes on a denser probe of the domain (momenta up to 2·y_max)
    let probes: Vec<([f64; 4], f64)> = (0..4 * domain.samples)
        .map(|_| {
            let (mut z, s) = draw(&mut rng);
            z[2] *= 2.0;
            z[3] *= 2.0;
            (z, s)
        })
        .collect();
    let (mut a, mut b0, mut b1) = (0.0f64, 0.0f64, 0.0f64);
    for (z, s) in &probes {
        let (ja, jb) = (jacobian(sys_a, *z, *s), jacobian(sys_b, *z, *s));
        a = a.max(spectral(&ja)).max(spectral(&jb));
        let (fa, fb) = (field(sys_a, *z, *s), field(sys_b, *z, *s));
        b0 = b0.max((0..4).map(|i| (fa[i] - fb[i]).powi(2)).sum::<f64>().sqrt());
        let d: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| ja[i][j] - jb[i][j]));
        b1 = b1.max(spectral(&d));
    }
    let b = b0 + b1;
    let starts: Vec<([f64; 4], f64)> = (0..domain.samples).map(|_| draw(&mut rng)).collect();
    let runs: Vec<Result<Option<(f64, f64)>>> = starts
        .par_iter()
        .map(|(z, s)| {
            let mut st = State::new([z[0], z[1]], [z[2], z[3]]);
            st.t = *s;
            let (za, ma) = flow_with_tangent(sys_a, st, t, domain.dt)?;
            let (zb, mb) = flow_with_tangent(sys_b, st, t, domain.dt)?;
            if za.y.iter().chain(&zb.y).any(|v| v.abs() > 2.0 * ym) {
                return Ok(None);
            }
            let dz = za.as_array().iter().zip(zb.as_array()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let dm: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| ma[i][j] - mb[i][j]));
            Ok(Some((dz, spectral(&dm))))
        })
        .collect();
    let (mut sd, mut td, mut excluded, mut used) = (0.0f64, 0.0f64, 0, 0);
    for r in runs {
        match r? {
            Some((dz, dm)) => {
                sd = sd.max(dz);
                td = td.max(dm);
                used += 1;
            }
            None => excluded += 1,
        }
    }
    let bound = if a > 0.0 { b / a * ((2.0 * a * t).exp() - (a * t).exp()) } else { b * t };
    let worst = sd.max(td);
    let slack = if worst > 0.0 { bound / worst } else { f64::INFINITY };
    Ok(GronwallReport { a, b, t, bound, state_difference: sd, tangent_difference: td, excluded, used, slack, pass: sd <= bound && td <= bound })
}

/// Whether `(2/λ₂)·ln ϵ^{−d} ≤ ln ϵ^{2d−1}`, the time window used for the inner cylinder.
pub fn time_window_holds(lambda2: f64, epsilon: f64, d: f64) -> (f64, f64, bool) {
    let lhs = 2.0 / lambda2 * (-d * epsilon.ln());
    let rhs = (2.0 * d - 1.0) * epsilon.ln();
    (lhs, rhs, lhs <= rhs)
}
