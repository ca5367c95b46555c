//! Rotating periodic orbits near the separatrix energy, their period law and section maps.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::hyperbolic::{hyperbolic_fixed_point, HyperbolicData};
use super::integrate::{field, flow_with_tangent, integrate, integrate_to_event, State};
use super::system::MechanicalSystem;
use crate::error::{bail, Error, Result};

pub type Mat2 = [[f64; 2]; 2];

/// Section `{X_axis = c}` of the energy level `H = E`; points are `(X_other, Y_other)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Section {
    pub axis: usize,
    pub value: f64,
    pub energy: f64,
}

impl Section {
    fn other(&self) -> usize {
        1 - self.axis
    }

    /// Lift a section point to phase space, choosing the momentum that moves `X_axis` forward.
    pub fn lift(&self, sys: &MechanicalSystem, u: [f64; 2]) -> Result<State> {
        let (ax, ot) = (self.axis, self.other());
        let mut x = [0.0; 2];
        x[ax] = self.value;
        x[ot] = u[0];
        // ½a_ax,ax p² + (a_ax,ot q + d_ax) p + (½a_ot,ot q² + d_ot q + V − E) = 0 with q = Y_other
        let a = &sys.a;
        let q = u[1];
        let c2 = 0.5 * a[ax][ax];
        let c1 = a[ax][ot] * q + sys.drift[ax];
        let c0 = 0.5 * a[ot][ot] * q * q + sys.drift[ot] * q + sys.potential(x) - self.energy;
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            bail!(Dynamics, "section point {u:?} is not on the energy level {}", self.energy);
        }
        let p = (-c1 + disc.sqrt()) / (2.0 * c2);
        let mut y = [0.0; 2];
        y[ax] = p;
        y[ot] = q;
        let z = State::new(x, y);
        let v = sys.velocity(y);
        if !(v[ax] > 0.0) {
            bail!(Dynamics, "section {} = {} is not transverse at {u:?}", ["X1", "X2"][ax], self.value);
        }
        Ok(z)
    }

    fn coords(&self, z: &State) -> [f64; 2] {
        [z.x[self.other()], z.y[self.other()]]
    }
}

/// Passage between two sections of the same energy level.
#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    pub start: State,
    pub end: State,
    pub time: f64,
    /// Derivative of the section-to-section map in `(X_other, Y_other)` coordinates.
    pub derivative: Mat2,
}

pub fn fly(sys: &MechanicalSystem, from: Section, to: Section, u: [f64; 2], dt: f64, t_max: f64) -> Result<Flight> {
    if !sys.is_autonomous() {
        bail!(Dynamics, "section maps need an autonomous system");
    }
    let start = from.lift(sys, u)?;
    let (ax, ot) = (from.axis, from.other());
    let target = to.value;
    let Some(c) = integrate_to_event(sys, start, dt, t_max, &|z: &State| z.x[ax] - target, true, true)? else {
        bail!(Dynamics, "no return to the section {} = {target} within t = {t_max}", ["X1", "X2"][ax]);
    };
    let m = c.tangent.unwrap();
    // tangent vectors of the source section inside the energy level
    let xs = start.x;
    let gv = sys.grad_potential(xs, 0.0);
    let vel = sys.velocity(start.y);
    let mut basis = [[0.0; 4]; 2];
    for (k, b) in basis.iter_mut().enumerate() {
        // k = 0: δX_other, k = 1: δY_other; δY_axis keeps H fixed
        let (dh, idx) = if k == 0 { (gv[ot], ot) } else { (vel[ot], 2 + ot) };
        b[idx] = 1.0;
        b[2 + ax] = -dh / vel[ax];
    }
    let z1 = c.state;
    let f = field(sys, [z1.x[0], z1.x[1], z1.y[0], z1.y[1]], z1.t);
    let mut d = [[0.0; 2]; 2];
    for k in 0..2 {
        let w: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| m[i][j] * basis[k][j]).sum());
        // slide along the flow back onto the target section
        let s = w[ax] / f[ax];
        let w: [f64; 4] = std::array::from_fn(|i| w[i] - s * f[i]);
        d[0][k] = w[ot];
        d[1][k] = w[2 + ot];
    }
    Ok(Flight { start, end: z1, time: z1.t - start.t, derivative: d })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub energy: f64,
    /// Intersection with `{X_axis = π}` in section coordinates.
    pub section_point: [f64; 2],
    pub period: f64,
    pub monodromy: Mat2,
    pub closure: f64,
}

/// Rotating orbit of energy `energy` that winds once in `X_axis` and stays near the fixed point
/// in the other degree of freedom.
///
/// Newton on the return map is tried first. Its basin shrinks like the inverse of the map's
/// expansion, so when it fails the orbit is continued from the uncoupled system by multiple
/// shooting, which stays well conditioned near the separatrix.
pub fn periodic_orbit(sys: &MechanicalSystem, h: &HyperbolicData, energy: f64, axis: usize, dt: f64) -> Result<PeriodicOrbit> {
    match return_map_orbit(sys, h, energy, axis, dt) {
        Ok(o) => Ok(o),
        Err(first) if sys.eps != 0.0 && sys.is_autonomous() => continued_orbit(sys, h, energy, axis, dt).map_err(|e| {
            let text = |e: Error| match e {
                Error::Dynamics(m) => m,
                other => other.to_string(),
            };
            Error::Dynamics(format!("{}; continuation from the uncoupled system failed: {}", text(first), text(e)))
        }),
        Err(e) => Err(e),
    }
}

fn return_map_orbit(sys: &MechanicalSystem, h: &HyperbolicData, energy: f64, axis: usize, dt: f64) -> Result<PeriodicOrbit> {
    let base = h.fixed_point[axis];
    let from = Section { axis, value: base + PI, energy };
    let to = Section { axis, value: base + 3.0 * PI, energy };
    let mut u = [h.fixed_point[1 - axis], 0.0];
    let t_max = 200.0 + 50.0 / h.lambda2 * (1.0 / energy).ln().max(1.0);
    for _ in 0..30 {
        let fl = fly(sys, from, to, u, dt, t_max)?;
        let p = to.coords(&fl.end);
        let r = [p[0] - u[0], p[1] - u[1]];
        let closure = r[0].hypot(r[1]);
        if closure < 1e-11 {
            return Ok(PeriodicOrbit { energy, section_point: u, period: fl.time, monodromy: fl.derivative, closure });
        }
        let j = [[fl.derivative[0][0] - 1.0, fl.derivative[0][1]], [fl.derivative[1][0], fl.derivative[1][1] - 1.0]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            bail!(Dynamics, "singular return-map Jacobian at E = {energy}");
        }
        let du = [(j[1][1] * r[0] - j[0][1] * r[1]) / det, (-j[1][0] * r[0] + j[0][0] * r[1]) / det];
        u = [u[0] - du[0], u[1] - du[1]];
    }
    bail!(Dynamics, "periodic orbit at E = {energy} did not close")
}

/// Nodes of a multiple-shooting discretization: `nodes[i]` flows to `nodes[i + 1]` in
/// `period / n`, and the last node flows to the first shifted by `2π` in `X_axis`.
struct Shooting {
    nodes: Vec<[f64; 4]>,
    period: f64,
}

fn shooting_residual(sys: &MechanicalSystem, s: &Shooting, axis: usize, energy: f64, phase: f64, dt: f64, jac: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    let n = s.nodes.len();
    let tau = s.period / n as f64;
    let unknowns = 4 * n + 1;
    let mut r = vec![0.0; 4 * n + 2];
    let mut j = jac.then(|| DMatrix::zeros(4 * n + 2, unknowns));
    for i in 0..n {
        let z = s.nodes[i];
        let (end, m) = flow_with_tangent(sys, State::new([z[0], z[1]], [z[2], z[3]]), tau, dt)?;
        let mut next = s.nodes[(i + 1) % n];
        if i + 1 == n {
            next[axis] += 2.0 * PI;
        }
        let e = end.as_array();
        let f = field(sys, e, 0.0);
        for k in 0..4 {
            r[4 * i + k] = e[k] - next[k];
            if let Some(j) = j.as_mut() {
                for l in 0..4 {
                    j[(4 * i + k, 4 * i + l)] += m[k][l];
                }
                j[(4 * i + k, 4 * ((i + 1) % n) + k)] -= 1.0;
                j[(4 * i + k, 4 * n)] = f[k] / n as f64;
            }
        }
    }
    let z0 = s.nodes[0];
    r[4 * n] = sys.energy([z0[0], z0[1]], [z0[2], z0[3]]) - energy;
    r[4 * n + 1] = z0[axis] - phase;
    if let Some(j) = j.as_mut() {
        let g = sys.grad_potential([z0[0], z0[1]], 0.0);
        let v = sys.velocity([z0[2], z0[3]]);
        for (k, d) in [g[0], g[1], v[0], v[1]].into_iter().enumerate() {
            j[(4 * n, k)] = d;
        }
        j[(4 * n + 1, axis)] = 1.0;
    }
    Ok((r, j))
}

/// Gauss–Newton on the overdetermined shooting system (energy conservation makes one equation
/// redundant), with step halving.
fn solve_shooting(sys: &MechanicalSystem, mut s: Shooting, axis: usize, energy: f64, phase: f64, dt: f64) -> Result<(Shooting, f64)> {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut r, mut j) = shooting_residual(sys, &s, axis, energy, phase, dt, true)?;
    for _ in 0..40 {
        let res = norm(&r);
        if res < 1e-11 {
            return Ok((s, res));
        }
        let jm = j.take().unwrap();
        let rhs = DVector::from_column_slice(&r);
        let step = jm.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Dynamics(e.to_string()))?;
        let mut lambda = 1.0;
        loop {
            let n = s.nodes.len();
            let trial = Shooting {
                nodes: (0..n).map(|i| std::array::from_fn(|k| s.nodes[i][k] - lambda * step[4 * i + k])).collect(),
                period: s.period - lambda * step[4 * n],
            };
            let ok = trial.period > 0.0;
            if ok {
                if let Ok((rt, _)) = shooting_residual(sys, &trial, axis, energy, phase, dt, false) {
                    if norm(&rt) < res {
                        s = trial;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                bail!(Dynamics, "shooting stalled at residual {res:.3e}");
            }
        }
        (r, j) = shooting_residual(sys, &s, axis, energy, phase, dt, true)?;
    }
    let res = norm(&r);
    if res < 1e-9 {
        return Ok((s, res));
    }
    bail!(Dynamics, "shooting did not converge, residual {res:.3e}")
}

fn continued_orbit(sys: &MechanicalSystem, h: &HyperbolicData, energy: f64, axis: usize, dt: f64) -> Result<PeriodicOrbit> {
    let offset = energy - h.max_value;
    let scaled = |s: f64| MechanicalSystem { eps: s * sys.eps, ..sys.clone() };
    let base = scaled(0.0);
    let h0 = hyperbolic_fixed_point(&base, h.local_radius)?;
    let start = return_map_orbit(&base, &h0, h0.max_value + offset, axis, dt)?;
    let from = Section { axis, value: h0.fixed_point[axis] + PI, energy: h0.max_value + offset };
    let z = from.lift(&base, start.section_point)?;
    let n = ((2.0 * h.lambda1 * start.period).ceil() as usize).max(16);
    let traj = integrate(&base, z, start.period, start.period / (n as f64 * (start.period / (n as f64 * dt)).ceil()), 1)?;
    let stride = (traj.len() - 1) / n;
    let nodes = (0..n).map(|i| {
        let (x, y) = traj.states[i * stride];
        [x[0], x[1], y[0], y[1]]
    });
    let mut s = Shooting { nodes: nodes.collect(), period: start.period };
    let steps = 10;
    let mut residual = 0.0;
    for k in 1..=steps {
        let sk = scaled(k as f64 / steps as f64);
        let hk = if k == steps { h.clone() } else { hyperbolic_fixed_point(&sk, h.local_radius)? };
        let phase = hk.fixed_point[axis] + PI;
        (s, residual) = solve_shooting(&sk, s, axis, hk.max_value + offset, phase, dt)?;
    }
    let z0 = s.nodes[0];
    let ot = 1 - axis;
    let section_point = [z0[ot], z0[2 + ot]];
    let from = Section { axis, value: h.fixed_point[axis] + PI, energy };
    let to = Section { axis, value: h.fixed_point[axis] + 3.0 * PI, energy };
    let t_max = 200.0 + 50.0 / h.lambda2 * (1.0 / offset).ln().max(1.0);
    let fl = fly(sys, from, to, section_point, dt, t_max)?;
    Ok(PeriodicOrbit { energy, section_point, period: s.period, monodromy: fl.derivative, closure: residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodFit {
    pub slope: f64,
    pub tau: f64,
    pub points: Vec<(f64, f64)>,
    pub residuals: Vec<f64>,
    /// Per-point `T − slope·ln(1/E)`.
    pub offsets: Vec<f64>,
    pub failures: Vec<(f64, String)>,
}

impl PeriodFit {
    /// Spread of the per-point offsets relative to the fitted offset.
    pub fn offset_spread(&self) -> f64 {
        let (lo, hi) = self.offsets.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (hi - lo) / self.tau.abs()
    }
}

/// Least squares `y ≈ a·x + b`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Periods of the orbits rotating in `X₂`, fitted as `T = a·ln(1/E) + b`.
pub fn period_law(sys: &MechanicalSystem, h: &HyperbolicData, energies: &[f64], dt: f64) -> Result<PeriodFit> {
    let mut points = vec![];
    let mut failures = vec![];
    for &e in energies {
        if !(e > 0.0) {
            failures.push((e, "energy must be positive".to_string()));
            continue;
        }
        match periodic_orbit(sys, h, h.max_value + e, 1, dt) {
            Ok(o) => points.push(((1.0 / e).ln(), o.period)),
            Err(err) => failures.push((e, err.to_string())),
        }
    }
    if points.len() < 2 {
        bail!(Dynamics, "period law needs two closed orbits, got {}", points.len());
    }
    let (slope, tau) = linear_fit(&points);
    let residuals = points.iter().map(|p| p.1 - slope * p.0 - tau).collect();
    let offsets = points.iter().map(|p| p.1 - slope * p.0).collect();
    Ok(PeriodFit { slope, tau, points, residuals, offsets, failures })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SectionMapData {
    pub derivative: Mat2,
    pub time: f64,
    pub expansion: f64,
    pub contraction: f64,
}

impl SectionMapData {
    fn new(derivative: Mat2, time: f64) -> Self {
        let (s1, s2) = singular_values(&derivative);
        SectionMapData { derivative, time, expansion: s1, contraction: s2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionReport {
    pub energy: f64,
    pub zeta: f64,
    /// `Σ⁺ → Σ⁻` around the outer loop.
    pub global: SectionMapData,
    /// `Σ⁻ → Σ⁺` past the fixed point.
    pub local: SectionMapData,
    pub composed: SectionMapData,
    pub z_minus: [f64; 2],
    pub z_plus: [f64; 2],
}

pub fn singular_values(m: &Mat2) -> (f64, f64) {
    let a = m[0][0].powi(2) + m[1][0].powi(2);
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let c = m[0][1].powi(2) + m[1][1].powi(2);
    let tr = a + c;
    let disc = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs();
    let s1 = (0.5 * (tr + disc)).sqrt();
    (s1, if s1 > 0.0 { det / s1 } else { 0.0 })
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j]))
}

/// Section maps of `γ_E` between `Σ^± = {X₂ = X₂* ± ζ}` (orbits rotating in `X₂`).
pub fn section_expansion_rates(sys: &MechanicalSystem, h: &HyperbolicData, energy: f64, zeta: f64, dt: f64) -> Result<ExpansionReport> {
    if !(zeta > 0.0 && zeta < PI) {
        bail!(Dynamics, "section offset must lie in (0, π)");
    }
    let e = h.max_value + energy;
    let orbit = periodic_orbit(sys, h, e, 1, dt)?;
    let c = h.fixed_point[1];
    let sec = |v: f64| Section { axis: 1, value: v, energy: e };
    let t_max = 200.0 + 50.0 / h.lambda2 * (1.0 / energy).ln().max(1.0);
    let to_minus = fly(sys, sec(c + PI), sec(c + 2.0 * PI - zeta), orbit.section_point, dt, t_max)?;
    let z_minus = [to_minus.end.x[0], to_minus.end.y[0]];
    let local = fly(sys, sec(c - zeta), sec(c + zeta), z_minus, dt, t_max)?;
    let z_plus = [local.end.x[0], local.end.y[0]];
    let global = fly(sys, sec(c + zeta), sec(c + 2.0 * PI - zeta), z_plus, dt, t_max)?;
    let composed = mat2_mul(&global.derivative, &local.derivative);
    Ok(ExpansionReport {
        energy,
        zeta,
        global: SectionMapData::new(global.derivative, global.time),
        local: SectionMapData::new(local.derivative, local.time),
        composed: SectionMapData::new(composed, local.time + global.time),
        z_minus,
        z_plus,
    })
}

/// Angle between the image of `v` under `m` and the direction `w`.
pub fn image_angle(m: &Mat2, v: [f64; 2], w: [f64; 2]) -> f64 {
    let iv = [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
    angle(iv, w)
}

pub fn angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let c = (a[0] * b[0] + a[1] * b[1]).abs() / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
    c.min(1.0).acos()
}
