//! Splitting integrators with action and tangent transport, and section crossings.

use std::fmt::Write as _;

use super::system::MechanicalSystem;
use crate::error::{bail, Result};

/// Phase point with the running time and the accumulated action `∫ Y·Ẋ dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub t: f64,
    pub action: f64,
}

impl State {
    pub fn new(x: [f64; 2], y: [f64; 2]) -> Self {
        State { x, y, t: 0.0, action: 0.0 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x[0], self.x[1], self.y[0], self.y[1]]
    }
}

/// Tangent map as a 4×4 matrix acting on `(δX₁, δX₂, δY₁, δY₂)`.
pub type Tangent = [[f64; 4]; 4];

pub fn identity4() -> Tangent {
    std::array::from_fn(|i| std::array::from_fn(|j| (i == j) as u8 as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Kick–drift–kick, second order.
    Verlet,
    /// Triple-jump composition of kick–drift–kick, fourth order.
    #[default]
    Yoshida4,
}

const CBRT2: f64 = 1.259_921_049_894_873_2;

fn substeps(scheme: Scheme) -> &'static [f64] {
    const W1: f64 = 1.0 / (2.0 - CBRT2);
    const W0: f64 = -CBRT2 / (2.0 - CBRT2);
    match scheme {
        Scheme::Verlet => &[1.0],
        Scheme::Yoshida4 => &[W1, W0, W1],
    }
}

fn kick(sys: &MechanicalSystem, z: &mut State, m: Option<&mut Tangent>, h: f64) {
    let g = sys.grad_potential(z.x, z.t);
    if let Some(m) = m {
        let hs = sys.hess_potential(z.x, z.t);
        for col in 0..4 {
            let (dx0, dx1) = (m[0][col], m[1][col]);
            m[2][col] -= h * (hs[0][0] * dx0 + hs[0][1] * dx1);
            m[3][col] -= h * (hs[1][0] * dx0 + hs[1][1] * dx1);
        }
    }
    z.y[0] -= h * g[0];
    z.y[1] -= h * g[1];
}

fn drift(sys: &MechanicalSystem, z: &mut State, m: Option<&mut Tangent>, h: f64) {
    let v = sys.velocity(z.y);
    if let Some(m) = m {
        for col in 0..4 {
            let (dy0, dy1) = (m[2][col], m[3][col]);
            m[0][col] += h * (sys.a[0][0] * dy0 + sys.a[0][1] * dy1);
            m[1][col] += h * (sys.a[1][0] * dy0 + sys.a[1][1] * dy1);
        }
    }
    z.action += h * (z.y[0] * v[0] + z.y[1] * v[1]);
    z.x[0] += h * v[0];
    z.x[1] += h * v[1];
    z.t += h;
}

/// One step of size `dt` (negative steps run the flow backward).
pub fn step(sys: &MechanicalSystem, z: &mut State, mut m: Option<&mut Tangent>, dt: f64, scheme: Scheme) {
    for &w in substeps(scheme) {
        let h = w * dt;
        kick(sys, z, m.as_deref_mut(), 0.5 * h);
        drift(sys, z, m.as_deref_mut(), h);
        kick(sys, z, m.as_deref_mut(), 0.5 * h);
    }
}

fn check_finite(z: &State) -> Result<()> {
    if !z.as_array().iter().all(|v| v.is_finite() && v.abs() < 1e12) {
        bail!(Dynamics, "trajectory overflowed at t = {}", z.t);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<([f64; 2], [f64; 2])>,
    pub energies: Vec<f64>,
    pub actions: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    /// Cubic Hermite interpolation of the phase point at time `t`.
    pub fn interpolate(&self, sys: &MechanicalSystem, t: f64) -> Option<[f64; 4]> {
        let n = self.times.len();
        if n < 2 {
            return None;
        }
        let forward = self.times[n - 1] >= self.times[0];
        let key = |s: f64| if forward { s } else { -s };
        let i = self.times.partition_point(|&s| key(s) <= key(t));
        if i == 0 || i >= n {
            return if t == self.times[n - 1] { Some(pack(self.states[n - 1])) } else { None };
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let h = t1 - t0;
        let u = (t - t0) / h;
        let (z0, z1) = (pack(self.states[i - 1]), pack(self.states[i]));
        let (f0, f1) = (field(sys, z0, t0), field(sys, z1, t1));
        let (h00, h10, h01, h11) = (
            2.0 * u.powi(3) - 3.0 * u * u + 1.0,
            u.powi(3) - 2.0 * u * u + u,
            -2.0 * u.powi(3) + 3.0 * u * u,
            u.powi(3) - u * u,
        );
        Some(std::array::from_fn(|k| h00 * z0[k] + h10 * h * f0[k] + h01 * z1[k] + h11 * h * f1[k]))
    }

    /// Columns `t, X1, X2, Y1, Y2, H`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,X1,X2,Y1,Y2,H\n");
        for i in 0..self.times.len() {
            let (x, y) = self.states[i];
            let _ = writeln!(s, "{:.9e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", self.times[i], x[0], x[1], y[0], y[1], self.energies[i]);
        }
        s
    }
}

fn pack(s: ([f64; 2], [f64; 2])) -> [f64; 4] {
    [s.0[0], s.0[1], s.1[0], s.1[1]]
}

/// Hamiltonian vector field at `(X, Y)` and time `t`.
pub fn field(sys: &MechanicalSystem, z: [f64; 4], t: f64) -> [f64; 4] {
    let v = sys.velocity([z[2], z[3]]);
    let g = sys.grad_potential([z[0], z[1]], t);
    [v[0], v[1], -g[0], -g[1]]
}

/// Integrate for `duration` (sign gives the direction), recording every `record_every` steps.
pub fn integrate(sys: &MechanicalSystem, z0: State, duration: f64, dt: f64, record_every: usize) -> Result<Trajectory> {
    if !(dt > 0.0) {
        bail!(Dynamics, "time step must be positive");
    }
    let n = (duration.abs() / dt).round() as usize;
    let h = if n == 0 { 0.0 } else { duration / n as f64 };
    let every = record_every.max(1);
    let mut z = z0;
    let mut traj = Trajectory { times: vec![], states: vec![], energies: vec![], actions: vec![] };
    let push = |z: &State, traj: &mut Trajectory| {
        traj.times.push(z.t);
        traj.states.push((z.x, z.y));
        traj.energies.push(sys.energy_at(z.x, z.y, z.t));
        traj.actions.push(z.action);
    };
    push(&z, &mut traj);
    for i in 1..=n {
        step(sys, &mut z, None, h, Scheme::Yoshida4);
        check_finite(&z)?;
        if i % every == 0 || i == n {
            push(&z, &mut traj);
        }
    }
    Ok(traj)
}

/// Flow for `duration` together with its tangent map.
pub fn flow_with_tangent(sys: &MechanicalSystem, z0: State, duration: f64, dt: f64) -> Result<(State, Tangent)> {
    let n = ((duration.abs() / dt).ceil() as usize).max(1);
    let h = duration / n as f64;
    let mut z = z0;
    let mut m = identity4();
    for _ in 0..n {
        step(sys, &mut z, Some(&mut m), h, Scheme::Yoshida4);
        check_finite(&z)?;
    }
    Ok((z, m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub state: State,
    pub tangent: Option<Tangent>,
}

/// Integrate with step `dt` (sign = direction) until `g` crosses zero with the sign of `rising`
/// (`g` goes from negative to positive when `rising`), or until `|t| > t_max`.
/// The crossing is located by shortening the last step to the root of `g` (Illinois iteration).
pub fn integrate_to_event(
    sys: &MechanicalSystem,
    z0: State,
    dt: f64,
    t_max: f64,
    g: &dyn Fn(&State) -> f64,
    rising: bool,
    with_tangent: bool,
) -> Result<Option<Crossing>> {
    integrate_to_event_or_escape(sys, z0, dt, t_max, g, rising, with_tangent, &|_| false)
}

/// As [`integrate_to_event`], giving up (with `None`) as soon as `escaped` holds.
#[allow(clippy::too_many_arguments)]
pub fn integrate_to_event_or_escape(
    sys: &MechanicalSystem,
    z0: State,
    dt: f64,
    t_max: f64,
    g: &dyn Fn(&State) -> f64,
    rising: bool,
    with_tangent: bool,
    escaped: &dyn Fn(&State) -> bool,
) -> Result<Option<Crossing>> {
    let sgn = if rising { 1.0 } else { -1.0 };
    let mut z = z0;
    let mut m = identity4();
    let t_start = z0.t;
    let mut g0 = sgn * g(&z);
    loop {
        let prev = z;
        let prev_m = m;
        step(sys, &mut z, with_tangent.then_some(&mut m), dt, Scheme::Yoshida4);
        check_finite(&z)?;
        let g1 = sgn * g(&z);
        if g0 < 0.0 && g1 >= 0.0 {
            // root of τ ↦ g(step(prev, τ)) in (0, dt]
            let eval = |tau: f64| {
                let mut w = prev;
                step(sys, &mut w, None, tau, Scheme::Yoshida4);
                sgn * g(&w)
            };
            let (mut a, mut fa, mut b, mut fb) = (0.0, g0, dt, g1);
            let mut side = 0i8;
            for _ in 0..100 {
                let c = (a * fb - b * fa) / (fb - fa);
                let fc = eval(c);
                if fc.abs() < 1e-15 || (b - a).abs() < 1e-15 * dt.abs() {
                    a = c;
                    b = c;
                    break;
                }
                if (fc < 0.0) == (fa < 0.0) {
                    a = c;
                    fa = fc;
                    if side == -1 {
                        fb *= 0.5;
                    }
                    side = -1;
                } else {
                    b = c;
                    fb = fc;
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                }
            }
            let tau = 0.5 * (a + b);
            let mut w = prev;
            let mut wm = prev_m;
            step(sys, &mut w, with_tangent.then_some(&mut wm), tau, Scheme::Yoshida4);
            return Ok(Some(Crossing { state: w, tangent: with_tangent.then_some(wm) }));
        }
        g0 = g1;
        if (z.t - t_start).abs() > t_max || escaped(&z) {
            return Ok(None);
        }
    }
}

pub fn mat4_mul(a: &Tangent, b: &Tangent) -> Tangent {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn mat4_vec(a: &Tangent, v: [f64; 4]) -> [f64; 4] {
    std::array::from_fn(|i| (0..4).map(|k| a[i][k] * v[k]).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrigPoly2;
    use crate::normalform::TrigPoly;

    fn harmonic() -> MechanicalSystem {
        // V = −(X₁² + X₂²)/2 as a pure quadratic is not a trig polynomial; use V = ½ω²X² via
        // a large-period cosine would be inexact, so test against the linearized pendulum flow
        // at tiny amplitude instead (see below) and against an oscillator built from A.
        let osc = TrigPoly::new(vec![(1, -1.0, 0.0)]);
        MechanicalSystem::new([[1.0, 0.0], [0.0, 1.0]], osc.clone(), osc, TrigPoly2::default(), 0.0).unwrap()
    }

    #[test]
    fn small_oscillation_matches_closed_form() {
        // V = −cos X ≈ −1 + X²/2 near 0: at amplitude 1e−4 the quartic correction is ~1e−8 relative
        let sys = harmonic();
        let amp = 1e-4;
        let traj = integrate(&sys, State::new([amp, 0.0], [0.0, 0.0]), 20.0 * std::f64::consts::PI, 1e-3, 100).unwrap();
        let mut err: f64 = 0.0;
        for (t, (x, _)) in traj.times.iter().zip(&traj.states) {
            err = err.max((x[0] - amp * t.cos()).abs());
        }
        // amplitude-dependent frequency shift: ω ≈ 1 − A²/16, phase error ≈ t·A²/16·A
        assert!(err <= 1e-8 * 1.0 + amp * amp * amp * 63.0 / 16.0, "{err}");
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = MechanicalSystem::pendulums(4.0, 1.0, TrigPoly2::default(), 0.0).unwrap();
        let traj = integrate(&sys, State::new([0.0; 2], [0.0; 2]), 10.0, 1e-2, 1).unwrap();
        assert!(traj.states.iter().all(|s| s.0 == [0.0; 2] && s.1 == [0.0; 2]));
    }

    #[test]
    fn pendulum_energy_drift() {
        let sys = MechanicalSystem::pendulums(1.0, 1.0, TrigPoly2::default(), 0.0).unwrap();
        let traj = integrate(&sys, State::new([1.0, 0.5], [0.3, -0.2]), 1000.0, 1e-3, 1000).unwrap();
        assert!(traj.energy_drift() <= 1e-6, "{}", traj.energy_drift());
    }

    #[test]
    fn tangent_matches_differences() {
        let sys = MechanicalSystem::pendulums(2.0, 1.0, TrigPoly2::new(vec![([1, 1], 0.2, 0.0)]), 0.5).unwrap();
        let z0 = State::new([0.4, -0.3], [0.1, 0.2]);
        let (_, m) = flow_with_tangent(&sys, z0, 2.0, 1e-3).unwrap();
        let h = 1e-6;
        for col in 0..4 {
            let mut zp = z0.as_array();
            let mut zm = zp;
            zp[col] += h;
            zm[col] -= h;
            let run = |z: [f64; 4]| flow_with_tangent(&sys, State::new([z[0], z[1]], [z[2], z[3]]), 2.0, 1e-3).unwrap().0.as_array();
            let (a, b) = (run(zp), run(zm));
            for row in 0..4 {
                assert!((m[row][col] - (a[row] - b[row]) / (2.0 * h)).abs() < 1e-6);
            }
        }
        // symplectic: Mᵀ J M = J
        let j = |u: [f64; 4], v: [f64; 4]| u[0] * v[2] + u[1] * v[3] - u[2] * v[0] - u[3] * v[1];
        for a in 0..4 {
            for b in 0..4 {
                let (u, v) = (std::array::from_fn(|i| m[i][a]), std::array::from_fn(|i| m[i][b]));
                let want = j(std::array::from_fn(|i| (i == a) as u8 as f64), std::array::from_fn(|i| (i == b) as u8 as f64));
                assert!((j(u, v) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn event_location_and_action() {
        let sys = MechanicalSystem::pendulums(1.0, 1.0, TrigPoly2::default(), 0.0).unwrap();
        // free rotation in X₂ far above the separatrix is nearly uniform
        let z0 = State::new([0.0, 0.0], [0.0, 10.0]);
        let c = integrate_to_event(&sys, z0, 1e-3, 100.0, &|z| z.x[1] - 1.0, true, false).unwrap().unwrap();
        assert!((c.state.x[1] - 1.0).abs() < 1e-12);
        // action equals ∫ Y₂ dX₂ = ∫ √(2(E − V)) dX₂ over [0, 1]
        let e = sys.energy(z0.x, z0.y);
        let n = 20_000;
        let quad: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                (2.0 * (e - sys.potential([0.0, x]))).sqrt() / n as f64
            })
            .sum();
        assert!((c.state.action - quad).abs() < 1e-8, "{} vs {}", c.state.action, quad);
        // Hermite dense output
        let traj = integrate(&sys, z0, 1.0, 1e-2, 1).unwrap();
        let mid = traj.interpolate(&sys, 0.55).unwrap();
        let direct = integrate(&sys, z0, 0.55, 1e-3, 1000).unwrap();
        let last = direct.states.last().unwrap();
        assert!((mid[1] - last.0[1]).abs() < 1e-6, "{mid:?} {last:?} {:?}", direct.times.last());
    }
}
