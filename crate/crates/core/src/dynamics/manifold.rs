//! Stable and unstable manifolds as graphs of generating functions, computed by characteristics,
//! and the homoclinic orbits they bound.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::hyperbolic::{local_linear_form, HyperbolicData};
use super::integrate::{integrate_to_event, integrate_to_event_or_escape, step, Scheme, State, Trajectory};
use super::periodic::linear_fit;
use super::system::MechanicalSystem;
use crate::error::{bail, Result};
use crate::grid::GridFunction;
use crate::normalform::TrigPoly;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Stable,
    Unstable,
}

/// Numerical knobs shared by the shooting routines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingOptions {
    pub dt: f64,
    /// Seed distance as a fraction of the local radius.
    pub seed_fraction: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        ShootingOptions { dt: 1e-3, seed_fraction: 1e-6 }
    }
}

/// One sheet of `W^{s,u}` of the fixed point lifted by `2π·lift·e_axis`, leaving it in the
/// direction `dir` along `X_axis`.
struct Branch<'a> {
    sys: &'a MechanicalSystem,
    which: Which,
    axis: usize,
    dir: f64,
    center: [f64; 2],
    main: [f64; 4],
    other: [f64; 4],
    sigma: [[f64; 2]; 2],
    rho: f64,
    dt: f64,
    t_max: f64,
}

/// Beyond this the seed leaves the region where the linear manifold is a good start.
const MAX_SEED_PARAMETER: f64 = 1e4;

#[derive(Clone, Copy, Debug)]
struct Hit {
    state: State,
    u: f64,
}

impl<'a> Branch<'a> {
    fn new(sys: &'a MechanicalSystem, h: &HyperbolicData, which: Which, axis: usize, dir: f64, lift: f64, opts: ShootingOptions) -> Self {
        let off = if which == Which::Stable { 2 } else { 0 };
        let (a, b) = (h.eigvecs[off], h.eigvecs[off + 1]);
        let (mut main, other) = if a[axis].abs() >= b[axis].abs() { (a, b) } else { (b, a) };
        if main[axis] * dir < 0.0 {
            main = main.map(|v| -v);
        }
        let mut center = h.fixed_point;
        center[axis] += 2.0 * PI * lift;
        let rho = opts.seed_fraction * h.local_radius;
        let t_max = 60.0 + 4.0 * (1.0 / rho).ln() / h.lambda2;
        Branch { sys, which, axis, dir, center, main, other, sigma: h.unstable_slope(), rho, dt: opts.dt, t_max }
    }

    fn seed(&self, u: f64) -> State {
        let d: [f64; 4] = std::array::from_fn(|i| self.rho * (self.main[i] + u * self.other[i]));
        let s = &self.sigma;
        let quad = 0.5 * (d[0] * (s[0][0] * d[0] + s[0][1] * d[1]) + d[1] * (s[1][0] * d[0] + s[1][1] * d[1]));
        let mut z = State::new([self.center[0] + d[0], self.center[1] + d[1]], [d[2], d[3]]);
        z.action = if self.which == Which::Unstable { quad } else { -quad };
        z
    }

    fn time_step(&self) -> f64 {
        if self.which == Which::Unstable { self.dt } else { -self.dt }
    }

    /// First crossing of `{X_axis = c}`, with the generating function value in `action`.
    fn hit(&self, c: f64, u: f64) -> Result<Option<Hit>> {
        let axis = self.axis;
        if u.abs() > MAX_SEED_PARAMETER {
            return Ok(None);
        }
        let ev = move |z: &State| z.x[axis] - c;
        let (o, x0) = (1 - axis, self.center[1 - axis]);
        // leaving the strip around the fixed point in the transverse direction counts as a miss
        let escaped = move |z: &State| (z.x[o] - x0).abs() > PI;
        let out = integrate_to_event_or_escape(self.sys, self.seed(u), self.time_step(), self.t_max, &ev, self.dir > 0.0, false, &escaped)?;
        Ok(out.map(|c| Hit { state: c.state, u }))
    }

    fn transverse(&self, hit: &Hit) -> f64 {
        hit.state.x[1 - self.axis]
    }

    /// Seed parameter whose characteristic crosses `{X_axis = c}` at transverse coordinate `target`.
    fn solve(&self, c: f64, target: f64, guess: Option<(f64, f64)>) -> Result<Hit> {
        let f = |u: f64| -> Result<Option<(f64, Hit)>> { Ok(self.hit(c, u)?.map(|h| (self.transverse(&h) - target, h))) };
        let (u0, mut du) = guess.unwrap_or((0.0, 1e-9));
        let Some((mut f0, mut h0)) = f(u0)? else {
            bail!(Dynamics, "characteristic from the seed misses the section at {c}");
        };
        let mut u0 = u0;
        if f0 == 0.0 {
            return Ok(h0);
        }
        // secant march until the root is bracketed
        let mut bracket = None;
        for _ in 0..200 {
            let u1 = u0 + du;
            match f(u1)? {
                None => du *= 0.5,
                Some((f1, h1)) => {
                    if f1 == 0.0 {
                        return Ok(h1);
                    }
                    if (f1 < 0.0) != (f0 < 0.0) {
                        bracket = Some(((u0, f0, h0), (u1, f1, h1)));
                        break;
                    }
                    let slope = (f1 - f0) / (u1 - u0);
                    let want = if slope != 0.0 && slope.is_finite() { -f1 / slope } else { 2.0 * du };
                    // Newton direction, growing at most fourfold per step
                    let next = want.clamp(-4.0 * du.abs(), 4.0 * du.abs());
                    u0 = u1;
                    f0 = f1;
                    h0 = h1;
                    du = next * 1.05;
                }
            }
        }
        let Some(((mut a, mut fa, mut ha), (mut b, mut fb, mut hb))) = bracket else {
            bail!(Dynamics, "no characteristic reaches transverse coordinate {target} on the section {c}");
        };
        let mut side = 0i8;
        for _ in 0..200 {
            if fa.abs() < 1e-13 {
                return Ok(ha);
            }
            if fb.abs() < 1e-13 || (b - a).abs() <= 1e-15 * a.abs().max(b.abs()) {
                return Ok(if fa.abs() < fb.abs() { ha } else { hb });
            }
            let mut m = (a * fb - b * fa) / (fb - fa);
            if !(m > a.min(b) && m < a.max(b)) {
                m = 0.5 * (a + b);
            }
            let Some((fm, hm)) = f(m)? else {
                bail!(Dynamics, "fold: characteristic lost between seed parameters {a:e} and {b:e} at ({c}, {target})");
            };
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
                ha = hm;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = m;
                fb = fm;
                hb = hm;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Ok(if fa.abs() < fb.abs() { ha } else { hb })
    }

    /// The full characteristic from the seed to the section crossing.
    fn characteristic(&self, c: f64, u: f64) -> Result<Vec<State>> {
        let mut z = self.seed(u);
        let mut out = vec![z];
        let dt = self.time_step();
        let end = self.hit(c, u)?.ok_or_else(|| crate::Error::Dynamics("characteristic misses the section".into()))?;
        let n = ((end.state.t - z.t) / dt).floor() as usize;
        for _ in 0..n {
            step(self.sys, &mut z, None, dt, Scheme::Yoshida4);
            out.push(z);
        }
        out.push(end.state);
        Ok(out)
    }
}

/// Region over which a manifold is written as a graph: rows are section values of `X_axis`,
/// columns the transverse coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDomain {
    pub axis: usize,
    /// Which lift of the fixed point the manifold belongs to (`0` or `±1` along the axis).
    pub lift: i64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldGraph {
    pub domain: GraphDomain,
    /// `S` on the `rows × cols` grid.
    pub s: GridFunction,
    /// `∂S/∂X_axis` and `∂S/∂X_other` (the momenta of the characteristics).
    pub ds_axis: GridFunction,
    pub ds_other: GridFunction,
    /// Largest `|H(X, ∇S) − E|` over the grid.
    pub hj_residual: f64,
}

fn grid(rows: usize, cols: usize, values: Vec<f64>) -> GridFunction {
    GridFunction::new(vec![rows, cols], vec![1.0, 1.0], values).expect("shape matches")
}

/// Generating function of `W^{s,u}` by characteristics. For `E = 0` this is the manifold of the
/// fixed point; for `E > 0` the manifold of the rotating orbit `γ_E`, available for uncoupled
/// systems as a product of factor separatrices.
pub fn manifold_graph(
    sys: &MechanicalSystem,
    h: &HyperbolicData,
    which: Which,
    energy: f64,
    domain: &GraphDomain,
    opts: ShootingOptions,
) -> Result<ManifoldGraph> {
    let (nr, nc) = (domain.rows.len(), domain.cols.len());
    if nr == 0 || nc == 0 || domain.axis > 1 {
        bail!(Dynamics, "empty graph domain");
    }
    let axis = domain.axis;
    let base = h.fixed_point[axis] + 2.0 * PI * domain.lift as f64;
    let dir = (domain.rows[0] - base).signum();
    if domain.rows.iter().any(|r| (r - base).signum() != dir || (r - base).abs() >= 2.0 * PI) {
        bail!(Dynamics, "graph rows must lie on one side of the fixed point within one period");
    }
    let mut s = vec![0.0; nr * nc];
    let mut da = vec![0.0; nr * nc];
    let mut dot = vec![0.0; nr * nc];
    if energy == 0.0 {
        let br = Branch::new(sys, h, which, axis, dir, domain.lift as f64, opts);
        let rows: Vec<Result<Vec<State>>> = domain
            .rows
            .par_iter()
            .map(|&c| {
                let mut out = vec![];
                let mut last: Option<(f64, f64)> = None;
                let mut guess = None;
                for &t in &domain.cols {
                    let hit = br.solve(c, t, guess)?;
                    if let Some((pt, pu)) = last {
                        // the seed parameter must move monotonically along a row
                        let prev_dir = guess.map(|g: (f64, f64)| g.1.signum()).unwrap_or(0.0);
                        let d = hit.u - pu;
                        if prev_dir != 0.0 && d.signum() != prev_dir && d != 0.0 {
                            bail!(Dynamics, "fold in the {which:?} manifold between X = {pt} and {t} on row {c}");
                        }
                    }
                    let step = last.map_or(1e-9, |(_, pu)| hit.u - pu);
                    guess = Some((hit.u, if step == 0.0 { 1e-9 } else { step }));
                    last = Some((t, hit.u));
                    out.push(hit.state);
                }
                Ok(out)
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (j, z) in row?.into_iter().enumerate() {
                s[i * nc + j] = z.action;
                da[i * nc + j] = z.y[axis];
                dot[i * nc + j] = z.y[1 - axis];
            }
        }
    } else {
        if !is_separable(sys) {
            bail!(Dynamics, "manifolds of γ_E for E > 0 need an uncoupled system");
        }
        let other = 1 - axis;
        let (zo, za) = if axis == 1 { (&sys.z1, &sys.z2) } else { (&sys.z2, &sys.z1) };
        let factor = factor_separatrix(zo, sys.a[other][other], &domain.cols, which, opts)?;
        let a = sys.a[axis][axis];
        for (i, &c) in domain.rows.iter().enumerate() {
            let rot = rotation_action(za, a, energy, base, c);
            let p = (2.0 * (energy - za.eval(c)) / a).sqrt() * dir;
            for j in 0..nc {
                s[i * nc + j] = factor[j].1 + rot;
                da[i * nc + j] = p;
                dot[i * nc + j] = factor[j].2;
            }
        }
    }
    let mut hj: f64 = 0.0;
    for i in 0..nr {
        for j in 0..nc {
            let mut x = [0.0; 2];
            x[axis] = domain.rows[i];
            x[1 - axis] = domain.cols[j];
            let mut y = [0.0; 2];
            y[axis] = da[i * nc + j];
            y[1 - axis] = dot[i * nc + j];
            hj = hj.max((sys.energy(x, y) - h.max_value - energy).abs());
        }
    }
    Ok(ManifoldGraph { domain: domain.clone(), s: grid(nr, nc, s), ds_axis: grid(nr, nc, da), ds_other: grid(nr, nc, dot), hj_residual: hj })
}

fn is_separable(sys: &MechanicalSystem) -> bool {
    (sys.eps == 0.0 || sys.z3.is_zero()) && sys.a[0][1] == 0.0 && sys.is_autonomous() && sys.drift == [0.0; 2]
}

/// `∫_{from}^{to} √(2(E − Z(x))/a) dx` by composite Gauss–Legendre quadrature.
fn rotation_action(z: &TrigPoly, a: f64, energy: f64, from: f64, to: f64) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let n = 2000;
    let hw = (to - from) / n as f64;
    (0..n)
        .map(|k| {
            let mid = from + (k as f64 + 0.5) * hw;
            NODES.iter().map(|(x, w)| w * (2.0 * (energy - z.eval(mid + 0.5 * hw * x)) / a).max(0.0).sqrt()).sum::<f64>() * 0.5 * hw
        })
        .sum()
}

/// Generating function of the separatrix of the one-degree-of-freedom factor
/// `a·Y²/2 + Z(X)` at its maximum `X = 0`: returns `(x, S, Y)` at each node.
pub fn factor_separatrix(z: &TrigPoly, a: f64, nodes: &[f64], which: Which, opts: ShootingOptions) -> Result<Vec<(f64, f64, f64)>> {
    let kappa = -z.d2(0.0);
    if !(kappa > 0.0) || z.d1(0.0).abs() > 1e-12 {
        bail!(Dynamics, "factor potential has no hyperbolic maximum at 0");
    }
    let lam = (a * kappa).sqrt();
    let slope = lam / a;
    let flat = TrigPoly::new(vec![]);
    let sys = MechanicalSystem::new([[a, 0.0], [0.0, 1.0]], z.clone(), flat, Default::default(), 0.0)?;
    let rho = opts.seed_fraction;
    let sgn = if which == Which::Unstable { 1.0 } else { -1.0 };
    let dt = sgn * opts.dt;
    let mut out: Vec<(f64, f64, f64)> = nodes.iter().map(|&x| (x, sgn * 0.5 * slope * x * x, sgn * slope * x)).collect();
    for side in [1.0, -1.0] {
        let mut idx: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i] * side > rho).collect();
        idx.sort_by(|&p, &q| (nodes[p] * side).total_cmp(&(nodes[q] * side)));
        let mut zst = State::new([side * rho, 0.0], [sgn * side * slope * rho, 0.0]);
        zst.action = sgn * 0.5 * slope * rho * rho;
        for i in idx {
            let target = nodes[i];
            let ev = move |w: &State| side * (w.x[0] - target);
            let t_max = 60.0 + 4.0 * (1.0 / rho).ln() / lam;
            let Some(c) = integrate_to_event(&sys, zst, dt, t_max, &ev, true, false)? else {
                bail!(Dynamics, "separatrix does not reach X = {target}");
            };
            zst = c.state;
            out[i] = (target, zst.action, zst.y[0]);
        }
    }
    Ok(out)
}

/// `S^u − S^s` across the torus `𝒯_{g,E}` of an uncoupled system, along the factor transverse to
/// the rotation axis, and its second difference at the torus with step `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusSplitting {
    pub axis: usize,
    pub nodes: Vec<f64>,
    pub difference: Vec<f64>,
    pub second_difference: f64,
    /// `2·√(a·(−Z″(0)))` for the transverse factor.
    pub expected: f64,
}

pub fn torus_splitting(sys: &MechanicalSystem, h: &HyperbolicData, axis: usize, energy: f64, step: f64, opts: ShootingOptions) -> Result<TorusSplitting> {
    if !is_separable(sys) {
        bail!(Dynamics, "torus splitting needs an uncoupled system");
    }
    let other = 1 - axis;
    let x0 = h.fixed_point[other];
    let nodes: Vec<f64> = (-4..=4).map(|k| x0 + k as f64 * 0.25 * step).collect();
    let dom = |c: f64| GraphDomain { axis, lift: 0, rows: vec![c], cols: nodes.clone() };
    let c = h.fixed_point[axis] + 0.5 * PI;
    let su = manifold_graph(sys, h, Which::Unstable, energy.max(f64::MIN_POSITIVE), &dom(c), opts)?;
    let ss = manifold_graph(sys, h, Which::Stable, energy.max(f64::MIN_POSITIVE), &dom(c), opts)?;
    let difference: Vec<f64> = su.s.values.iter().zip(&ss.s.values).map(|(a, b)| a - b).collect();
    let second = (difference[8] + difference[0] - 2.0 * difference[4]) / (step * step);
    let zo = if axis == 1 { &sys.z1 } else { &sys.z2 };
    let expected = 2.0 * (sys.a[other][other] * -zo.d2(x0)).sqrt();
    Ok(TorusSplitting { axis, nodes, difference, second_difference: second, expected })
}

/// Homology class `sign·e_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Homology {
    pub axis: usize,
    pub sign: i8,
}

impl Homology {
    pub fn new(g: [i64; 2]) -> Result<Self> {
        match g {
            [s, 0] if s.abs() == 1 => Ok(Homology { axis: 0, sign: s as i8 }),
            [0, s] if s.abs() == 1 => Ok(Homology { axis: 1, sign: s as i8 }),
            _ => bail!(Dynamics, "homology class must be ±(1,0) or ±(0,1), got {g:?}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomoclinicOptions {
    pub shooting: ShootingOptions,
    /// Half-width of the transverse scan around the fixed point.
    pub half_width: f64,
    pub scan_points: usize,
    /// Step of the second difference at the minimizer.
    pub fd_step: f64,
}

impl Default for HomoclinicOptions {
    fn default() -> Self {
        HomoclinicOptions { shooting: ShootingOptions::default(), half_width: 0.5, scan_points: 21, fd_step: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Homoclinic {
    pub class: Homology,
    pub section_value: f64,
    /// Minimizer of `S^u − S^s` on the section.
    pub transverse: f64,
    pub momentum: [f64; 2],
    /// Momentum mismatch of the two branches at the minimizer.
    pub mismatch: f64,
    pub scan: Vec<(f64, f64)>,
    pub minimizer_count: usize,
    pub splitting_second_derivative: f64,
    /// Orbit with the section crossing at `t = 0`.
    pub trajectory: Trajectory,
    pub departure_rate: f64,
    pub approach_rate: f64,
}

/// Minimizes `S^u − S^s` on the section half-way between the fixed point and its lift by `2πg`.
pub fn find_homoclinic(sys: &MechanicalSystem, h: &HyperbolicData, class: Homology, opts: HomoclinicOptions) -> Result<Homoclinic> {
    let axis = class.axis;
    let dir = class.sign as f64;
    let c = h.fixed_point[axis] + dir * PI;
    let up = Branch::new(sys, h, Which::Unstable, axis, dir, 0.0, opts.shooting);
    let down = Branch::new(sys, h, Which::Stable, axis, -dir, dir, opts.shooting);
    let t0 = h.fixed_point[1 - axis];
    let n = opts.scan_points.max(3);
    let nodes: Vec<f64> = (0..n).map(|k| t0 - opts.half_width + 2.0 * opts.half_width * k as f64 / (n - 1) as f64).collect();
    let splitting = |t: f64, gu: Option<(f64, f64)>, gs: Option<(f64, f64)>| -> Result<(f64, Hit, Hit)> {
        let a = up.solve(c, t, gu)?;
        let b = down.solve(c, t, gs)?;
        Ok((a.state.action - b.state.action, a, b))
    };
    let scan: Vec<(f64, f64)> = nodes.par_iter().map(|&t| splitting(t, None, None).map(|r| (t, r.0))).collect::<Result<_>>()?;
    let (imin, dmin) = scan.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, p)| if p.1 < acc.1 { (i, p.1) } else { acc });
    let range = scan.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) - dmin;
    let tol = 1e-9 + 1e-6 * range;
    let local_minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let l = if i == 0 { f64::INFINITY } else { scan[i - 1].1 };
            let r = if i == n - 1 { f64::INFINITY } else { scan[i + 1].1 };
            scan[i].1 <= l && scan[i].1 <= r
        })
        .collect();
    let near: Vec<usize> = local_minima.iter().copied().filter(|&i| scan[i].1 - dmin <= tol).collect();
    if near.len() > 1 {
        let at: Vec<f64> = near.iter().map(|&i| scan[i].0).collect();
        bail!(Dynamics, "ambiguous homoclinic: splitting minima at {at:?} agree within {tol:e}");
    }
    if imin == 0 || imin == n - 1 {
        bail!(Dynamics, "splitting minimum sits on the scan boundary at {}", scan[imin].0);
    }
    // ∂(S^u − S^s)/∂t is the momentum mismatch; locate its root by secant iteration
    let mismatch = |t: f64| -> Result<(f64, Hit, Hit)> {
        let (_, a, b) = splitting(t, None, None)?;
        Ok((a.state.y[1 - axis] - b.state.y[1 - axis], a, b))
    };
    let hw = nodes[1] - nodes[0];
    let (mut ta, mut tb) = (scan[imin].0 - 0.5 * hw, scan[imin].0 + 0.5 * hw);
    let (mut fa, _, _) = mismatch(ta)?;
    let (mut fb, mut hu, mut hs) = mismatch(tb)?;
    let mut tstar = tb;
    for _ in 0..60 {
        if fb == fa {
            break;
        }
        let tn = tb - fb * (tb - ta) / (fb - fa);
        let (fnew, a, b) = mismatch(tn)?;
        ta = tb;
        fa = fb;
        tb = tn;
        fb = fnew;
        hu = a;
        hs = b;
        tstar = tn;
        if fnew.abs() < 1e-12 || (tb - ta).abs() < 1e-14 {
            break;
        }
    }
    let hstep = opts.fd_step;
    let d = |t: f64| splitting(t, None, None).map(|r| r.0);
    let second = (d(tstar + hstep)? + d(tstar - hstep)? - 2.0 * d(tstar)?) / (hstep * hstep);

    // the orbit: unstable characteristic up to the section, then the stable one reversed
    let mut forward = up.characteristic(c, hu.u)?;
    let t_sec = forward.last().unwrap().t;
    let mut back = down.characteristic(c, hs.u)?;
    back.reverse();
    let t_back = back.first().unwrap().t;
    let mut traj = Trajectory { times: vec![], states: vec![], energies: vec![], actions: vec![] };
    for z in forward.drain(..) {
        traj.times.push(z.t - t_sec);
        traj.states.push((z.x, z.y));
        traj.energies.push(sys.energy_at(z.x, z.y, z.t));
        traj.actions.push(z.action);
    }
    for z in back.into_iter().skip(1) {
        traj.times.push(z.t - t_back);
        traj.states.push((z.x, z.y));
        traj.energies.push(sys.energy_at(z.x, z.y, z.t));
        traj.actions.push(z.action);
    }
    let mut end = h.fixed_point;
    end[axis] += 2.0 * PI * dir;
    let (departure_rate, approach_rate) = limit_rates(&traj, h.fixed_point, end, h.local_radius);
    let mom = hu.state.y;
    Ok(Homoclinic {
        class,
        section_value: c,
        transverse: tstar,
        momentum: mom,
        mismatch: (hu.state.y[0] - hs.state.y[0]).hypot(hu.state.y[1] - hs.state.y[1]),
        scan,
        minimizer_count: local_minima.len(),
        splitting_second_derivative: second,
        trajectory: traj,
        departure_rate,
        approach_rate,
    })
}

/// Exponential rates at which the orbit leaves `start` and reaches `end`, fitted on the part of
/// the orbit at distance between `1e−5·r` and `0.1·r` from them.
fn limit_rates(traj: &Trajectory, start: [f64; 2], end: [f64; 2], r: f64) -> (f64, f64) {
    let dist = |s: &([f64; 2], [f64; 2]), c: [f64; 2]| ((s.0[0] - c[0]).powi(2) + (s.0[1] - c[1]).powi(2) + s.1[0].powi(2) + s.1[1].powi(2)).sqrt();
    let pick = |c: [f64; 2], before: bool| -> Vec<(f64, f64)> {
        traj.times
            .iter()
            .zip(&traj.states)
            .filter(|(t, _)| if before { **t < 0.0 } else { **t > 0.0 })
            .map(|(t, s)| (*t, dist(s, c)))
            .filter(|(_, d)| *d > 1e-5 * r && *d < 0.1 * r)
            .map(|(t, d)| (t, d.ln()))
            .collect()
    };
    let dep = pick(start, true);
    let app = pick(end, false);
    let rate = |p: &[(f64, f64)]| if p.len() > 2 { linear_fit(p).0 } else { f64::NAN };
    (rate(&dep), -rate(&app))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticFit {
    /// Fitted exponent of `|Q₁|` against `|Q₂|`; `None` when `Q₁` vanishes identically.
    pub exponent: Option<f64>,
    /// Prefactor; `+∞` when the orbit runs along `∂Q₁`.
    pub prefactor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct U6Report {
    pub departure: AsymptoticFit,
    pub approach: AsymptoticFit,
    pub expected_exponent: f64,
    pub cap: f64,
    /// Single splitting minimizer with positive curvature.
    pub u7_pass: bool,
    pub pass: bool,
    pub violation: Option<String>,
}

/// Fits `Q₁ = Ĉ·Q₂^{λ₁/λ₂}` on the departure and the approach inside the ball of radius `r/2`.
pub fn check_u6_u7(sys: &MechanicalSystem, h: &HyperbolicData, hc: &Homoclinic, cap: f64) -> U6Report {
    let form = local_linear_form(h);
    let ratio = h.ratio();
    let r = h.local_radius;
    let mut shifted = form.clone();
    shifted.center[hc.class.axis] += 2.0 * PI * hc.class.sign as f64;
    let fit = |before: bool| -> AsymptoticFit {
        let f = if before { &form } else { &shifted };
        let pts: Vec<[f64; 4]> = hc
            .trajectory
            .times
            .iter()
            .zip(&hc.trajectory.states)
            .filter(|(t, _)| if before { **t < 0.0 } else { **t > 0.0 })
            .map(|(_, s)| f.to_normal(s.0, s.1))
            .filter(|w| {
                let n = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                n < 0.5 * r && n > 1e2 * 1e-6 * r
            })
            .collect();
        let q1max = pts.iter().map(|w| w[0].abs()).fold(0.0, f64::max);
        let q2max = pts.iter().map(|w| w[1].abs()).fold(0.0, f64::max);
        if pts.is_empty() || q1max <= 1e-12 * q2max {
            return AsymptoticFit { exponent: None, prefactor: 0.0 };
        }
        if q2max <= 1e-12 * q1max {
            return AsymptoticFit { exponent: Some(0.0), prefactor: f64::INFINITY };
        }
        let logs: Vec<(f64, f64)> = pts.iter().filter(|w| w[0] != 0.0 && w[1] != 0.0).map(|w| (w[1].abs().ln(), w[0].abs().ln())).collect();
        let (e, b) = linear_fit(&logs);
        AsymptoticFit { exponent: Some(e), prefactor: b.exp() }
    };
    let departure = fit(true);
    let approach = fit(false);
    let u7_pass = hc.splitting_second_derivative > 0.0 && hc.minimizer_count == 1;
    let mut violation = None;
    for (name, f) in [("departure", &departure), ("approach", &approach)] {
        if let Some(e) = f.exponent {
            if e < 1.0 || !f.prefactor.is_finite() {
                violation.get_or_insert(format!("{name} runs along the fast direction (exponent {e:.3}, prefactor +inf)"));
            } else if (e - ratio).abs() > 0.05 * ratio {
                violation.get_or_insert(format!("{name} exponent {e:.4} differs from {ratio:.4}"));
            } else if f.prefactor > cap {
                violation.get_or_insert(format!("{name} prefactor {:.3e} exceeds cap {cap:.3e}", f.prefactor));
            }
        }
    }
    if !u7_pass {
        violation.get_or_insert("splitting minimizer is not a unique nondegenerate minimum".into());
    }
    let _ = sys;
    U6Report { departure, approach, expected_exponent: ratio, cap, u7_pass, pass: violation.is_none(), violation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{hyperbolic_fixed_point, TrigPoly2};

    fn setup(c1: f64, c2: f64, z3: TrigPoly2, eps: f64) -> (MechanicalSystem, HyperbolicData) {
        let sys = MechanicalSystem::pendulums(c1, c2, z3, eps).unwrap();
        let h = hyperbolic_fixed_point(&sys, 0.3).unwrap();
        (sys, h)
    }

    /// `sin X₁·(1 − cos X₂)`: vanishes to third order at the origin and breaks the invariance of `{X₁ = 0}`.
    pub(crate) fn tilt() -> TrigPoly2 {
        TrigPoly2::new(vec![([1, 0], 0.0, 1.0), ([1, 1], 0.0, -0.5), ([1, -1], 0.0, -0.5)])
    }

    #[test]
    fn separatrix_momentum_closed_form() {
        let (sys, h) = setup(4.0, 1.0, TrigPoly2::default(), 0.0);
        let dom = GraphDomain { axis: 1, lift: 0, rows: vec![0.5, 1.0, 2.0, 3.0], cols: vec![-0.2, 0.0, 0.2] };
        let g = manifold_graph(&sys, &h, Which::Unstable, 0.0, &dom, ShootingOptions::default()).unwrap();
        for (i, &x2) in dom.rows.iter().enumerate() {
            let want = 2.0 * (x2 / 2.0).sin();
            assert!((g.ds_axis.values[i * 3 + 1] - want).abs() < 1e-6);
            // S = ∫ Y₂ dX₂ along X₁ = 0 plus the X₁ separatrix: 4(1 − cos(X₂/2))
            assert!((g.s.values[i * 3 + 1] - 4.0 * (1.0 - (x2 / 2.0).cos())).abs() < 1e-6);
        }
        assert!(g.hj_residual < 1e-6);
        // dS/dX₁ agrees with the X₁-separatrix momentum 2·2 sin(X₁/2)
        let want = 4.0 * (0.1f64).sin();
        assert!((g.ds_other.values[2] - want).abs() < 1e-6, "{}", g.ds_other.values[2]);
    }

    #[test]
    fn graph_finite_differences_match_momenta() {
        let (sys, h) = setup(4.0, 1.0, tilt(), 0.05);
        let cols: Vec<f64> = (0..9).map(|k| -0.2 + 0.05 * k as f64).collect();
        let dom = GraphDomain { axis: 1, lift: 0, rows: vec![2.0], cols: cols.clone() };
        let g = manifold_graph(&sys, &h, Which::Unstable, 0.0, &dom, ShootingOptions::default()).unwrap();
        assert!(g.hj_residual < 1e-6, "{}", g.hj_residual);
        for j in 1..8 {
            let fd = (g.s.values[j + 1] - g.s.values[j - 1]) / 0.1;
            assert!((fd - g.ds_other.values[j]).abs() < 5e-3, "{fd} {}", g.ds_other.values[j]);
        }
    }

    #[test]
    fn generating_function_vanishes_at_the_fixed_point() {
        let (sys, h) = setup(4.0, 1.0, TrigPoly2::default(), 0.0);
        let dom = GraphDomain { axis: 1, lift: 0, rows: vec![1e-3], cols: vec![0.0] };
        let g = manifold_graph(&sys, &h, Which::Unstable, 0.0, &dom, ShootingOptions::default()).unwrap();
        assert!(g.s.values[0].abs() < 1e-6);
    }

    #[test]
    fn torus_curvature_both_factors() {
        let (sys, h) = setup(4.0, 1.0, TrigPoly2::default(), 0.0);
        for axis in [0, 1] {
            let t = torus_splitting(&sys, &h, axis, 1e-3, 1e-2, ShootingOptions::default()).unwrap();
            assert!((t.second_difference / t.expected - 1.0).abs() < 0.01, "{t:?}");
        }
    }

    #[test]
    fn uncoupled_homoclinic() {
        let (sys, h) = setup(4.0, 1.0, TrigPoly2::default(), 0.0);
        let hc = find_homoclinic(&sys, &h, Homology::new([0, 1]).unwrap(), HomoclinicOptions::default()).unwrap();
        assert!(hc.transverse.abs() < 1e-8, "{}", hc.transverse);
        assert!((hc.splitting_second_derivative / (2.0 * h.lambda1) - 1.0).abs() < 0.01, "{}", hc.splitting_second_derivative);
        assert!((hc.momentum[1] - 2.0).abs() < 1e-6);
        for rate in [hc.departure_rate, hc.approach_rate] {
            assert!(rate >= 0.9 * h.lambda2 && rate <= 1.1 * h.lambda1, "{rate}");
        }
        // time reversal gives the −g orbit
        let back = find_homoclinic(&sys, &h, Homology::new([0, -1]).unwrap(), HomoclinicOptions::default()).unwrap();
        assert!((back.transverse - hc.transverse).abs() < 1e-8);
        assert!((back.momentum[1] + hc.momentum[1]).abs() < 1e-8 && (back.momentum[0] + hc.momentum[0]).abs() < 1e-8);
        let hc1 = find_homoclinic(&sys, &h, Homology::new([1, 0]).unwrap(), HomoclinicOptions::default()).unwrap();
        assert!((hc1.splitting_second_derivative / (2.0 * h.lambda2) - 1.0).abs() < 0.01, "{}", hc1.splitting_second_derivative);
    }

    #[test]
    fn reversal_symmetry_coupled() {
        let (sys, h) = setup(4.0, 1.0, tilt(), 0.02);
        let a = find_homoclinic(&sys, &h, Homology::new([0, 1]).unwrap(), HomoclinicOptions::default()).unwrap();
        let b = find_homoclinic(&sys, &h, Homology::new([0, -1]).unwrap(), HomoclinicOptions::default()).unwrap();
        assert!((a.transverse - b.transverse).abs() < 1e-7, "{} {}", a.transverse, b.transverse);
        assert!((a.momentum[0] + b.momentum[0]).abs() < 1e-6);
    }

    #[test]
    fn minimizer_moves_linearly_in_eps() {
        let shifts: Vec<f64> = [1e-3, 2e-3, 4e-3]
            .iter()
            .map(|&e| {
                let (sys, h) = setup(4.0, 1.0, tilt(), e);
                find_homoclinic(&sys, &h, Homology::new([0, 1]).unwrap(), HomoclinicOptions::default()).unwrap().transverse / e
            })
            .collect();
        assert!(shifts[0].abs() > 1e-3);
        for k in &shifts[1..] {
            assert!((k / shifts[0] - 1.0).abs() < 0.05, "{shifts:?}");
        }
    }

    #[test]
    fn u6_detects_fast_departure() {
        let (sys, h) = setup(4.0, 1.0, TrigPoly2::default(), 0.0);
        let hc = find_homoclinic(&sys, &h, Homology::new([1, 0]).unwrap(), HomoclinicOptions::default()).unwrap();
        let rep = check_u6_u7(&sys, &h, &hc, 1e6);
        assert!(!rep.pass);
        assert!(rep.departure.prefactor.is_infinite());
    }

    #[test]
    fn u6_coupled_fit() {
        let (sys, h) = setup(2.25, 1.0, tilt(), 0.05);
        let hc = find_homoclinic(&sys, &h, Homology::new([0, 1]).unwrap(), HomoclinicOptions::default()).unwrap();
        let rep = check_u6_u7(&sys, &h, &hc, 1e6);
        let e = rep.departure.exponent.unwrap();
        assert!((e - 1.5).abs() < 0.075, "{rep:?}");
        assert!(rep.departure.prefactor.is_finite() && rep.departure.prefactor > 0.0);
        let ec = rep.approach.exponent.unwrap();
        assert!((ec - e).abs() < 1e-3, "{rep:?}");
        assert!(rep.pass, "{rep:?}");
    }
}
