//! Discrete Lax-Oleinik semigroup on periodic grids: weak KAM solutions, the α function,
//! barriers, Mañé set estimates, the flat and the incomplete-intersection annulus.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::action::{flat_polygon, FlatPolygon, IRREDUCIBLE};
use crate::dynamics::MechanicalSystem;
use crate::error::{bail, Result};
use crate::grid::GridFunction;

type Potential = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Mechanical Lagrangian `L(x, v) = ½⟨A⁻¹v, v⟩ − Z(x)` on `T¹` or `T²`, dual to `H = ½⟨Ap, p⟩ + Z`.
#[derive(Clone)]
pub struct Lagrangian {
    pub dims: usize,
    pub a: [[f64; 2]; 2],
    a_inv: [[f64; 2]; 2],
    potential: Potential,
}

impl std::fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lagrangian").field("dims", &self.dims).field("a", &self.a).finish_non_exhaustive()
    }
}

impl Lagrangian {
    pub fn mechanical(a: [[f64; 2]; 2], potential: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::build(2, a, Arc::new(potential))
    }

    pub fn mechanical_1d(a: f64, potential: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        Self::build(1, [[a, 0.0], [0.0, 1.0]], Arc::new(move |x: [f64; 2]| potential(x[0])))
    }

    pub fn free(dims: usize) -> Result<Self> {
        Self::build(dims, [[1.0, 0.0], [0.0, 1.0]], Arc::new(|_| 0.0))
    }

    pub fn from_system(sys: &MechanicalSystem) -> Result<Self> {
        if !sys.is_autonomous() || sys.drift != [0.0; 2] {
            bail!(WeakKam, "only autonomous systems without a momentum drift are supported");
        }
        let s = sys.clone();
        Self::build(2, sys.a, Arc::new(move |x| s.potential(x)))
    }

    fn build(dims: usize, a: [[f64; 2]; 2], potential: Potential) -> Result<Self> {
        if !(dims == 1 || dims == 2) {
            bail!(WeakKam, "only one or two dimensional tori are supported");
        }
        // Tonelli: A (hence A⁻¹) positive definite
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !(a[0][0] > 0.0 && det > 0.0) || (a[0][1] - a[1][0]).abs() > 1e-14 {
            bail!(WeakKam, "kinetic matrix {a:?} is not symmetric positive definite");
        }
        if dims == 1 && a[0][1] != 0.0 {
            bail!(WeakKam, "one dimensional Lagrangian with a coupled kinetic matrix");
        }
        let a_inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        Ok(Lagrangian { dims, a, a_inv, potential })
    }

    pub fn potential(&self, x: [f64; 2]) -> f64 {
        (self.potential)(x)
    }

    /// `L(x, v) − ⟨c, v⟩`.
    pub fn value(&self, x: [f64; 2], v: [f64; 2], c: [f64; 2]) -> f64 {
        let ai = &self.a_inv;
        let q = v[0] * (ai[0][0] * v[0] + ai[0][1] * v[1]) + v[1] * (ai[1][0] * v[0] + ai[1][1] * v[1]);
        0.5 * q - c[0] * v[0] - c[1] * v[1] - self.potential(x)
    }

    pub fn hamiltonian(&self, x: [f64; 2], p: [f64; 2]) -> f64 {
        let a = &self.a;
        0.5 * (p[0] * (a[0][0] * p[0] + a[0][1] * p[1]) + p[1] * (a[1][0] * p[0] + a[1][1] * p[1])) + self.potential(x)
    }

    fn a_times(&self, c: [f64; 2]) -> [f64; 2] {
        [self.a[0][0] * c[0] + self.a[0][1] * c[1], self.a[1][0] * c[0] + self.a[1][1] * c[1]]
    }

    fn a_max(&self) -> f64 {
        let (p, q, r) = (self.a[0][0], self.a[0][1], self.a[1][1]);
        0.5 * (p + r) + (0.25 * (p - r) * (p - r) + q * q).sqrt()
    }

    fn oscillation(&self, n: usize) -> f64 {
        let m = if self.dims == 1 { 1 } else { n };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            for j in 0..m {
                let z = self.potential([2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / m as f64]);
                lo = lo.min(z);
                hi = hi.max(z);
            }
        }
        hi - lo
    }
}

/// Grid and time step of the discrete semigroup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discretization {
    pub n: usize,
    pub t_step: f64,
}

impl Discretization {
    pub fn new(n: usize, t_step: f64) -> Self {
        Discretization { n, t_step }
    }

    fn h(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    fn dims(&self, l: &Lagrangian) -> Vec<usize> {
        vec![self.n; l.dims]
    }

    pub fn zeros(&self, l: &Lagrangian) -> GridFunction {
        GridFunction::zeros_periodic(self.dims(l), &vec![2.0 * PI; l.dims])
    }
}

/// One step of the discrete backward semigroup for a fixed class, velocity window and direction.
///
/// Candidate velocities form the lattice `Ac + (h/τ)ℤᵈ`: centring it on the free minimizer makes the
/// free case exact. The common fractional shift is absorbed by linear interpolation of `u`, so
/// the operator is a min-plus combination of positive averages: monotone and sup-norm non-expansive.
pub struct Bellman {
    n: [usize; 2],
    w: [usize; 2],
    shift: [(i64, f64); 2],
    zpad: [usize; 2],
    zmid: Vec<f64>,
    offsets: Vec<(isize, isize, f64, bool)>,
}

impl Bellman {
    pub fn new(l: &Lagrangian, c: [f64; 2], d: &Discretization, window: usize) -> Result<Self> {
        if !(d.t_step > 0.0) || d.n < 4 {
            bail!(WeakKam, "need t_step > 0 and at least four nodes per axis");
        }
        if l.dims == 1 && c[1] != 0.0 {
            bail!(WeakKam, "class {c:?} has a second component on a circle");
        }
        let h = d.h();
        let tau = d.t_step;
        let n = [d.n, if l.dims == 2 { d.n } else { 1 }];
        let w = [window.min(d.n / 2), if l.dims == 2 { window.min(d.n / 2) } else { 0 }];
        let ac = l.a_times(c);
        let shift = [0, 1].map(|i| {
            if i == 1 && l.dims == 1 {
                return (0, 0.0);
            }
            let cells = ac[i] * tau / h;
            let k = cells.floor();
            (k as i64, cells - k)
        });
        let cac = c[0] * ac[0] + c[1] * ac[1];
        let mut offsets = vec![];
        let rw = w[0].max(1) as f64;
        for j1 in -(w[0] as isize)..=w[0] as isize {
            for j2 in -(w[1] as isize)..=w[1] as isize {
                let r = ((j1 * j1 + j2 * j2) as f64).sqrt();
                if r > rw + 1e-9 {
                    continue;
                }
                let dev = [j1 as f64 * h / tau, j2 as f64 * h / tau];
                let ai = &l.a_inv;
                let q = dev[0] * (ai[0][0] * dev[0] + ai[0][1] * dev[1]) + dev[1] * (ai[1][0] * dev[0] + ai[1][1] * dev[1]);
                let cost = tau * (0.5 * q - 0.5 * cac);
                offsets.push((j1, j2, cost, r > rw - 1.0 + 1e-9 && w[0] < d.n / 2));
            }
        }
        // τ·Z at the segment midpoints x − (Acτ + jh)/2, on a half-step grid padded by the window
        let zpad = [w[0], w[1]];
        let m = [2 * n[0] + 2 * zpad[0], 2 * n[1] - (n[1] == 1) as usize + 2 * zpad[1]];
        let mut zmid = vec![0.0; m[0] * m[1]];
        let off = [ac[0] * tau / 2.0, if l.dims == 2 { ac[1] * tau / 2.0 } else { 0.0 }];
        for a in 0..m[0] {
            for b in 0..m[1] {
                let x = [(a as f64 - zpad[0] as f64) * h / 2.0 - off[0], (b as f64 - zpad[1] as f64) * h / 2.0 - off[1]];
                zmid[a * m[1] + b] = tau * l.potential(x);
            }
        }
        Ok(Bellman { n, w, shift, zpad, zmid, offsets })
    }

    pub fn window(&self) -> usize {
        self.w[0]
    }

    /// Applies the step; also reports whether some minimizer sat on the window boundary.
    pub fn apply(&self, u: &[f64]) -> (Vec<f64>, bool) {
        let [n1, n2] = self.n;
        let shifted = self.shift_field(u);
        // periodic copy of the shifted field padded by the window
        let p = [n1 + 2 * self.w[0], n2 + 2 * self.w[1]];
        let mut up = vec![0.0; p[0] * p[1]];
        for a in 0..p[0] {
            let i1 = (a + n1 * (self.w[0] / n1 + 1) - self.w[0]) % n1;
            for b in 0..p[1] {
                let i2 = (b + n2 * (self.w[1] / n2 + 1) - self.w[1]) % n2;
                up[a * p[1] + b] = shifted[i1 * n2 + i2];
            }
        }
        let zm = 2 * n2 - (n2 == 1) as usize + 2 * self.zpad[1];
        let ou: Vec<isize> = self.offsets.iter().map(|o| o.0 * p[1] as isize + o.1).collect();
        let oz: Vec<isize> = self.offsets.iter().map(|o| o.0 * zm as isize + o.1).collect();
        let rows: Vec<(Vec<f64>, bool)> = (0..n1)
            .into_par_iter()
            .map(|i1| {
                let mut row = vec![0.0; n2];
                let mut hit = false;
                for (i2, slot) in row.iter_mut().enumerate() {
                    let bu = ((i1 + self.w[0]) * p[1] + i2 + self.w[1]) as isize;
                    let bz = ((2 * i1 + self.zpad[0]) * zm + 2 * i2 + self.zpad[1]) as isize;
                    let (mut best, mut arg) = (f64::INFINITY, 0);
                    for (k, o) in self.offsets.iter().enumerate() {
                        let v = up[(bu - ou[k]) as usize] + o.2 - self.zmid[(bz - oz[k]) as usize];
                        if v < best {
                            best = v;
                            arg = k;
                        }
                    }
                    hit |= self.offsets[arg].3;
                    *slot = best;
                }
                (row, hit)
            })
            .collect();
        let hit = rows.iter().any(|r| r.1);
        (rows.into_iter().flat_map(|r| r.0).collect(), hit)
    }

    /// `ũ(x) = u(x − Acτ)` by linear interpolation along each axis.
    fn shift_field(&self, u: &[f64]) -> Vec<f64> {
        let [n1, n2] = self.n;
        let mut out = u.to_vec();
        for axis in 0..2 {
            let (k, th) = self.shift[axis];
            if k == 0 && th == 0.0 {
                continue;
            }
            let src = out.clone();
            let n = self.n[axis] as i64;
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    let i = if axis == 0 { i1 } else { i2 } as i64;
                    let a = (i - k).rem_euclid(n) as usize;
                    let b = (i - k - 1).rem_euclid(n) as usize;
                    let (ia, ib) = if axis == 0 { (a * n2 + i2, b * n2 + i2) } else { (i1 * n2 + a, i1 * n2 + b) };
                    out[i1 * n2 + i2] = (1.0 - th) * src[ia] + th * src[ib];
                }
            }
        }
        out
    }
}

/// Default window for a class, from the speed bound on minimizers.
pub fn default_window(l: &Lagrangian, c: [f64; 2], d: &Discretization) -> usize {
    let ac = l.a_times(c);
    let cac = c[0] * ac[0] + c[1] * ac[1];
    let osc = l.oscillation(64);
    let speed = (2.0 * l.a_max() * (0.5 * cac + osc)).sqrt() + ac[0].hypot(ac[1]);
    ((speed * d.t_step / d.h()).ceil() as usize + 2).min(d.n / 2)
}

/// `T⁻_τ u` with the window enlarged until no minimizer sits on its boundary.
pub fn lax_oleinik_step(u: &GridFunction, l: &Lagrangian, c: [f64; 2], d: &Discretization) -> Result<GridFunction> {
    if u.dims != d.dims(l) {
        bail!(WeakKam, "grid {:?} does not match the discretization", u.dims);
    }
    let mut w = default_window(l, c, d);
    loop {
        let op = Bellman::new(l, c, d, w)?;
        let (v, hit) = op.apply(&u.values);
        if !hit {
            return GridFunction::new(u.dims.clone(), u.spacing.clone(), v);
        }
        if op.window() >= d.n / 2 {
            bail!(WeakKam, "velocity window reached half the torus with minimizers still on its edge");
        }
        w = (2 * w).min(d.n / 2);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-9, max_iter: 20_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakKamResult {
    pub u_minus: GridFunction,
    pub u_plus: GridFunction,
    pub c: [f64; 2],
    pub alpha: f64,
    /// Rigorous bracket of the discrete critical value from the last iterate.
    pub alpha_bounds: (f64, f64),
    pub iterations: usize,
    /// Spread of the last per-node drift, `max − min` of `T u − u`.
    pub residual: f64,
    /// Mean `|H(x, c + du) − α|` over nodes where `u⁻` is differentiable to grid accuracy.
    pub hj_residual: f64,
}

/// Outcome of a run that may stop as soon as a predicate on the α bracket is decided.
struct Iteration {
    u: Vec<f64>,
    bounds: (f64, f64),
    iterations: usize,
}

fn iterate(
    l: &Lagrangian,
    c: [f64; 2],
    d: &Discretization,
    opts: &SolveOptions,
    init: Option<&[f64]>,
    stop: &dyn Fn((f64, f64)) -> bool,
) -> Result<Iteration> {
    let size = d.n.pow(l.dims as u32);
    let mut u = init.map_or_else(|| vec![0.0; size], |v| v.to_vec());
    if u.len() != size {
        bail!(WeakKam, "initial guess has {} values for {} nodes", u.len(), size);
    }
    let mut w = default_window(l, c, d);
    let mut op = Bellman::new(l, c, d, w)?;
    let tau = d.t_step;
    let mut k = 0;
    while k < opts.max_iter {
        let (tu, hit) = op.apply(&u);
        if hit {
            if op.window() >= d.n / 2 {
                bail!(WeakKam, "velocity window reached half the torus with minimizers still on its edge");
            }
            w = (2 * w).min(d.n / 2);
            op = Bellman::new(l, c, d, w)?;
            continue;
        }
        k += 1;
        let (mut lo, mut hi, mut mean) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for (a, b) in tu.iter().zip(&u) {
            let dd = a - b;
            lo = lo.min(dd);
            hi = hi.max(dd);
            mean += dd;
        }
        mean /= size as f64;
        // T u − u = −ατ at a fixed point
        let bounds = (-hi / tau, -lo / tau);
        if hi - lo <= opts.tol || stop(bounds) {
            return Ok(Iteration { u, bounds, iterations: k });
        }
        // Krasnosel'skii-Mann averaging removes the periodic cycling of plain min-plus iteration
        for (x, t) in u.iter_mut().zip(&tu) {
            *x = 0.5 * (*x + t - mean);
        }
        let m = u.iter().cloned().fold(f64::INFINITY, f64::min);
        u.iter_mut().for_each(|x| *x -= m);
    }
    bail!(WeakKam, "no convergence in {} iterations for class {:?}", opts.max_iter, c)
}

/// Weak KAM pair at class `c`. For the even Lagrangians here the symmetric Lagrangian at `c` is
/// the original one at `−c`, so `u⁺_c = −u⁻_{−c}`.
pub fn weak_kam_solve(l: &Lagrangian, c: [f64; 2], d: &Discretization, opts: &SolveOptions) -> Result<WeakKamResult> {
    let minus = iterate(l, c, d, opts, None, &|_| false)?;
    let rev = [-c[0], -c[1]];
    let plus = if rev == c { None } else { Some(iterate(l, rev, d, opts, None, &|_| false)?) };
    let dims = d.dims(l);
    let spacing = vec![d.h(); l.dims];
    let mut up: Vec<f64> = plus.as_ref().map_or(&minus.u, |p| &p.u).iter().map(|v| -v).collect();
    // normalise u⁺ ≤ u⁻ with contact
    let gap = minus.u.iter().zip(&up).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
    up.iter_mut().for_each(|v| *v -= gap);
    let (lo, hi) = minus.bounds;
    let alpha = 0.5 * (lo + hi);
    let u_minus = GridFunction::new(dims.clone(), spacing.clone(), minus.u)?;
    let hj_residual = hj_residual(l, &u_minus, c, alpha);
    Ok(WeakKamResult {
        u_plus: GridFunction::new(dims, spacing, up)?,
        u_minus,
        c,
        alpha,
        alpha_bounds: (lo, hi),
        iterations: minus.iterations + plus.map_or(0, |p| p.iterations),
        residual: (hi - lo) * d.t_step,
        hj_residual,
    })
}

fn axis_neighbours(g: &GridFunction, flat: usize, axis: usize) -> (usize, usize) {
    let idx = g.multi_index(flat);
    let mut p: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
    let mut m = p.clone();
    p[axis] += 1;
    m[axis] -= 1;
    (g.index_wrapped(&p), g.index_wrapped(&m))
}

fn hj_residual(l: &Lagrangian, u: &GridFunction, c: [f64; 2], alpha: f64) -> f64 {
    let h = u.spacing[0];
    let (mut sum, mut count) = (0.0, 0usize);
    'node: for k in 0..u.len() {
        let mut p = c;
        for axis in 0..u.dims.len() {
            let (a, b) = axis_neighbours(u, k, axis);
            let (fwd, bwd) = ((u.values[a] - u.values[k]) / h, (u.values[k] - u.values[b]) / h);
            if (fwd - bwd).abs() > 20.0 * h {
                continue 'node;
            }
            p[axis] += 0.5 * (fwd + bwd);
        }
        let x = u.coords(k);
        let x = [x[0], x.get(1).copied().unwrap_or(0.0)];
        sum += (l.hamiltonian(x, p) - alpha).abs();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Largest `(u(x+h) + u(x−h) − 2u(x))/h²` over nodes and axes.
pub fn semiconcavity_constant(u: &GridFunction) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..u.len() {
        for axis in 0..u.dims.len() {
            let (a, b) = axis_neighbours(u, k, axis);
            let h = u.spacing[axis];
            worst = worst.max((u.values[a] + u.values[b] - 2.0 * u.values[k]) / (h * h));
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq)]
pub struct Barrier {
    pub field: GridFunction,
    /// Nodes where the barrier vanishes up to roundoff.
    pub minimizers: Vec<usize>,
}

/// `B = u⁻ − u⁺`, shifted to have minimum zero.
pub fn barrier(u_minus: &GridFunction, u_plus: &GridFunction) -> Result<Barrier> {
    if !u_minus.same_shape(u_plus) {
        bail!(WeakKam, "barrier of functions on different grids");
    }
    let raw: Vec<f64> = u_minus.values.iter().zip(&u_plus.values).map(|(a, b)| a - b).collect();
    let m = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let values: Vec<f64> = raw.iter().map(|v| v - m).collect();
    let scale = values.iter().cloned().fold(0.0, f64::max).max(1.0);
    let minimizers = values.iter().enumerate().filter(|(_, v)| **v <= 1e-12 * scale).map(|(i, _)| i).collect();
    Ok(Barrier { field: GridFunction::new(u_minus.dims.clone(), u_minus.spacing.clone(), values)?, minimizers })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManeEstimate {
    /// 1 where the barrier is below the threshold, else 0.
    pub mask: GridFunction,
    pub coverage: f64,
    pub threshold: f64,
    /// Disjoint arcs covering the mask on the loop `{x₂ = π}` (the whole circle in one dimension).
    pub intervals: Vec<(f64, f64)>,
}

/// Sublevel set of the barrier. The default threshold is three times the Hamilton-Jacobi residual.
pub fn mane_set_estimate(res: &WeakKamResult, threshold: Option<f64>) -> Result<ManeEstimate> {
    let b = barrier(&res.u_minus, &res.u_plus)?;
    let thr = threshold.unwrap_or(3.0 * res.hj_residual);
    let mask: Vec<f64> = b.field.values.iter().map(|v| if *v <= thr { 1.0 } else { 0.0 }).collect();
    let coverage = mask.iter().sum::<f64>() / mask.len() as f64;
    let n = b.field.dims[0];
    let line: Vec<bool> = if b.field.dims.len() == 1 {
        mask.iter().map(|v| *v > 0.0).collect()
    } else {
        let m = b.field.dims[1];
        (0..n).map(|i| mask[i * m + m / 2] > 0.0).collect()
    };
    let h = b.field.spacing[0];
    let mut intervals = vec![];
    if line.iter().all(|v| *v) {
        intervals.push((0.0, 2.0 * PI));
    } else if let Some(start) = line.iter().position(|v| !*v) {
        // walk once around the loop from an unmasked node
        let mut k = 0;
        while k < n {
            let i = (start + k) % n;
            if line[i] {
                let first = start + k;
                while k < n && line[(start + k) % n] {
                    k += 1;
                }
                intervals.push(((first as f64 - 0.5) * h % (2.0 * PI), ((start + k) as f64 - 0.5) * h % (2.0 * PI)));
            }
            k += 1;
        }
    }
    Ok(ManeEstimate { mask: GridFunction::new(b.field.dims.clone(), b.field.spacing.clone(), mask)?, coverage, threshold: thr, intervals })
}

/// Rectangular grid of classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub n: [usize; 2],
}

impl ClassGrid {
    fn axis(&self, i: usize) -> Vec<f64> {
        if self.n[i] <= 1 {
            return vec![self.lo[i]];
        }
        (0..self.n[i]).map(|k| self.lo[i] + (self.hi[i] - self.lo[i]) * k as f64 / (self.n[i] - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaScan {
    pub alpha: GridFunction,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    /// Largest violation of the midpoint inequality along grid lines.
    pub convexity_defect: f64,
    /// Resolution of α set by the velocity lattice, `½·a_max·(h/τ)²`.
    pub grid_tolerance: f64,
    /// Classes with `α ≤ min α + tol_flat` over the scan.
    pub flat: Vec<[f64; 2]>,
}

impl AlphaScan {
    /// False signals a grid-resolution problem rather than a property of α.
    pub fn convex_within_resolution(&self) -> bool {
        self.convexity_defect <= self.grid_tolerance
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("c1,c2,alpha\n");
        for (i, a) in self.c1.iter().enumerate() {
            for (j, b) in self.c2.iter().enumerate() {
                s.push_str(&format!("{a:.9},{b:.9},{:.12e}\n", self.alpha.values[i * self.c2.len() + j]));
            }
        }
        s
    }
}

pub fn alpha_scan(l: &Lagrangian, classes: &ClassGrid, d: &Discretization, opts: &SolveOptions, tol_flat: f64) -> Result<AlphaScan> {
    let (c1, c2) = (classes.axis(0), classes.axis(1));
    if l.dims == 1 && c2.iter().any(|v| *v != 0.0) {
        bail!(WeakKam, "class grid has a second component for a circle");
    }
    let mut alpha = Vec::with_capacity(c1.len() * c2.len());
    let mut warm: Option<Vec<f64>> = None;
    for a in &c1 {
        for b in &c2 {
            let it = iterate(l, [*a, *b], d, opts, warm.as_deref(), &|_| false)?;
            alpha.push(0.5 * (it.bounds.0 + it.bounds.1));
            warm = Some(it.u);
        }
    }
    let (n1, n2) = (c1.len(), c2.len());
    let at = |i: usize, j: usize| alpha[i * n2 + j];
    let mut defect: f64 = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 1..n1.max(n2) {
                if i >= k && i + k < n1 {
                    defect = defect.max(at(i, j) - 0.5 * (at(i - k, j) + at(i + k, j)));
                }
                if j >= k && j + k < n2 {
                    defect = defect.max(at(i, j) - 0.5 * (at(i, j - k) + at(i, j + k)));
                }
            }
        }
    }
    let min = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = (0..n1 * n2).filter(|k| alpha[*k] <= min + tol_flat).map(|k| [c1[k / n2], c2[k % n2]]).collect();
    let sp = |v: &Vec<f64>| if v.len() > 1 { v[1] - v[0] } else { 1.0 };
    let q = d.h() / d.t_step;
    Ok(AlphaScan {
        alpha: GridFunction::new(vec![n1, n2], vec![sp(&c1), sp(&c2)], alpha)?,
        c1,
        c2,
        convexity_defect: defect,
        grid_tolerance: 0.5 * l.a_max() * q * q,
        flat,
    })
}

/// Options for locating the flat boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatOptions {
    pub tol_flat: f64,
    /// Relative precision of each boundary point.
    pub precision: f64,
    /// Relative gap below which a diagonal constraint counts as touching a rectangle corner.
    pub snap: f64,
}

impl Default for FlatOptions {
    fn default() -> Self {
        FlatOptions { tol_flat: 2e-3, precision: 2e-3, snap: 0.03 }
    }
}

/// Radius `t` where `α(t·dir)` crosses `level`, starting from a radius `lo` known to be below it.
/// Membership is decided from the rigorous α bracket, so far-off classes stop early.
fn level_radius(
    l: &Lagrangian,
    dir: [f64; 2],
    level: f64,
    d: &Discretization,
    opts: &SolveOptions,
    precision: f64,
    mut lo: f64,
    warm: &mut Option<Vec<f64>>,
) -> Result<Option<f64>> {
    let mut below = |t: f64| -> Result<bool> {
        let c = [t * dir[0], t * dir[1]];
        let it = iterate(l, c, d, opts, warm.as_deref(), &|(a, b)| a > level || b <= level)?;
        *warm = Some(it.u);
        Ok(0.5 * (it.bounds.0 + it.bounds.1) <= level)
    };
    let mut hi = (2.0 * lo).max(0.5);
    while below(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Ok(None);
        }
    }
    while hi - lo > precision * hi {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn unit(dir: [f64; 2]) -> Result<[f64; 2]> {
    let norm = dir[0].hypot(dir[1]);
    if norm == 0.0 {
        bail!(WeakKam, "direction must be nonzero");
    }
    Ok([dir[0] / norm, dir[1] / norm])
}

/// `α(0)`, the minimum of α for the even Lagrangians handled here.
pub fn alpha_min(l: &Lagrangian, d: &Discretization, opts: &SolveOptions) -> Result<(f64, Vec<f64>)> {
    let it = iterate(l, [0.0; 2], d, opts, None, &|_| false)?;
    Ok((0.5 * (it.bounds.0 + it.bounds.1), it.u))
}

/// Distance along `dir` to the boundary of `{α ≤ α(0) + tol_flat}`.
pub fn flat_radius(l: &Lagrangian, dir: [f64; 2], d: &Discretization, opts: &SolveOptions, fo: &FlatOptions) -> Result<f64> {
    let dir = unit(dir)?;
    let (a0, u0) = alpha_min(l, d, opts)?;
    let mut warm = Some(u0);
    match level_radius(l, dir, a0 + fo.tol_flat, d, opts, fo.precision, 0.0, &mut warm)? {
        Some(t) => Ok(t),
        None => bail!(WeakKam, "flat appears unbounded along {dir:?}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatFit {
    pub boundary: Vec<[f64; 2]>,
    pub support: Vec<([i64; 2], f64)>,
    pub polygon: FlatPolygon,
}

/// Boundary points along axis, diagonal and corner rays, support values of the eight
/// irreducible classes, and the polygon they cut out.
pub fn fit_flat(l: &Lagrangian, d: &Discretization, opts: &SolveOptions, fo: &FlatOptions) -> Result<FlatFit> {
    if l.dims != 2 {
        bail!(WeakKam, "flat polygon needs a two dimensional torus");
    }
    let w1 = flat_radius(l, [1.0, 0.0], d, opts, fo)?;
    let w2 = flat_radius(l, [0.0, 1.0], d, opts, fo)?;
    let mut dirs = vec![[1.0, 1.0], [-1.0, 1.0], [w1, w2], [-w1, w2], [2.0 * w1, w2], [w1, 2.0 * w2], [-2.0 * w1, w2], [-w1, 2.0 * w2]];
    let mut boundary = vec![[w1, 0.0], [0.0, w2]];
    for dir in dirs.drain(..) {
        let t = flat_radius(l, dir, d, opts, fo)?;
        let n = dir[0].hypot(dir[1]);
        boundary.push([t * dir[0] / n, t * dir[1] / n]);
    }
    // central symmetry completes the sample
    let mirrored: Vec<[f64; 2]> = boundary.iter().map(|p| [-p[0], -p[1]]).collect();
    boundary.extend(mirrored);
    let h = |g: [i64; 2]| boundary.iter().map(|p| g[0] as f64 * p[0] + g[1] as f64 * p[1]).fold(f64::NEG_INFINITY, f64::max);
    let mut support = vec![];
    for g in IRREDUCIBLE {
        let mut v = h(g);
        if g[0] != 0 && g[1] != 0 {
            let corner = h([g[0], 0]) + h([0, g[1]]);
            if v >= (1.0 - fo.snap) * corner {
                v = corner;
            }
        }
        support.push((g, v));
    }
    // symmetric by construction up to the bisection precision; average the pairs
    let sym: Vec<([i64; 2], f64)> = support
        .iter()
        .map(|(g, v)| {
            let o = support.iter().find(|e| e.0 == [-g[0], -g[1]]).unwrap().1;
            (*g, 0.5 * (v + o))
        })
        .collect();
    let polygon = flat_polygon(&sym)?;
    Ok(FlatFit { boundary, support: sym, polygon })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusSample {
    pub delta: f64,
    pub direction: [f64; 2],
    pub class: Option<[f64; 2]>,
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusReport {
    pub samples: Vec<AnnulusSample>,
    /// Largest Δ such that every sampled class at every level up to Δ has coverage below one.
    pub verified_delta: f64,
    pub excluded: usize,
    pub wedge_reach: f64,
    pub reaches_wedge: bool,
}

impl AnnulusReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,dir1,dir2,c1,c2,coverage\n");
        for a in &self.samples {
            let (c, cov) = match (a.class, a.coverage) {
                (Some(c), Some(v)) => (format!("{:.9},{:.9}", c[0], c[1]), format!("{v:.6}")),
                _ => ("nan,nan".into(), "nan".into()),
            };
            s.push_str(&format!("{:.9e},{:.6},{:.6},{c},{cov}\n", a.delta, a.direction[0], a.direction[1]));
        }
        s
    }
}

/// For each level Δ, classes on `{α = α(0) + Δ}` found along rays from the origin, and the coverage of
/// their Mañé set estimates. Δ₀ is verified when all levels up to it have coverage below one.
pub fn annulus_diagnostic(
    l: &Lagrangian,
    d: &Discretization,
    opts: &SolveOptions,
    deltas: &[f64],
    rays: usize,
    wedge: (f64, f64),
) -> Result<AnnulusReport> {
    let mut levels = deltas.to_vec();
    levels.sort_by(f64::total_cmp);
    let rays = if l.dims == 1 { 1 } else { rays.max(1) };
    let mut samples = vec![];
    let mut excluded = 0;
    let mut ok_at = vec![true; levels.len()];
    let (a0, _) = alpha_min(l, d, opts)?;
    for r in 0..rays {
        // half the circle suffices by central symmetry of α
        let th = PI * (r as f64 + 0.5) / rays as f64;
        let dir = if l.dims == 1 { [1.0, 0.0] } else { [th.cos(), th.sin()] };
        let mut warm = None;
        let mut t_prev = 0.0;
        for (k, &delta) in levels.iter().enumerate() {
            match level_radius(l, dir, a0 + delta, d, opts, 1e-3, t_prev, &mut warm) {
                Ok(Some(t)) => {
                    t_prev = t;
                    let c = [t * dir[0], t * dir[1]];
                    let res = weak_kam_solve(l, c, d, opts)?;
                    let cov = mane_set_estimate(&res, None)?.coverage;
                    ok_at[k] &= cov < 1.0;
                    samples.push(AnnulusSample { delta, direction: dir, class: Some(c), coverage: Some(cov) });
                }
                _ => {
                    excluded += 1;
                    samples.push(AnnulusSample { delta, direction: dir, class: None, coverage: None });
                }
            }
        }
    }
    let verified = levels.iter().zip(&ok_at).take_while(|(_, ok)| **ok).map(|(d, _)| *d).last().unwrap_or(0.0);
    let reach = 3.0 * wedge.0.powf(wedge.1);
    Ok(AnnulusReport { samples, verified_delta: verified, excluded, wedge_reach: reach, reaches_wedge: verified >= reach })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pendulum(lambda: f64) -> Lagrangian {
        Lagrangian::mechanical_1d(1.0, move |x| lambda * (x.cos() - 1.0)).unwrap()
    }

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn free_case_is_exact() {
        let d = Discretization::new(64, 0.2);
        let f = Lagrangian::free(1).unwrap();
        let u = d.zeros(&f);
        assert_eq!(lax_oleinik_step(&u, &f, [0.0; 2], &d).unwrap(), u);
        for c in [0.0, 0.3, 1.7, -2.2, 5.1] {
            let r = weak_kam_solve(&f, [c, 0.0], &d, &opts()).unwrap();
            assert!((r.alpha - 0.5 * c * c).abs() <= 1e-6, "{c} {}", r.alpha);
            assert!(r.u_minus.max() - r.u_minus.min() < 1e-9);
            let b = barrier(&r.u_minus, &r.u_plus).unwrap();
            assert!(b.field.max() < 1e-9);
            assert_eq!(mane_set_estimate(&r, Some(1e-8)).unwrap().coverage, 1.0);
        }
        let f2 = Lagrangian::free(2).unwrap();
        let d2 = Discretization::new(16, 0.3);
        for c in [[0.4, -1.3], [2.05, 0.7]] {
            let r = weak_kam_solve(&f2, c, &d2, &opts()).unwrap();
            assert!((r.alpha - 0.5 * (c[0] * c[0] + c[1] * c[1])).abs() <= 1e-6);
        }
    }

    #[test]
    fn pendulum_solution_and_barrier() {
        let d = Discretization::new(512, 0.2);
        let r = weak_kam_solve(&pendulum(1.0), [0.0; 2], &d, &opts()).unwrap();
        assert!(r.alpha.abs() < 1e-3);
        let u_pi = r.u_minus.values[256] - r.u_minus.values[0];
        assert!((u_pi - 4.0).abs() < 0.08, "{u_pi}");
        let b = barrier(&r.u_minus, &r.u_plus).unwrap();
        assert_eq!(b.field.values[0], 0.0);
        assert!((b.field.values[256] - 8.0).abs() < 0.16, "{}", b.field.values[256]);
        assert!(b.field.min() >= 0.0);
        // reversible: u⁺ = −u⁻ up to a constant
        let s: Vec<f64> = r.u_minus.values.iter().zip(&r.u_plus.values).map(|(a, b)| a + b).collect();
        let spread = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 2.0 * r.residual + 1e-12);
        // the Aubry point is isolated
        let small = mane_set_estimate(&r, Some(1e-3)).unwrap().coverage;
        let smaller = mane_set_estimate(&r, Some(1e-6)).unwrap().coverage;
        assert!(smaller <= small && small < 0.05);
        assert!(mane_set_estimate(&r, None).unwrap().coverage < 1.0);
        // semiconcavity constant stable under refinement
        let coarse = weak_kam_solve(&pendulum(1.0), [0.0; 2], &Discretization::new(256, 0.2), &opts()).unwrap();
        let (c1, c2) = (semiconcavity_constant(&coarse.u_minus), semiconcavity_constant(&r.u_minus));
        assert!(c1.is_finite() && ((c1 - c2) / c2).abs() <= 0.25, "{c1} {c2}");
    }

    /// Energy with mean rotational momentum `c`, by bisection on Simpson quadrature.
    fn rotation_energy(lambda: f64, c: f64) -> f64 {
        let mean = |e: f64| {
            let n = 2000;
            let h = 2.0 * PI / n as f64;
            let f = |x: f64| (2.0 * (e - lambda * (x.cos() - 1.0))).sqrt();
            let mut s = f(0.0) + f(2.0 * PI);
            for k in 1..n {
                s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            s * h / 3.0 / (2.0 * PI)
        };
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if mean(m) < c {
                lo = m;
            } else {
                hi = m;
            }
        }
        lo
    }

    #[test]
    fn rotational_critical_value() {
        let d = Discretization::new(512, 0.2);
        let r = weak_kam_solve(&pendulum(1.0), [2.0, 0.0], &d, &opts()).unwrap();
        let want = rotation_energy(1.0, 2.0);
        assert!(((r.alpha - want) / want).abs() < 0.01, "{} {want}", r.alpha);
        assert!(r.alpha_bounds.0 <= r.alpha && r.alpha <= r.alpha_bounds.1);
    }

    #[test]
    fn pendulum_flat_half_width() {
        let d = Discretization::new(512, 0.2);
        for lambda in [1.0, 4.0] {
            let w = flat_radius(&pendulum(lambda), [1.0, 0.0], &d, &opts(), &FlatOptions::default()).unwrap();
            let want = lambda.sqrt() * 4.0 / PI;
            assert!(((w - want) / want).abs() < 0.03, "{lambda} {w} {want}");
        }
    }

    #[test]
    fn alpha_scan_is_convex_with_flat() {
        let d = Discretization::new(512, 0.2);
        let grid = ClassGrid { lo: [-2.5, 0.0], hi: [2.5, 0.0], n: [11, 1] };
        let s = alpha_scan(&pendulum(1.0), &grid, &d, &opts(), 2e-3).unwrap();
        assert!(s.convex_within_resolution(), "{} {}", s.convexity_defect, s.grid_tolerance);
        // classes 0, ±0.5, ±1.0 lie inside the flat of half-width 4/π
        assert_eq!(s.flat.len(), 5, "{:?}", s.flat);
        let free = alpha_scan(&Lagrangian::free(1).unwrap(), &grid, &d, &opts(), 1e-9).unwrap();
        assert_eq!(free.flat, vec![[0.0, 0.0]]);
    }

    #[test]
    fn semigroup_is_monotone_and_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let one = (pendulum(1.0), Discretization::new(48, 0.3), [0.7, 0.0]);
        let sys = MechanicalSystem::pendulums(2.0, 1.0, crate::dynamics::TrigPoly2::new(vec![([1, 1], 1.0, 0.0)]), 0.1).unwrap();
        let two = (Lagrangian::from_system(&sys).unwrap(), Discretization::new(10, 0.4), [0.3, -0.45]);
        for (l, d, c) in [one, two] {
            let op = Bellman::new(&l, c, &d, default_window(&l, c, &d)).unwrap();
            let size = d.n.pow(l.dims as u32);
            for _ in 0..500 {
                let u: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let bump: Vec<f64> = (0..size).map(|_| rng.gen_range(0.0..0.5)).collect();
                let v: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b).collect();
                let w: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (tu, tv, tw) = (op.apply(&u).0, op.apply(&v).0, op.apply(&w).0);
                assert!(tu.iter().zip(&tv).all(|(a, b)| a <= b));
                let d_in = u.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let d_out = tu.iter().zip(&tw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(d_out <= d_in + 1e-12);
            }
        }
    }

    #[test]
    fn window_grows_when_minimizers_hit_it() {
        let d = Discretization::new(128, 0.2);
        let l = pendulum(1.0);
        let mut u = d.zeros(&l);
        u.values.iter_mut().enumerate().for_each(|(i, v)| *v = if i == 64 { -10.0 } else { 0.0 });
        let (_, hit) = Bellman::new(&l, [0.0; 2], &d, 2).unwrap().apply(&u.values);
        assert!(hit);
        let wide = Bellman::new(&l, [0.0; 2], &d, 64).unwrap().apply(&u.values).0;
        assert_eq!(lax_oleinik_step(&u, &l, [0.0; 2], &d).unwrap().values, wide);
    }

    #[test]
    fn uncoupled_flat_is_a_rectangle() {
        let sys = MechanicalSystem::pendulums(4.0, 1.0, crate::dynamics::TrigPoly2::default(), 0.0).unwrap();
        let l = Lagrangian::from_system(&sys).unwrap();
        let fit = fit_flat(&l, &Discretization::new(32, 0.4), &opts(), &FlatOptions::default()).unwrap();
        assert_eq!(fit.polygon.kind, crate::action::PolygonKind::Rectangle);
        let w = [fit.support[0].1, fit.support[1].1];
        assert!(((w[0] - 8.0 / PI) / (8.0 / PI)).abs() < 0.06 && ((w[1] - 4.0 / PI) / (4.0 / PI)).abs() < 0.06, "{w:?}");
        assert!(fit.polygon.symmetry_defect < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lagrangian::mechanical([[1.0, 0.0], [0.0, -1.0]], |_| 0.0).is_err());
        let d = Discretization::new(16, 0.2);
        assert!(Bellman::new(&pendulum(1.0), [0.0, 1.0], &d, 3).is_err());
        let other = GridFunction::zeros_periodic(vec![8], &[2.0 * PI]);
        assert!(barrier(&d.zeros(&pendulum(1.0)), &other).is_err());
        assert!(weak_kam_solve(&pendulum(1.0), [3.0, 0.0], &d, &SolveOptions { tol: 1e-12, max_iter: 3 }).is_err());
    }
}
