//! Actions of corner passages in the linear model near the saddle, homology decomposition and
//! the geometry of the flat polygon.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{bail, Result};
use crate::normalform::TrigPoly;

/// Passage of the linear saddle `L̄ = Σ (Vᵢ² + λᵢ²Xᵢ²)/(2λᵢ)` from `entry` to `exit` in time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerActionInput {
    pub lambda: [f64; 2],
    pub entry: [f64; 2],
    pub exit: [f64; 2],
    pub t: f64,
}

impl CornerActionInput {
    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            bail!(Action, "transit time must be positive, got {}", self.t);
        }
        if self.lambda.iter().any(|l| !(*l > 0.0)) {
            bail!(Action, "exponents must be positive, got {:?}", self.lambda);
        }
        if self.entry == [0.0; 2] || self.exit == [0.0; 2] {
            bail!(Action, "boundary points must be nonzero");
        }
        Ok(())
    }

    /// Entry and exit lie on opposite sides of the corner in every coordinate, as for an orbit
    /// that passes by it. The through action beats the broken one exactly in this case.
    pub fn passes_through(&self) -> bool {
        (0..2).all(|i| self.entry[i] * self.exit[i] <= 0.0)
    }

    /// Position on the Euler-Lagrange solution `Ẍᵢ = λᵢ²Xᵢ` joining the boundary points.
    pub fn position(&self, s: f64) -> [f64; 2] {
        let f = |i: usize| {
            let l = self.lambda[i];
            (self.entry[i] * (l * (self.t - s)).sinh() + self.exit[i] * (l * s).sinh()) / (l * self.t).sinh()
        };
        [f(0), f(1)]
    }

    pub fn velocity(&self, s: f64) -> [f64; 2] {
        let f = |i: usize| {
            let l = self.lambda[i];
            l * (-self.entry[i] * (l * (self.t - s)).cosh() + self.exit[i] * (l * s).cosh()) / (l * self.t).sinh()
        };
        [f(0), f(1)]
    }
}

pub fn lagrangian(lambda: [f64; 2], x: [f64; 2], v: [f64; 2]) -> f64 {
    (0..2).map(|i| (v[i] * v[i] + lambda[i] * lambda[i] * x[i] * x[i]) / (2.0 * lambda[i])).sum()
}

/// Action of the smooth passage. Per coordinate it is `((a² + b²)·cosh λT − 2ab)/(2 sinh λT)`;
/// when the entry sits on the first axis and the exit on the second this is
/// `|entry|²/2·coth λ₁T + |exit|²/2·coth λ₂T`.
pub fn through_action(input: &CornerActionInput) -> Result<f64> {
    // split as broken + excess: the excess is tiny for long transits and must not be lost
    Ok(broken_action(input) + passage_excess(input)?)
}

/// Action of the broken path: fall into the saddle along the stable direction, leave along the
/// unstable one, each in infinite time.
pub fn broken_action(input: &CornerActionInput) -> f64 {
    let n = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
    0.5 * (n(input.entry) + n(input.exit))
}

/// `through_action − broken_action`, evaluated without cancellation so long transits stay positive.
pub fn passage_excess(input: &CornerActionInput) -> Result<f64> {
    input.validate()?;
    Ok((0..2)
        .map(|i| {
            let (a, b, lt) = (input.entry[i], input.exit[i], input.lambda[i] * input.t);
            let e = (-2.0 * lt).exp();
            0.5 * ((a * a + b * b) * 2.0 * e - 2.0 * a * b * 2.0 * (-lt).exp()) / (1.0 - e)
        })
        .sum())
}

/// Composite Simpson integral of the Lagrangian along a path on `[t0, t1]`.
pub fn path_action(lambda: [f64; 2], path: &dyn Fn(f64) -> ([f64; 2], [f64; 2]), t0: f64, t1: f64, panels: usize) -> f64 {
    let n = 2 * panels.max(1);
    let h = (t1 - t0) / n as f64;
    let f = |k: usize| {
        let (x, v) = path(t0 + k as f64 * h);
        lagrangian(lambda, x, v)
    };
    let mut s = f(0) + f(n);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    s * h / 3.0
}

/// Both actions by quadrature along their explicit paths.
pub fn quadrature_actions(input: &CornerActionInput) -> Result<(f64, f64)> {
    input.validate()?;
    let through = path_action(input.lambda, &|s| (input.position(s), input.velocity(s)), 0.0, input.t, 20_000);
    let mut broken = 0.0;
    for i in 0..2 {
        let l = input.lambda[i];
        let horizon = 40.0 / l;
        let mut lam = [1.0; 2];
        lam[i] = l;
        for p in [input.entry[i], input.exit[i]] {
            // e^{-λs} decay into the corner (or its reverse out of it); one coordinate at a time
            let path = |s: f64| {
                let mut x = [0.0; 2];
                let mut v = [0.0; 2];
                x[i] = p * (-l * s).exp();
                v[i] = -l * x[i];
                (x, v)
            };
            broken += path_action(lam, &path, 0.0, horizon, 20_000);
        }
    }
    Ok((through, broken))
}

/// The eight classes every class splits into.
pub const IRREDUCIBLE: [[i64; 2]; 8] = [[1, 0], [0, 1], [-1, 0], [0, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]];

/// Peel off `(sign n₁, sign n₂)` until nothing is left.
pub fn decompose_homology(n: [i64; 2]) -> Result<Vec<[i64; 2]>> {
    if n == [0, 0] {
        bail!(Action, "the zero class has no decomposition");
    }
    let mut rest = n;
    let mut out = vec![];
    while rest != [0, 0] {
        let g = [rest[0].signum(), rest[1].signum()];
        out.push(g);
        rest = [rest[0] - g[0], rest[1] - g[1]];
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolygonKind {
    Rectangle,
    Hexagon,
    Octagon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatPolygon {
    /// Counter-clockwise vertices.
    pub vertices: Vec<[f64; 2]>,
    pub kind: PolygonKind,
    /// Classes whose constraint touches the polygon in a single point.
    pub degenerate: Vec<[i64; 2]>,
    /// Classes carrying an edge of positive length.
    pub active: Vec<[i64; 2]>,
    /// Largest `|⟨g, c − c′⟩|` between endpoints of the same edge.
    pub edge_defect: f64,
    /// Largest distance between a vertex and the reflection of another.
    pub symmetry_defect: f64,
}

impl FlatPolygon {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("c1,c2\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{:.12},{:.12}", v[0], v[1]);
        }
        s
    }

    pub fn contains(&self, c: [f64; 2], tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) >= -tol
        })
    }
}

/// Flat as `{c : ⟨g, c⟩ ≤ c_g}` over the given classes, which must come in `±g` pairs with equal values.
pub fn flat_polygon(edges: &[([i64; 2], f64)]) -> Result<FlatPolygon> {
    let scale = edges.iter().map(|e| e.1.abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-9 * scale;
    for &(g, v) in edges {
        if !IRREDUCIBLE.contains(&g) {
            bail!(Action, "class {g:?} is not irreducible");
        }
        if !(v > 0.0) {
            bail!(Action, "critical value of {g:?} must be positive, got {v}");
        }
        match edges.iter().find(|e| e.0 == [-g[0], -g[1]]) {
            Some(o) if (o.1 - v).abs() <= tol => {}
            _ => bail!(Action, "constraints are not centrally symmetric at {g:?}"),
        }
    }
    let mut pts: Vec<[f64; 2]> = vec![];
    for (i, &(g, u)) in edges.iter().enumerate() {
        for &(h, w) in &edges[i + 1..] {
            let det = (g[0] * h[1] - g[1] * h[0]) as f64;
            if det == 0.0 {
                continue;
            }
            let c = [(u * h[1] as f64 - w * g[1] as f64) / det, (g[0] as f64 * w - h[0] as f64 * u) / det];
            let inside = edges.iter().all(|&(k, kv)| (k[0] as f64 * c[0] + k[1] as f64 * c[1]) <= kv + tol);
            if inside && !pts.iter().any(|p| (p[0] - c[0]).hypot(p[1] - c[1]) <= tol) {
                pts.push(c);
            }
        }
    }
    if pts.len() < 3 {
        bail!(Action, "constraints do not bound a polygon with interior");
    }
    let centroid = [pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64, pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64];
    pts.sort_by(|a, b| {
        let ta = (a[1] - centroid[1]).atan2(a[0] - centroid[0]);
        let tb = (b[1] - centroid[1]).atan2(b[0] - centroid[0]);
        ta.total_cmp(&tb)
    });
    let kind = match pts.len() {
        4 => PolygonKind::Rectangle,
        6 => PolygonKind::Hexagon,
        8 => PolygonKind::Octagon,
        n => bail!(Action, "flat with {n} vertices; only 4, 6 or 8 are possible"),
    };
    let mut active = vec![];
    let mut degenerate = vec![];
    let mut edge_defect: f64 = 0.0;
    for &(g, v) in edges {
        let on: Vec<&[f64; 2]> = pts.iter().filter(|p| (g[0] as f64 * p[0] + g[1] as f64 * p[1] - v).abs() <= tol).collect();
        match on.len() {
            0 => {}
            1 => degenerate.push(g),
            _ => {
                active.push(g);
                for p in &on[1..] {
                    edge_defect = edge_defect.max((g[0] as f64 * (p[0] - on[0][0]) + g[1] as f64 * (p[1] - on[0][1])).abs());
                }
            }
        }
    }
    let symmetry_defect = pts
        .iter()
        .map(|p| pts.iter().map(|q| (p[0] + q[0]).hypot(p[1] + q[1])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(FlatPolygon { vertices: pts, kind, degenerate, active, edge_defect, symmetry_defect })
}

/// Mean separatrix momentum `(1/2π)∫√(2(−Z)/a)` over a period; half-width of the flat along that axis.
pub fn separatrix_c_value(z: &TrigPoly, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        bail!(Action, "kinetic coefficient must be positive");
    }
    let n = 8192;
    let h = 2.0 * PI / n as f64;
    let zs: Vec<f64> = (0..=n).map(|k| z.eval(k as f64 * h)).collect();
    if let Some(k) = zs.iter().position(|v| *v > 1e-12) {
        bail!(Action, "potential is positive at x = {}", k as f64 * h);
    }
    let f = |k: usize| (2.0 * (-zs[k]).max(0.0) / a).sqrt();
    let mut s = f(0) + f(n);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    Ok(s * h / 3.0 / (2.0 * PI))
}
