//! The hyperbolic maximum of the potential, its linear normal form and non-resonance checks.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};

use super::integrate::Tangent;
use super::system::MechanicalSystem;
use crate::error::{bail, Result};

const SCAN: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperbolicData {
    /// Position of the maximum; the momentum is zero there.
    pub fixed_point: [f64; 2],
    pub lambda1: f64,
    pub lambda2: f64,
    /// Unstable (λ₁, λ₂) then stable (λ₁, λ₂) eigenvectors in `(X₁, X₂, Y₁, Y₂)`.
    pub eigvecs: [[f64; 4]; 4],
    pub local_radius: f64,
    /// Value of the potential at the maximum.
    pub max_value: f64,
    /// Kinetic form and its Cholesky factor, cached for the normal form.
    a: Matrix2<f64>,
    chol: Matrix2<f64>,
    rot: Matrix2<f64>,
}

impl HyperbolicData {
    pub fn ratio(&self) -> f64 {
        self.lambda1 / self.lambda2
    }

    /// Gap condition `λ₁ − λ₂ ≥ c₈` and `λ₁/λ₂ ≥ 1 + c₉`.
    pub fn gaps_hold(&self, c8: f64, c9: f64) -> bool {
        self.lambda1 - self.lambda2 >= c8 && self.ratio() >= 1.0 + c9
    }

    /// Symmetric `Σ` with `Y = Σ(X − X*)` on the linear unstable plane; `−Σ` spans the stable one.
    pub fn unstable_slope(&self) -> [[f64; 2]; 2] {
        let v = self.chol * self.rot;
        let lam = Matrix2::new(self.lambda1, 0.0, 0.0, self.lambda2);
        let s = self.a.try_inverse().unwrap() * v * lam * v.try_inverse().unwrap();
        [[s[(0, 0)], 0.5 * (s[(0, 1)] + s[(1, 0)])], [0.5 * (s[(0, 1)] + s[(1, 0)]), s[(1, 1)]]]
    }
}

/// Locates the global maximum of the autonomous potential and linearizes there.
pub fn hyperbolic_fixed_point(sys: &MechanicalSystem, local_radius: f64) -> Result<HyperbolicData> {
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for i in 0..SCAN {
        for j in 0..SCAN {
            let x = [2.0 * PI * i as f64 / SCAN as f64 - PI, 2.0 * PI * j as f64 / SCAN as f64 - PI];
            let v = sys.potential(x);
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    let mut x = best.0;
    for _ in 0..50 {
        let g = sys.grad_potential(x, 0.0);
        let h = Matrix2::from_fn(|i, j| sys.hess_potential(x, 0.0)[i][j]);
        let Some(inv) = h.try_inverse() else { break };
        let dx = inv * nalgebra::Vector2::new(g[0], g[1]);
        x = [x[0] - dx[0], x[1] - dx[1]];
        if dx.norm() < 1e-15 {
            break;
        }
    }
    let g = sys.grad_potential(x, 0.0);
    if g[0].hypot(g[1]) > 1e-10 {
        bail!(Dynamics, "critical point polish did not converge near {:?}", best.0);
    }
    let hv = sys.hess_potential(x, 0.0);
    let k = Matrix2::new(-hv[0][0], -hv[0][1], -hv[1][0], -hv[1][1]);
    let a = Matrix2::from_fn(|i, j| sys.a[i][j]);
    let chol = a.cholesky().expect("kinetic form validated").l();
    // A·K is similar to Lᵀ K L, which is symmetric
    let sym = chol.transpose() * k * chol;
    let eig = SymmetricEigen::new(0.5 * (sym + sym.transpose()));
    let mut order = [0usize, 1];
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let (m1, m2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(m2 > 0.0) {
        bail!(Dynamics, "maximum at {x:?} is not hyperbolic: A·(−Hess V) has eigenvalue {m2}");
    }
    let rot = Matrix2::from_columns(&[eig.eigenvectors.column(order[0]).into_owned(), eig.eigenvectors.column(order[1]).into_owned()]);
    let lam = [m1.sqrt(), m2.sqrt()];
    let v = chol * rot;
    let ainv = a.try_inverse().unwrap();
    let mut eigvecs = [[0.0; 4]; 4];
    for i in 0..2 {
        let col = v.column(i).normalize();
        let p = ainv * col * lam[i];
        eigvecs[i] = [col[0], col[1], p[0], p[1]];
        eigvecs[i + 2] = [col[0], col[1], -p[0], -p[1]];
    }
    Ok(HyperbolicData {
        fixed_point: x,
        lambda1: lam[0],
        lambda2: lam[1],
        eigvecs,
        local_radius,
        max_value: sys.potential(x),
        a,
        chol,
        rot,
    })
}

/// Linear symplectic coordinates `(Q, P)` around the fixed point in which the quadratic part of
/// `H` reads `Σ λᵢ(Pᵢ² − Qᵢ²)/2`. The eigen-coordinates `((Q+P)/√2, (P−Q)/√2)` are one rotation away.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLinearForm {
    pub center: [f64; 2],
    pub lambda: [f64; 2],
    /// `(δX, δY) ↦ (Q₁, Q₂, P₁, P₂)`.
    pub to_qp: Tangent,
    pub from_qp: Tangent,
}

pub fn local_linear_form(h: &HyperbolicData) -> LocalLinearForm {
    let lam = [h.lambda1, h.lambda2];
    // ξ = Rᵀ L⁻¹ δX, η = Rᵀ Lᵀ δY, then Q = √λ ξ, P = η/√λ
    let b = h.rot.transpose() * h.chol.try_inverse().unwrap();
    let bt = h.rot.transpose() * h.chol.transpose();
    let binv = h.chol * h.rot;
    let btinv = bt.try_inverse().unwrap();
    let mut to = [[0.0; 4]; 4];
    let mut from = [[0.0; 4]; 4];
    for i in 0..2 {
        let s = lam[i].sqrt();
        for j in 0..2 {
            to[i][j] = s * b[(i, j)];
            to[i + 2][j + 2] = bt[(i, j)] / s;
            from[j][i] = binv[(j, i)] / s;
            from[j + 2][i + 2] = btinv[(j, i)] * s;
        }
    }
    LocalLinearForm { center: h.fixed_point, lambda: lam, to_qp: to, from_qp: from }
}

impl LocalLinearForm {
    pub fn to_normal(&self, x: [f64; 2], y: [f64; 2]) -> [f64; 4] {
        let d = [x[0] - self.center[0], x[1] - self.center[1], y[0], y[1]];
        std::array::from_fn(|i| (0..4).map(|k| self.to_qp[i][k] * d[k]).sum())
    }

    pub fn from_normal(&self, w: [f64; 4]) -> ([f64; 2], [f64; 2]) {
        let d: [f64; 4] = std::array::from_fn(|i| (0..4).map(|k| self.from_qp[i][k] * w[k]).sum());
        ([self.center[0] + d[0], self.center[1] + d[1]], [d[2], d[3]])
    }

    pub fn quadratic(&self, w: [f64; 4]) -> f64 {
        0.5 * (self.lambda[0] * (w[2] * w[2] - w[0] * w[0]) + self.lambda[1] * (w[3] * w[3] - w[1] * w[1]))
    }

    /// Hessian of `H` at the fixed point in `(Q, P)` coordinates.
    pub fn hessian(&self, sys: &MechanicalSystem) -> Matrix4<f64> {
        let hv = sys.hess_potential(self.center, 0.0);
        let mut old = Matrix4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                old[(i, j)] = hv[i][j];
                old[(i + 2, j + 2)] = sys.a[i][j];
            }
        }
        let t = Matrix4::from_fn(|i, j| self.from_qp[i][j]);
        t.transpose() * old * t
    }

    /// Re-extracts the exponents from the transformed Hessian (positive real parts of `J·Hess`).
    pub fn rediagonalize(&self, sys: &MechanicalSystem) -> [f64; 2] {
        let h = self.hessian(sys);
        let mut j = Matrix4::zeros();
        j[(0, 2)] = 1.0;
        j[(1, 3)] = 1.0;
        j[(2, 0)] = -1.0;
        j[(3, 1)] = -1.0;
        let mut ev: Vec<f64> = (j * h).complex_eigenvalues().iter().map(|c| c.re).filter(|r| *r > 0.0).collect();
        ev.sort_by(|p, q| q.total_cmp(p));
        [ev.first().copied().unwrap_or(0.0), ev.get(1).copied().unwrap_or(0.0)]
    }

    /// Largest `|H − H(0) − quadratic|` over the sampled ball of radius `r`, relative to the
    /// largest quadratic value there.
    pub fn residual(&self, sys: &MechanicalSystem, r: f64) -> f64 {
        let h0 = sys.energy(self.center, [0.0; 2]);
        let (mut num, mut den) = (0.0f64, 0.0f64);
        let n = 24;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    // hyperspherical angles on the sphere of radius r
                    let (t1, t2, t3) = (PI * (a as f64 + 0.5) / n as f64, PI * (b as f64 + 0.5) / n as f64, 2.0 * PI * c as f64 / n as f64);
                    let w = [
                        r * t1.cos(),
                        r * t1.sin() * t2.cos(),
                        r * t1.sin() * t2.sin() * t3.cos(),
                        r * t1.sin() * t2.sin() * t3.sin(),
                    ];
                    let (x, y) = self.from_normal(w);
                    let q = self.quadratic(w);
                    num = num.max((sys.energy(x, y) - h0 - q).abs());
                    den = den.max(q.abs());
                }
            }
        }
        num / den
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct U5Report {
    pub k: u32,
    /// First `(m₁−m₂, m₃−m₄)` with a vanishing combination, if any.
    pub violation: Option<(i64, i64)>,
    pub min_abs: f64,
    pub pass: bool,
}

/// Scans `(m₁−m₂)λ₁ + (m₃−m₄)λ₂` over nonnegative `m` with `|m| ≤ k`, `m₁ ≠ m₂`, `m₃ ≠ m₄`.
/// A value below `1e−9` counts as a resonance; this is a numerical certificate only.
pub fn check_u5prime(lambda1: f64, lambda2: f64, k: u32) -> U5Report {
    let k = k as i64;
    let mut best = (f64::INFINITY, None);
    // with a = m₁−m₂ and b = m₃−m₄, the cheapest m has |m| = |a| + |b|
    for s in 2..=k {
        for a in -(s - 1)..=(s - 1) {
            let rest = s - a.abs();
            if a == 0 || rest == 0 {
                continue;
            }
            for b in [rest, -rest] {
                let v = (a as f64 * lambda1 + b as f64 * lambda2).abs();
                if v < best.0 {
                    best = (v, Some((a, b)));
                }
                if v <= 1e-9 {
                    return U5Report { k: k as u32, violation: Some((a, b)), min_abs: v, pass: false };
                }
            }
        }
    }
    U5Report { k: k as u32, violation: None, min_abs: best.0, pass: true }
}
