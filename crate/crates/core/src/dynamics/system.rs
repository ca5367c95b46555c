//! The mechanical model `H = ½⟨Y, AY⟩ + ⟨d, Y⟩ + Z₁(X₁) + Z₂(X₂) + εZ₃(X₁, X₂) + ϵR(X, S)`.

use std::f64::consts::PI;

use crate::error::{bail, Result};
use crate::normalform::TrigPoly;

/// `Σ a cos⟨n, X⟩ + b sin⟨n, X⟩` on `T²`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigPoly2 {
    pub terms: Vec<([i64; 2], f64, f64)>,
}

impl TrigPoly2 {
    pub fn new(terms: Vec<([i64; 2], f64, f64)>) -> Self {
        TrigPoly2 { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0 && t.2 == 0.0)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|&(n, a, b)| {
                let ph = n[0] as f64 * x[0] + n[1] as f64 * x[1];
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(n, a, b) in &self.terms {
            let ph = n[0] as f64 * x[0] + n[1] as f64 * x[1];
            let d = b * ph.cos() - a * ph.sin();
            g[0] += n[0] as f64 * d;
            g[1] += n[1] as f64 * d;
        }
        g
    }

    pub fn hess(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for &(n, a, b) in &self.terms {
            let ph = n[0] as f64 * x[0] + n[1] as f64 * x[1];
            let v = -(a * ph.cos() + b * ph.sin());
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (n[i] * n[j]) as f64 * v;
                }
            }
        }
        h
    }

    /// `Σ |n|∞²·√(a² + b²)`.
    pub fn c2_mass(&self) -> f64 {
        self.terms.iter().map(|&(n, a, b)| (n[0].abs().max(n[1].abs()).pow(2)) as f64 * a.hypot(b)).sum()
    }

    /// `Σ √(a² + b²)` over nonconstant modes.
    pub fn c0_mass(&self) -> f64 {
        self.terms.iter().filter(|t| t.0 != [0, 0]).map(|t| t.1.hypot(t.2)).sum()
    }

    pub fn scale(&self, s: f64) -> TrigPoly2 {
        TrigPoly2 { terms: self.terms.iter().map(|&(n, a, b)| (n, s * a, s * b)).collect() }
    }
}

/// Time-periodic perturbation `ϵ·Σ a cos(⟨n, X⟩ + k·2πS) + b sin(…)` with period 1 in `S`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tail {
    pub amplitude: f64,
    pub terms: Vec<([i64; 3], f64, f64)>,
}

impl Tail {
    fn phase(n: [i64; 3], x: [f64; 2], s: f64) -> f64 {
        n[0] as f64 * x[0] + n[1] as f64 * x[1] + n[2] as f64 * 2.0 * PI * s
    }

    pub fn eval(&self, x: [f64; 2], s: f64) -> f64 {
        self.amplitude * self.terms.iter().map(|&(n, a, b)| a * Self::phase(n, x, s).cos() + b * Self::phase(n, x, s).sin()).sum::<f64>()
    }

    pub fn grad(&self, x: [f64; 2], s: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(n, a, b) in &self.terms {
            let ph = Self::phase(n, x, s);
            let d = self.amplitude * (b * ph.cos() - a * ph.sin());
            g[0] += n[0] as f64 * d;
            g[1] += n[1] as f64 * d;
        }
        g
    }

    pub fn hess(&self, x: [f64; 2], s: f64) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for &(n, a, b) in &self.terms {
            let ph = Self::phase(n, x, s);
            let v = -self.amplitude * (a * ph.cos() + b * ph.sin());
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += (n[i] * n[j]) as f64 * v;
                }
            }
        }
        h
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || self.terms.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanicalSystem {
    /// Kinetic form, symmetric positive definite.
    pub a: [[f64; 2]; 2],
    pub z1: TrigPoly,
    pub z2: TrigPoly,
    pub z3: TrigPoly2,
    pub eps: f64,
    pub tail: Option<Tail>,
    /// Linear momentum term `⟨d, Y⟩`.
    pub drift: [f64; 2],
}

impl MechanicalSystem {
    pub fn new(a: [[f64; 2]; 2], z1: TrigPoly, z2: TrigPoly, z3: TrigPoly2, eps: f64) -> Result<Self> {
        let sys = MechanicalSystem { a, z1, z2, z3, eps, tail: None, drift: [0.0; 2] };
        sys.validate()?;
        Ok(sys)
    }

    /// `Zᵢ = cᵢ(cos Xᵢ − 1)` with `A = I`, plus `εZ₃`.
    pub fn pendulums(c1: f64, c2: f64, z3: TrigPoly2, eps: f64) -> Result<Self> {
        let pend = |c: f64| TrigPoly::new(vec![(0, -c, 0.0), (1, c, 0.0)]);
        Self::new([[1.0, 0.0], [0.0, 1.0]], pend(c1), pend(c2), z3, eps)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.a;
        if (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][1].abs() + 1.0) {
            bail!(Dynamics, "kinetic matrix must be symmetric");
        }
        if !(a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0) {
            bail!(Dynamics, "kinetic matrix must be positive definite");
        }
        let finite = |p: &TrigPoly| p.terms.iter().all(|t| t.1.is_finite() && t.2.is_finite());
        if !finite(&self.z1) || !finite(&self.z2) || !self.eps.is_finite() {
            bail!(Dynamics, "potential coefficients must be finite");
        }
        Ok(())
    }

    pub fn with_tail(mut self, tail: Tail) -> Self {
        self.tail = Some(tail);
        self
    }

    pub fn is_autonomous(&self) -> bool {
        self.tail.as_ref().is_none_or(|t| t.is_zero())
    }

    pub fn kinetic(&self, y: [f64; 2]) -> f64 {
        let ay = self.a_times(y);
        0.5 * (y[0] * ay[0] + y[1] * ay[1]) + self.drift[0] * y[0] + self.drift[1] * y[1]
    }

    pub fn a_times(&self, y: [f64; 2]) -> [f64; 2] {
        [self.a[0][0] * y[0] + self.a[0][1] * y[1], self.a[1][0] * y[0] + self.a[1][1] * y[1]]
    }

    /// `∂H/∂Y`.
    pub fn velocity(&self, y: [f64; 2]) -> [f64; 2] {
        let ay = self.a_times(y);
        [ay[0] + self.drift[0], ay[1] + self.drift[1]]
    }

    /// Autonomous potential `Z₁ + Z₂ + εZ₃`.
    pub fn potential(&self, x: [f64; 2]) -> f64 {
        self.z1.eval(x[0]) + self.z2.eval(x[1]) + self.eps * self.z3.eval(x)
    }

    pub fn potential_at(&self, x: [f64; 2], s: f64) -> f64 {
        self.potential(x) + self.tail.as_ref().map_or(0.0, |t| t.eval(x, s))
    }

    pub fn grad_potential(&self, x: [f64; 2], s: f64) -> [f64; 2] {
        let g3 = self.z3.grad(x);
        let mut g = [self.z1.d1(x[0]) + self.eps * g3[0], self.z2.d1(x[1]) + self.eps * g3[1]];
        if let Some(t) = &self.tail {
            let gt = t.grad(x, s);
            g[0] += gt[0];
            g[1] += gt[1];
        }
        g
    }

    pub fn hess_potential(&self, x: [f64; 2], s: f64) -> [[f64; 2]; 2] {
        let h3 = self.z3.hess(x);
        let mut h = [
            [self.z1.d2(x[0]) + self.eps * h3[0][0], self.eps * h3[0][1]],
            [self.eps * h3[1][0], self.z2.d2(x[1]) + self.eps * h3[1][1]],
        ];
        if let Some(t) = &self.tail {
            let ht = t.hess(x, s);
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] += ht[i][j];
                }
            }
        }
        h
    }

    pub fn energy(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.kinetic(y) + self.potential(x)
    }

    pub fn energy_at(&self, x: [f64; 2], y: [f64; 2], s: f64) -> f64 {
        self.kinetic(y) + self.potential_at(x, s)
    }

    /// The system without the coupling and the tail.
    pub fn uncoupled(&self) -> MechanicalSystem {
        MechanicalSystem { z3: TrigPoly2::default(), eps: 0.0, tail: None, ..self.clone() }
    }
}
