//! Extrema of one-variable trigonometric polynomials.

use std::f64::consts::PI;

use crate::error::{bail, Result};
use crate::fourier::FourierSeq;
use crate::resonance::{max_norm, IVec3};

/// `Σ a cos(n x) + b sin(n x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    pub terms: Vec<(i64, f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
    pub second: f64,
    pub is_max: bool,
}

/// Points per period in the derivative scan.
pub const SCAN_POINTS: usize = 10_000;
/// Second derivatives below this fraction of the C² mass count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl TrigPoly {
    pub fn new(terms: Vec<(i64, f64, f64)>) -> Self {
        TrigPoly { terms }
    }

    /// Restrict a series supported on multiples of one primitive vector to the variable
    /// `x = ⟨d, θ⟩`. Returns the polynomial and `d`.
    pub fn from_series(f: &FourierSeq) -> Result<(TrigPoly, IVec3)> {
        let dir = f
            .iter()
            .map(|(k, _)| *k)
            .find(|k| *k != [0, 0, 0])
            .map(|k| {
                let g = gcd(gcd(k[0], k[1]), k[2]);
                k.map(|x| x / g)
            })
            .unwrap_or([1, 0, 0]);
        Ok((Self::along(f, dir)?, dir))
    }

    pub fn along(f: &FourierSeq, dir: IVec3) -> Result<TrigPoly> {
        let dn = max_norm(dir);
        if dn == 0 {
            bail!(NormalForm, "direction must be nonzero");
        }
        let mut terms = Vec::new();
        for (&k, &(a, b)) in f.iter() {
            let i = (0..3).find(|&i| dir[i] != 0).unwrap();
            let n = k[i] / dir[i];
            if dir.map(|x| x * n) != k {
                bail!(NormalForm, "mode {:?} is not a multiple of {:?}", k, dir);
            }
            terms.push((n, a, b));
        }
        Ok(TrigPoly { terms })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(n, a, b)| a * (n as f64 * x).cos() + b * (n as f64 * x).sin()).sum()
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(n, a, b)| {
                let n = n as f64;
                n * (b * (n * x).cos() - a * (n * x).sin())
            })
            .sum()
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(n, a, b)| {
                let n = n as f64;
                -n * n * (a * (n * x).cos() + b * (n * x).sin())
            })
            .sum()
    }

    /// `Σ n²·√(a² + b²)`.
    pub fn c2_mass(&self) -> f64 {
        self.terms.iter().map(|&(n, a, b)| (n * n) as f64 * a.hypot(b)).sum()
    }

    /// Curvature below which a critical point is treated as degenerate.
    pub fn degeneracy_floor(&self) -> f64 {
        DEGENERACY_TOL * self.c2_mass()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(n, a, b)| n == 0 || (a == 0.0 && b == 0.0))
    }

    /// All strict local extrema on `[0, 2π)`: sign changes of the derivative on a dense scan,
    /// each polished by bisection to width `1e−12`.
    pub fn extrema(&self, scan: usize) -> Vec<Extremum> {
        if self.is_constant() {
            return Vec::new();
        }
        let h = 2.0 * PI / scan as f64;
        // offset the nodes so symmetric critical points do not land on them
        let x0 = 0.381_966_011_250_105 * h;
        let ds: Vec<f64> = (0..=scan).map(|i| self.d1(x0 + i as f64 * h)).collect();
        let mut out: Vec<Extremum> = Vec::new();
        for i in 0..scan {
            let (a, b) = (ds[i], ds[i + 1]);
            // a zero exactly on a node is claimed by the interval ending there
            let is_max = a > 0.0 && b <= 0.0;
            let is_min = a < 0.0 && b >= 0.0;
            if !is_max && !is_min {
                continue;
            }
            let (mut lo, mut hi) = (x0 + i as f64 * h, x0 + (i + 1) as f64 * h);
            let sign_lo = a.signum();
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                let d = self.d1(mid);
                if d == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if d.signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let x = (0.5 * (lo + hi)).rem_euclid(2.0 * PI);
            out.push(Extremum { x, value: self.eval(x), second: self.d2(x), is_max });
        }
        out
    }

    /// Global maximizers (or minimizers) within `tol` of the extreme value.
    pub fn global(&self, maxima: bool, tol: f64) -> Vec<Extremum> {
        let ex: Vec<Extremum> = self.extrema(SCAN_POINTS).into_iter().filter(|e| e.is_max == maxima).collect();
        let sign = if maxima { 1.0 } else { -1.0 };
        let best = ex.iter().map(|e| sign * e.value).fold(f64::NEG_INFINITY, f64::max);
        ex.into_iter().filter(|e| sign * e.value >= best - tol).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_harmonics() {
        let p = TrigPoly::new(vec![(1, 1.0, 0.0), (2, 1.0, 0.0)]);
        let top = p.global(true, 1e-10);
        assert_eq!(top.len(), 1);
        let x = if top[0].x > PI { top[0].x - 2.0 * PI } else { top[0].x };
        assert!(x.abs() < 1e-11);
        assert!((top[0].second + 5.0).abs() < 1e-9);
        // brute force 10⁵-point scan agrees on the value
        let brute = (0..100_000).map(|i| p.eval(2.0 * PI * i as f64 / 1e5)).fold(f64::NEG_INFINITY, f64::max);
        assert!((brute - top[0].value).abs() < 1e-8);
    }

    #[test]
    fn double_maximum() {
        let p = TrigPoly::new(vec![(2, 1.0, 0.0)]);
        assert_eq!(p.global(true, 1e-10).len(), 2);
        assert_eq!(p.global(false, 1e-10).len(), 2);
    }

    #[test]
    fn along_direction() {
        let f = FourierSeq::new(8, 1.0).with([2, -4, 0], 0.5, 0.0).with([-1, 2, 0], 0.0, 1.0);
        let (p, d) = TrigPoly::from_series(&f).unwrap();
        assert_eq!(d, [1, -2, 0]);
        for x in [0.1, 1.3, 4.0] {
            assert!((p.eval(x) - f.eval([x, 0.0, 0.0])).abs() < 1e-14);
        }
        let mixed = f.with([0, 1, 0], 1.0, 0.0);
        assert!(TrigPoly::from_series(&mixed).is_err());
    }
}
