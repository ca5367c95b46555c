//! Diophantine frequencies, the l-adic resonant plan and its integer lattices.

pub mod lattice;
mod plan;

pub use lattice::{max_norm, maximal_reduce, IVec3, Lattice};
pub use plan::{
    build_plan, build_plan_exact, carry_approximants, lattice_for, plan_csv, simplest_between, sub_resonances,
    verify_plan_properties, PlanIndex, PlanReport, ResonantPlan, Segment, SubResonance,
};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};
use rayon::prelude::*;

use crate::error::{bail, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineVector {
    pub omega: [f64; 2],
    pub tau: f64,
    pub c0: f64,
}

impl DiophantineVector {
    pub fn new(omega: [f64; 2], tau: f64, c0: f64) -> Result<Self> {
        if omega.iter().any(|w| !(0.0..=1.0).contains(w)) {
            bail!(Resonance, "frequency components must lie in [0, 1], got {:?}", omega);
        }
        if !(tau >= 0.0) {
            bail!(Resonance, "Diophantine exponent must be >= 0, got {tau}");
        }
        if !(c0 > 0.0) {
            bail!(Resonance, "Diophantine constant must be > 0, got {c0}");
        }
        Ok(DiophantineVector { omega, tau, c0 })
    }

    /// The frequency as exact rationals (every finite f64 is a dyadic rational).
    pub fn exact_omega(&self) -> Result<[BigRational; 2]> {
        let conv = |x: f64| match BigRational::from_f64(x) {
            Some(q) => Ok(q),
            None => Err(crate::error::Error::Resonance(format!("non-finite frequency {x}"))),
        };
        Ok([conv(self.omega[0])?, conv(self.omega[1])?])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineReport {
    pub min_margin: f64,
    pub worst_k: [i64; 2],
    pub pass: bool,
}

fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Scan all `0 < |k|∞ <= k_max` in a half-plane for the worst Diophantine margin.
pub fn diophantine_check(v: &DiophantineVector, k_max: i64) -> Result<DiophantineReport> {
    if !(v.tau >= 0.0) || !(v.c0 > 0.0) {
        bail!(Resonance, "need tau >= 0 and c0 > 0 (tau = {}, c0 = {})", v.tau, v.c0);
    }
    if k_max < 1 {
        bail!(Resonance, "k_max must be >= 1");
    }
    let [w1, w2] = v.omega;
    let p = 1.0 + v.tau;
    // (margin, |k|, negative count, k1, k2): smallest wins
    type Key = (f64, i64, u8, i64, i64);
    let better = |a: Key, b: Key| -> Key {
        let ord = a
            .0
            .total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
            .then(a.4.cmp(&b.4));
        if ord.is_le() {
            a
        } else {
            b
        }
    };
    let worst = (0..=k_max)
        .into_par_iter()
        .map(|k1| {
            let mut best: Key = (f64::INFINITY, i64::MAX, u8::MAX, 0, 0);
            let start = if k1 == 0 { 1 } else { -k_max };
            for k2 in start..=k_max {
                let norm = k1.abs().max(k2.abs());
                let margin = dist_to_int(k1 as f64 * w1 + k2 as f64 * w2) * (norm as f64).powf(p) / v.c0;
                let neg = (k1 < 0) as u8 + (k2 < 0) as u8;
                best = better(best, (margin, norm, neg, k1, k2));
            }
            best
        })
        .reduce(|| (f64::INFINITY, i64::MAX, u8::MAX, 0, 0), better);
    Ok(DiophantineReport { min_margin: worst.0, worst_k: [worst.3, worst.4], pass: worst.0 >= 1.0 })
}

pub(crate) fn pow_big(l: u32, m: u32) -> BigInt {
    num_traits::pow(BigInt::from(l), m as usize)
}

pub(crate) fn rat_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_frequency_fails_at_one_one() {
        let v = DiophantineVector::new([0.5, 0.5], 1.0, 0.1).unwrap();
        let r = diophantine_check(&v, 20).unwrap();
        assert!(!r.pass);
        assert_eq!(r.min_margin, 0.0);
        assert_eq!(r.worst_k, [1, 1]);
    }

    #[test]
    fn zero_exponent_unit_constant_fails() {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let v = DiophantineVector::new([g, 0.3], 0.0, 1.0).unwrap();
        let r = diophantine_check(&v, 50).unwrap();
        assert!(!r.pass);
        // oracle: plain scan over the full box
        let mut m = f64::INFINITY;
        for k1 in -50i64..=50 {
            for k2 in -50i64..=50 {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let x = k1 as f64 * g + k2 as f64 * 0.3;
                let n = k1.abs().max(k2.abs()) as f64;
                m = m.min((x - x.round()).abs() * n);
            }
        }
        assert!((r.min_margin - m).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(DiophantineVector::new([0.3, 0.4], -1.0, 1.0).is_err());
        assert!(DiophantineVector::new([0.3, 0.4], 1.0, 0.0).is_err());
        assert!(DiophantineVector::new([1.3, 0.4], 1.0, 1.0).is_err());
        let v = DiophantineVector { omega: [0.3, 0.4], tau: -0.5, c0: 1.0 };
        assert!(diophantine_check(&v, 5).is_err());
    }
}
