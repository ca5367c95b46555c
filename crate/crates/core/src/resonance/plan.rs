use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::lattice::{to_ivec, Lattice};
use super::{pow_big, rat_to_f64, DiophantineVector};
use crate::error::{bail, Result};

/// The l-adic plan: points `ω_m = (a_m, b_m)/l^m` for `m = first_level..`, and medium
/// points `(a_m/l^m, b_half/l^{m+1})` joining consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonantPlan {
    pub l: u32,
    pub omega0: [BigRational; 2],
    pub first_level: u32,
    pub points: Vec<(BigInt, BigInt)>,
    pub half_points: Vec<(BigInt, BigInt)>,
    pub distances: Vec<f64>,
    pub half_distances: Vec<f64>,
}

/// Closed axis-parallel segment with exact endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: [BigRational; 2],
    pub end: [BigRational; 2],
}

impl Segment {
    fn lo_hi(&self, axis: usize) -> (BigRational, BigRational) {
        let (a, b) = (&self.start[axis], &self.end[axis]);
        if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        }
    }

    pub fn is_vertical(&self) -> bool {
        self.start[0] == self.end[0]
    }

    pub fn is_horizontal(&self) -> bool {
        self.start[1] == self.end[1]
    }

    pub fn contains(&self, p: &[BigRational; 2]) -> bool {
        (0..2).all(|ax| {
            let (lo, hi) = self.lo_hi(ax);
            lo <= p[ax] && p[ax] <= hi
        })
    }

    /// Intersection as a (possibly degenerate) box `[lo, hi]`; exact for axis-parallel segments.
    pub fn intersect(&self, other: &Segment) -> Option<([BigRational; 2], [BigRational; 2])> {
        let mut lo = [BigRational::zero(), BigRational::zero()];
        let mut hi = lo.clone();
        for ax in 0..2 {
            let (a0, a1) = self.lo_hi(ax);
            let (b0, b1) = other.lo_hi(ax);
            lo[ax] = a0.max(b0);
            hi[ax] = a1.min(b1);
            if lo[ax] > hi[ax] {
                return None;
            }
        }
        Some((lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanIndex {
    Point(u32),
    Half(u32),
}

fn frac(n: &BigInt, l: u32, m: u32) -> BigRational {
    BigRational::new(n.clone(), pow_big(l, m))
}

fn dist2(p: &[BigRational; 2], q: &[BigRational; 2]) -> BigRational {
    let dx = &p[0] - &q[0];
    let dy = &p[1] - &q[1];
    &dx * &dx + &dy * &dy
}

fn sqrt_f64(q: &BigRational) -> f64 {
    rat_to_f64(q).sqrt()
}

impl ResonantPlan {
    /// Assemble a plan from numerators; `a` and `b` hold levels `first_level..`.
    pub fn from_numerators(
        l: u32,
        omega0: [BigRational; 2],
        first_level: u32,
        a: Vec<BigInt>,
        b: Vec<BigInt>,
    ) -> Result<Self> {
        if l < 2 {
            bail!(Resonance, "subdivision base l must be >= 2");
        }
        if a.len() != b.len() || a.len() < 2 {
            bail!(Resonance, "need matching numerator lists with at least two levels");
        }
        let points: Vec<(BigInt, BigInt)> = a.into_iter().zip(b).collect();
        let mut plan = ResonantPlan {
            l,
            omega0,
            first_level,
            points,
            half_points: Vec::new(),
            distances: Vec::new(),
            half_distances: Vec::new(),
        };
        for i in 0..plan.points.len() - 1 {
            plan.half_points.push((plan.points[i].0.clone(), plan.points[i + 1].1.clone()));
        }
        plan.distances = (0..plan.points.len()).map(|i| sqrt_f64(&dist2(&plan.point(i), &plan.omega0))).collect();
        plan.half_distances =
            (0..plan.half_points.len()).map(|i| sqrt_f64(&dist2(&plan.half(i), &plan.omega0))).collect();
        Ok(plan)
    }

    pub fn level(&self, i: usize) -> u32 {
        self.first_level + i as u32
    }

    /// Number of complete segments `Γ_m` (one fewer than the number of points).
    pub fn segment_count(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn point(&self, i: usize) -> [BigRational; 2] {
        let m = self.level(i);
        let (a, b) = &self.points[i];
        [frac(a, self.l, m), frac(b, self.l, m)]
    }

    pub fn half(&self, i: usize) -> [BigRational; 2] {
        let m = self.level(i);
        let (a, b) = &self.half_points[i];
        [frac(a, self.l, m), frac(b, self.l, m + 1)]
    }

    /// `(Γ_{m,1}, Γ_{m,2})` for the segment starting at point index `i`.
    pub fn segments(&self, i: usize) -> (Segment, Segment) {
        let (p, h, q) = (self.point(i), self.half(i), self.point(i + 1));
        (Segment { start: p, end: h.clone() }, Segment { start: h, end: q })
    }

    fn index_of(&self, m: u32) -> Result<usize> {
        if m < self.first_level || (m - self.first_level) as usize >= self.points.len() {
            bail!(Resonance, "level {m} outside plan range");
        }
        Ok((m - self.first_level) as usize)
    }
}

fn admissible_extension(
    plan_a: &[BigInt],
    plan_b: &[BigInt],
    l: u32,
    first: u32,
    omega: &[BigRational; 2],
    cand: (&BigInt, &BigInt),
    d2: &BigRational,
    prev_d2: Option<&BigRational>,
) -> bool {
    let m = first + plan_a.len() as u32;
    let x = frac(cand.0, l, m);
    let y = frac(cand.1, l, m);
    let s2 = BigRational::from_integer(pow_big(l, 2 * m));
    let lo = BigRational::new(BigInt::from(2), pow_big(l, 2 * m + 2));
    let hi = BigRational::from_integer(BigInt::from(2)) / &s2;
    if *d2 < lo || *d2 > hi {
        return false;
    }
    if let Some(p) = prev_d2 {
        if d2 >= p {
            return false;
        }
    }
    for (j, (a, b)) in plan_a.iter().zip(plan_b).enumerate() {
        let mj = first + j as u32;
        if frac(a, l, mj) == x || frac(b, l, mj) == y {
            return false;
        }
    }
    let Some(last) = plan_a.len().checked_sub(1) else { return true };
    // the medium point must sit between its neighbours in distance
    let px = frac(&plan_a[last], l, m - 1);
    let py = frac(&plan_b[last], l, m - 1);
    let half = [px.clone(), y.clone()];
    let dh = dist2(&half, omega);
    let dprev = dist2(&[px, py], omega);
    if dh > dprev || dh < *d2 {
        return false;
    }
    let mut a: Vec<BigInt> = plan_a.to_vec();
    let mut b: Vec<BigInt> = plan_b.to_vec();
    a.push(cand.0.clone());
    b.push(cand.1.clone());
    let Ok(trial) = ResonantPlan::from_numerators(l, omega.clone(), first, a, b) else { return false };
    let newest = trial.segment_count() - 1;
    segment_violations(&trial, Some(newest)).is_empty()
}

/// Build the plan `ω_1 .. ω_{m_max+1}` with the minimal-distance admissible grid point
/// at every level, ties broken by `(a, b)`.
pub fn build_plan(v: &DiophantineVector, l: u32, m_max: u32) -> Result<ResonantPlan> {
    build_plan_exact(v.exact_omega()?, l, m_max)
}

pub fn build_plan_exact(omega: [BigRational; 2], l: u32, m_max: u32) -> Result<ResonantPlan> {
    if l < 2 {
        bail!(Resonance, "subdivision base l must be >= 2");
    }
    if m_max < 1 {
        bail!(Resonance, "m_max must be >= 1");
    }
    let first = 1u32;
    let mut a: Vec<BigInt> = Vec::new();
    let mut b: Vec<BigInt> = Vec::new();
    let mut prev_d2: Option<BigRational> = None;
    for m in first..=m_max + 1 {
        let s = BigRational::from_integer(pow_big(l, m));
        let ca = (&omega[0] * &s).floor().to_integer();
        let cb = (&omega[1] * &s).floor().to_integer();
        let mut cands: Vec<(BigRational, BigInt, BigInt)> = Vec::new();
        for da in -2i32..=3 {
            for db in -2i32..=3 {
                let ai = &ca + da;
                let bi = &cb + db;
                let p = [frac(&ai, l, m), frac(&bi, l, m)];
                cands.push((dist2(&p, &omega), ai, bi));
            }
        }
        cands.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let pick = cands.into_iter().find(|(d2, ai, bi)| {
            admissible_extension(&a, &b, l, first, &omega, (ai, bi), d2, prev_d2.as_ref())
        });
        let Some((d2, ai, bi)) = pick else {
            bail!(Resonance, "no admissible lattice point at level {m}");
        };
        a.push(ai);
        b.push(bi);
        prev_d2 = Some(d2);
    }
    ResonantPlan::from_numerators(l, omega, first, a, b)
}

/// Lattice of the plan point or medium point, with the defining basis.
pub fn lattice_for(plan: &ResonantPlan, which: PlanIndex) -> Result<Lattice> {
    let l = plan.l;
    match which {
        PlanIndex::Point(m) => {
            let i = plan.index_of(m)?;
            let s = pow_big(l, m);
            let (a, b) = &plan.points[i];
            let e1 = to_ivec(&[s.clone(), BigInt::zero(), -a])?;
            let e2 = to_ivec(&[BigInt::zero(), s, -b])?;
            Lattice::new(vec![e1, e2])
        }
        PlanIndex::Half(m) => {
            let i = plan.index_of(m)?;
            if i >= plan.half_points.len() {
                bail!(Resonance, "no medium point after level {m}");
            }
            let (a, bh) = &plan.half_points[i];
            let e1 = to_ivec(&[pow_big(l, m), BigInt::zero(), -a])?;
            let e2 = to_ivec(&[BigInt::zero(), pow_big(l, m + 1), -bh])?;
            Lattice::new(vec![e1, e2])
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanReport {
    pub parallel_noncollinear: bool,
    pub adjacency: bool,
    pub lattice_intersections: bool,
    pub violations: Vec<String>,
}

impl PlanReport {
    pub fn pass(&self) -> bool {
        self.parallel_noncollinear && self.adjacency && self.lattice_intersections
    }
}

fn fmt_pt(p: &[BigRational; 2]) -> String {
    format!("({}, {})", p[0], p[1])
}

/// Items (1) and (2) for all segment pairs, or only pairs involving `only`.
fn segment_violations(plan: &ResonantPlan, only: Option<usize>) -> Vec<(u8, String)> {
    let n = plan.segment_count();
    let segs: Vec<(Segment, Segment)> = (0..n).map(|i| plan.segments(i)).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let (v, h) = &segs[i];
        if only.map_or(true, |o| o == i) {
            if !v.is_vertical() || !h.is_horizontal() || v.start == v.end || h.start == h.end {
                out.push((1, format!("segment {} is degenerate or not axis-parallel", plan.level(i))));
            }
        }
        for j in 0..i {
            if let Some(o) = only {
                if o != i && o != j {
                    continue;
                }
            }
            let (vj, hj) = &segs[j];
            if v.start[0] == vj.start[0] {
                out.push((1, format!("vertical segments {} and {} are collinear", plan.level(j), plan.level(i))));
            }
            if h.start[1] == hj.start[1] {
                out.push((1, format!("horizontal segments {} and {} are collinear", plan.level(j), plan.level(i))));
            }
            let shared = plan.point(i);
            for a in [vj, hj] {
                for b in [v, h] {
                    if let Some((lo, hi)) = a.intersect(b) {
                        let ok = i == j + 1 && lo == shared && hi == shared;
                        if !ok {
                            out.push((
                                2,
                                format!(
                                    "segments {} and {} meet in [{} .. {}]",
                                    plan.level(j),
                                    plan.level(i),
                                    fmt_pt(&lo),
                                    fmt_pt(&hi)
                                ),
                            ));
                        }
                    }
                }
            }
            if i == j + 1 {
                let touches = [vj, hj].iter().any(|s| s.contains(&shared));
                if !touches {
                    out.push((2, format!("segments {} and {} do not share their endpoint", plan.level(j), plan.level(i))));
                }
            }
        }
    }
    out
}

/// Check the plan's segment geometry and the pairwise lattice intersections.
pub fn verify_plan_properties(plan: &ResonantPlan) -> Result<PlanReport> {
    if plan.points.len() < 3 {
        bail!(Resonance, "plan needs at least 3 levels to verify");
    }
    let mut report = PlanReport { parallel_noncollinear: true, adjacency: true, lattice_intersections: true, violations: vec![] };
    for (item, msg) in segment_violations(plan, None) {
        match item {
            1 => report.parallel_noncollinear = false,
            _ => report.adjacency = false,
        }
        report.violations.push(msg);
    }
    // every plan frequency with its saturated resonant lattice
    let mut freqs: Vec<[BigRational; 2]> = Vec::new();
    for i in 0..plan.points.len() {
        freqs.push(plan.point(i));
        if i < plan.half_points.len() {
            freqs.push(plan.half(i));
        }
    }
    let segs: Vec<Segment> = (0..plan.segment_count())
        .flat_map(|i| {
            let (v, h) = plan.segments(i);
            [v, h]
        })
        .collect();
    let lats: Vec<Lattice> = freqs
        .iter()
        .map(|w| Lattice::resonant(&[w[0].clone(), w[1].clone(), BigRational::one()]))
        .collect::<Result<_>>()?;
    for i in 0..freqs.len() {
        for j in i + 1..freqs.len() {
            let inter = lats[i].intersection(&lats[j])?;
            let common = segs.iter().find(|s| s.contains(&freqs[i]) && s.contains(&freqs[j]));
            let ok = match (inter.rank(), common) {
                (1, Some(s)) if s.is_vertical() => inter.basis[0][1] == 0 && inter.basis[0][0] != 0,
                (1, Some(_)) => inter.basis[0][0] == 0 && inter.basis[0][1] != 0,
                (1, None) => inter.basis[0][0] != 0 && inter.basis[0][1] != 0,
                _ => false,
            };
            if !ok {
                report.lattice_intersections = false;
                report.violations.push(format!(
                    "lattice intersection of {} and {} has basis {:?}",
                    fmt_pt(&freqs[i]),
                    fmt_pt(&freqs[j]),
                    inter.basis
                ));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubResonance {
    pub x: BigRational,
    pub y: BigRational,
    pub iota: BigInt,
    pub c: BigInt,
}

const MAX_DENOMINATOR_SCAN: f64 = 1.0e7;

/// All reduced `c/ι` with `ι <= l^{m(1+ξ)}` strictly inside the vertical segment `Γ_{m,1}`,
/// ordered from `ω_m` toward the medium point.
pub fn sub_resonances(plan: &ResonantPlan, m: u32, xi: f64) -> Result<Vec<SubResonance>> {
    if !(xi > 0.0) {
        bail!(Resonance, "xi must be positive");
    }
    let i = plan.index_of(m)?;
    if i >= plan.segment_count() {
        bail!(Resonance, "level {m} has no segment");
    }
    let bound = (m as f64 * (1.0 + xi) * (plan.l as f64).ln()).exp();
    if !bound.is_finite() || bound > MAX_DENOMINATOR_SCAN {
        bail!(Resonance, "denominator bound l^(m(1+xi)) = {bound:.3e} is too large to enumerate");
    }
    let iota_max = bound.floor() as u64;
    let (seg, _) = plan.segments(i);
    let (y0, y1) = (seg.start[1].clone(), seg.end[1].clone());
    let (lo, hi) = if y0 <= y1 { (y0.clone(), y1.clone()) } else { (y1.clone(), y0.clone()) };
    let mut out = Vec::new();
    for iota in 1..=iota_max {
        let q = BigInt::from(iota);
        let qr = BigRational::from_integer(q.clone());
        let c_lo: BigInt = (&lo * &qr).floor().to_integer() + 1;
        let c_hi: BigInt = (&hi * &qr).ceil().to_integer() - 1;
        let mut c = c_lo;
        while c <= c_hi {
            if c.gcd(&q).is_one() {
                out.push(SubResonance { x: seg.start[0].clone(), y: BigRational::new(c.clone(), q.clone()), iota: q.clone(), c: c.clone() });
            }
            c += 1;
        }
    }
    let ascending = y0 <= y1;
    out.sort_by(|a, b| if ascending { a.y.cmp(&b.y) } else { b.y.cmp(&a.y) });
    Ok(out)
}

/// The fraction with the smallest denominator strictly between `lo` and `hi`.
pub fn simplest_between(lo: &BigRational, hi: &BigRational) -> Result<BigRational> {
    if lo >= hi {
        bail!(Resonance, "empty interval ({lo}, {hi})");
    }
    Ok(simplest_open(lo, hi))
}

fn simplest_open(lo: &BigRational, hi: &BigRational) -> BigRational {
    let fl = lo.floor();
    let next = &fl + BigRational::one();
    if &next < hi {
        // smallest-magnitude integer in the interval
        if lo.is_negative() && hi.is_positive() {
            return BigRational::zero();
        }
        if hi.is_negative() || hi.is_zero() {
            return hi.ceil() - BigRational::one();
        }
        return next;
    }
    if *lo == fl {
        let y = (BigRational::one() / (hi - &fl)).floor() + BigRational::one();
        return fl + BigRational::one() / y;
    }
    let y = simplest_open(&(BigRational::one() / (hi - &fl)), &(BigRational::one() / (lo - &fl)));
    fl + BigRational::one() / y
}

/// Digit-truncation approximants with trailing-zero levels replaced by the lower carry
/// string (…3 99…9 before …4 00…0), so consecutive levels never share a coordinate.
pub fn carry_approximants(x: &BigRational, l: u32, levels: u32) -> Result<Vec<BigInt>> {
    if l < 2 || levels == 0 {
        bail!(Resonance, "need l >= 2 and at least one level");
    }
    let lookahead = 8;
    let total = levels + lookahead;
    let lb = BigInt::from(l);
    let below = |k: u32| -> BigInt {
        let y = x * BigRational::from_integer(pow_big(l, k));
        if y.is_integer() {
            y.to_integer() - 1
        } else {
            y.floor().to_integer()
        }
    };
    let mut out = vec![BigInt::zero(); total as usize];
    let mut a = below(total);
    while a.is_multiple_of(&lb) {
        a -= 1;
    }
    out[total as usize - 1] = a;
    for k in (1..total).rev() {
        let mut a = below(k);
        let next = &out[k as usize];
        while a.is_multiple_of(&lb) || &a * &lb >= *next {
            a -= 1;
        }
        out[k as usize - 1] = a;
    }
    out.truncate(levels as usize);
    Ok(out)
}

fn fmt_basis(lat: &Lattice) -> String {
    lat.basis.iter().map(|v| format!("({} {} {})", v[0], v[1], v[2])).collect::<Vec<_>>().join(";")
}

/// One record per level: `m,a_m,b_m,b_half,d_m,d_half,lattice_m,lattice_half`.
pub fn plan_csv(plan: &ResonantPlan) -> Result<String> {
    let mut s = String::from("m,a_m,b_m,b_half,d_m,d_half,lattice_m,lattice_half\n");
    for i in 0..plan.points.len() {
        let m = plan.level(i);
        let (a, b) = &plan.points[i];
        let lm = fmt_basis(&lattice_for(plan, PlanIndex::Point(m))?);
        if i < plan.half_points.len() {
            let lh = fmt_basis(&lattice_for(plan, PlanIndex::Half(m))?);
            let _ = writeln!(
                s,
                "{m},{a},{b},{},{:.17e},{:.17e},{lm},{lh}",
                plan.half_points[i].1, plan.distances[i], plan.half_distances[i]
            );
        } else {
            let _ = writeln!(s, "{m},{a},{b},,{:.17e},,{lm},", plan.distances[i]);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn big(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn lattice_bases_by_substitution() {
        let plan = ResonantPlan::from_numerators(10, [q(414, 1000), q(732, 1000)], 1, big(&[4, 41, 414]), big(&[7, 71, 732])).unwrap();
        let l1 = lattice_for(&plan, PlanIndex::Point(1)).unwrap();
        assert_eq!(l1.basis, vec![[10, 0, -4], [0, 10, -7]]);
        let l2 = lattice_for(&plan, PlanIndex::Point(2)).unwrap();
        assert_eq!(l2.basis, vec![[100, 0, -41], [0, 100, -71]]);
        let lh = lattice_for(&plan, PlanIndex::Half(1)).unwrap();
        assert_eq!(lh.basis, vec![[10, 0, -4], [0, 100, -71]]);
        assert!(lattice_for(&plan, PlanIndex::Point(4)).is_err());
        assert!(lattice_for(&plan, PlanIndex::Half(3)).is_err());
    }

    #[test]
    fn lattice_vectors_are_resonant() {
        let plan = ResonantPlan::from_numerators(10, [q(414, 1000), q(732, 1000)], 1, big(&[4, 41, 414]), big(&[7, 71, 732])).unwrap();
        for i in 0..3u32 {
            let m = i + 1;
            let w = plan.point(i as usize);
            for v in lattice_for(&plan, PlanIndex::Point(m)).unwrap().basis {
                let s = BigRational::from_integer(v[0].into()) * &w[0]
                    + BigRational::from_integer(v[1].into()) * &w[1]
                    + BigRational::from_integer(v[2].into());
                assert!(s.is_zero());
            }
        }
    }

    #[test]
    fn sqrt_two_carry_sequence() {
        // x slightly above 1.41421356237309, whose 14th digit block "…7309" contains a zero
        let x = BigRational::new(BigInt::from(141421356237309505i64), BigInt::from(100000000000000000i64));
        let a = carry_approximants(&x, 10, 16).unwrap();
        let want = [14i64, 141, 1414, 14142, 141421, 1414213, 14142135, 141421356, 1414213562, 14142135623, 141421356237];
        for (k, w) in want.iter().enumerate() {
            assert_eq!(a[k], BigInt::from(*w), "level {}", k + 1);
        }
        // …7309 forces …72 99 on the levels touching the zero
        assert_eq!(a[11], BigInt::from(1414213562372i64));
        assert_eq!(a[12], BigInt::from(14142135623729i64));
        assert_eq!(a[13], BigInt::from(141421356237309i64));
        for k in 0..a.len() - 1 {
            assert!(&a[k] * BigInt::from(10) < a[k + 1]);
            assert!(!(&a[k] % BigInt::from(10)).is_zero());
        }
    }

    #[test]
    fn carry_rule_on_a_zero_run() {
        // 0.414 00 71…: the levels before the zeros become 4139, 41399
        let x = BigRational::new(BigInt::from(4140071234567i64), BigInt::from(10_000_000_000_000i64));
        let a = carry_approximants(&x, 10, 6).unwrap();
        assert_eq!(a, big(&[4, 41, 413, 4139, 41399, 414007]));
    }

    #[test]
    fn simplest_fraction() {
        assert_eq!(simplest_between(&q(7, 10), &q(71, 100)).unwrap(), q(12, 17));
        assert_eq!(simplest_between(&q(1, 3), &q(1, 2)).unwrap(), q(2, 5));
        assert_eq!(simplest_between(&q(0, 1), &q(1, 1)).unwrap(), q(1, 2));
        assert_eq!(simplest_between(&q(1, 2), &q(3, 1)).unwrap(), q(1, 1));
        assert!(simplest_between(&q(1, 2), &q(1, 2)).is_err());
    }

    #[test]
    fn segment_box_intersection() {
        let v = Segment { start: [q(1, 2), q(0, 1)], end: [q(1, 2), q(1, 1)] };
        let h = Segment { start: [q(0, 1), q(1, 4)], end: [q(1, 1), q(1, 4)] };
        let (lo, hi) = v.intersect(&h).unwrap();
        assert_eq!(lo, [q(1, 2), q(1, 4)]);
        assert_eq!(lo, hi);
        let far = Segment { start: [q(2, 1), q(0, 1)], end: [q(2, 1), q(1, 1)] };
        assert!(v.intersect(&far).is_none());
    }
}
