//! Integer sublattices of Z³ and the exact linear algebra behind them.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{bail, Result};

pub type IVec3 = [i64; 3];

/// A Z-span of linearly independent integer 3-vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub basis: Vec<IVec3>,
    /// Set by [`maximal_reduce`]: every basis vector is primitive.
    pub is_maximal: bool,
    /// Factor each basis vector was divided by during reduction (1 when untouched).
    pub multipliers: Vec<i64>,
}

impl Lattice {
    pub fn new(basis: Vec<IVec3>) -> Result<Self> {
        let rows: Vec<Vec<BigInt>> = basis.iter().map(|v| big_vec(v)).collect();
        if rational_rank(&rows) != basis.len() {
            bail!(Resonance, "lattice basis {:?} is not linearly independent", basis);
        }
        let n = basis.len();
        Ok(Lattice { basis, is_maximal: false, multipliers: vec![1; n] })
    }

    pub fn full() -> Self {
        Lattice {
            basis: vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
            is_maximal: true,
            multipliers: vec![1; 3],
        }
    }

    pub fn zero() -> Self {
        Lattice { basis: Vec::new(), is_maximal: true, multipliers: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Lattice of integer vectors orthogonal to a rational 3-vector, as a saturated basis.
    pub fn resonant(omega_tilde: &[BigRational; 3]) -> Result<Self> {
        let row = clear_denominators(omega_tilde);
        let kernel = integer_kernel(&[row], 3);
        let mut basis = Vec::new();
        for v in row_basis(kernel) {
            basis.push(to_ivec(&v)?);
        }
        let n = basis.len();
        Ok(Lattice { basis, is_maximal: true, multipliers: vec![1; n] })
    }

    /// Exact membership test: `k` is an integer combination of the basis.
    pub fn contains(&self, k: IVec3) -> bool {
        if k == [0, 0, 0] {
            return true;
        }
        match self.coordinates(k) {
            Some(c) => c.iter().all(|x| x.is_integer()),
            None => false,
        }
    }

    /// Rational coordinates of `k` in the basis, or `None` outside the rational span.
    pub fn coordinates(&self, k: IVec3) -> Option<Vec<Ratio<i128>>> {
        let r = self.basis.len();
        if r == 0 {
            return if k == [0, 0, 0] { Some(Vec::new()) } else { None };
        }
        // augmented 3 x (r+1) system
        let mut m: Vec<Vec<Ratio<i128>>> = (0..3)
            .map(|i| {
                let mut row: Vec<Ratio<i128>> =
                    self.basis.iter().map(|b| Ratio::from_integer(b[i] as i128)).collect();
                row.push(Ratio::from_integer(k[i] as i128));
                row
            })
            .collect();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..r {
            let Some(p) = (row..3).find(|&i| !m[i][col].is_zero()) else { continue };
            m.swap(row, p);
            let inv = m[row][col].recip();
            for x in m[row].iter_mut() {
                *x *= inv;
            }
            for i in 0..3 {
                if i != row && !m[i][col].is_zero() {
                    let f = m[i][col];
                    for j in 0..=r {
                        let t = m[row][j] * f;
                        m[i][j] -= t;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        if (row..3).any(|i| !m[i][r].is_zero()) {
            return None;
        }
        let mut c = vec![Ratio::from_integer(0); r];
        for (i, &col) in pivots.iter().enumerate() {
            c[col] = m[i][r];
        }
        Some(c)
    }

    pub fn intersection(&self, other: &Lattice) -> Result<Lattice> {
        let (r1, r2) = (self.rank(), other.rank());
        if r1 == 0 || r2 == 0 {
            return Ok(Lattice::zero());
        }
        // columns of B1 and -B2; kernel vectors (x, y) give B1 x in the intersection
        let rows: Vec<Vec<BigInt>> = (0..3)
            .map(|i| {
                self.basis
                    .iter()
                    .map(|b| BigInt::from(b[i]))
                    .chain(other.basis.iter().map(|b| -BigInt::from(b[i])))
                    .collect()
            })
            .collect();
        let kernel = integer_kernel(&rows, r1 + r2);
        let images: Vec<Vec<BigInt>> = kernel
            .iter()
            .map(|xy| {
                (0..3)
                    .map(|i| {
                        self.basis
                            .iter()
                            .zip(xy.iter())
                            .map(|(b, x)| BigInt::from(b[i]) * x)
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut basis = Vec::new();
        for v in row_basis(images) {
            basis.push(to_ivec(&v)?);
        }
        let n = basis.len();
        Ok(Lattice { basis, is_maximal: false, multipliers: vec![1; n] })
    }

    /// Index of the lattice inside `span_Q(basis) ∩ Z³`.
    pub fn index_in_saturation(&self) -> BigInt {
        let rows: Vec<Vec<BigInt>> = self.basis.iter().map(|v| big_vec(v)).collect();
        match rows.len() {
            0 => BigInt::one(),
            1 => vec_gcd(&rows[0]),
            2 => vec_gcd(&cross(&rows[0], &rows[1])),
            _ => det3(&rows[0], &rows[1], &rows[2]).abs(),
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.index_in_saturation().is_one()
    }

    pub fn saturate(&self) -> Result<Lattice> {
        let rows: Vec<Vec<BigInt>> = self.basis.iter().map(|v| big_vec(v)).collect();
        let basis = match rows.len() {
            0 => return Ok(Lattice::zero()),
            1 => vec![to_ivec(&primitive(&rows[0]))?],
            2 => {
                let n = primitive(&cross(&rows[0], &rows[1]));
                let mut out = Vec::new();
                for v in row_basis(integer_kernel(&[n], 3)) {
                    out.push(to_ivec(&v)?);
                }
                out
            }
            _ => return Ok(Lattice::full()),
        };
        let n = basis.len();
        Ok(Lattice { basis, is_maximal: true, multipliers: vec![1; n] })
    }
}

/// Divide every basis vector by the gcd of its entries.
pub fn maximal_reduce(lat: &Lattice) -> Result<Lattice> {
    let mut basis = Vec::with_capacity(lat.rank());
    let mut multipliers = Vec::with_capacity(lat.rank());
    for (v, &m0) in lat.basis.iter().zip(lat.multipliers.iter()) {
        let g = v.iter().fold(0i64, |g, &x| g.gcd(&x));
        if g == 0 {
            bail!(Resonance, "zero vector in lattice basis");
        }
        basis.push([v[0] / g, v[1] / g, v[2] / g]);
        multipliers.push(m0 * g);
    }
    Ok(Lattice { basis, is_maximal: true, multipliers })
}

pub fn max_norm(k: IVec3) -> i64 {
    k.iter().map(|x| x.abs()).max().unwrap_or(0)
}

pub(crate) fn big_vec(v: &[i64]) -> Vec<BigInt> {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

pub(crate) fn to_ivec(v: &[BigInt]) -> Result<IVec3> {
    let mut out = [0i64; 3];
    for (o, x) in out.iter_mut().zip(v) {
        *o = match x.to_i64() {
            Some(y) => y,
            None => bail!(Resonance, "lattice entry {} overflows i64", x),
        };
    }
    Ok(out)
}

fn vec_gcd(v: &[BigInt]) -> BigInt {
    v.iter().fold(BigInt::zero(), |g, x| g.gcd(x))
}

fn primitive(v: &[BigInt]) -> Vec<BigInt> {
    let g = vec_gcd(v);
    let mut out: Vec<BigInt> = v.iter().map(|x| x / &g).collect();
    // canonical sign: first nonzero entry positive
    if out.iter().find(|x| !x.is_zero()).map_or(false, |x| x.is_negative()) {
        for x in out.iter_mut() {
            *x = -&*x;
        }
    }
    out
}

pub(crate) fn cross(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    vec![
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn det3(a: &[BigInt], b: &[BigInt], c: &[BigInt]) -> BigInt {
    let x = cross(b, c);
    &a[0] * &x[0] + &a[1] * &x[1] + &a[2] * &x[2]
}

/// Scale a rational vector to a primitive integer vector with the same direction.
pub(crate) fn clear_denominators(v: &[BigRational]) -> Vec<BigInt> {
    let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let g = vec_gcd(&ints);
    if g.is_zero() {
        ints
    } else {
        ints.into_iter().map(|x| x / &g).collect()
    }
}

fn rational_rank(rows: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][col].is_zero()) else { continue };
        m.swap(rank, p);
        for i in rank + 1..m.len() {
            if !m[i][col].is_zero() {
                let f = &m[i][col] / &m[rank][col];
                for j in col..ncols {
                    let t = &m[rank][j] * &f;
                    m[i][j] -= t;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Saturated Z-basis of `{x ∈ Z^n : rows · x = 0}` by unimodular column reduction.
pub fn integer_kernel(rows: &[Vec<BigInt>], n: usize) -> Vec<Vec<BigInt>> {
    let mut a: Vec<Vec<BigInt>> = rows.to_vec();
    let mut u: Vec<Vec<BigInt>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect();
    let col_op = |a: &mut Vec<Vec<BigInt>>, u: &mut Vec<Vec<BigInt>>, dst: usize, src: usize, q: &BigInt| {
        for row in a.iter_mut() {
            let t = &row[src] * q;
            row[dst] -= t;
        }
        for row in u.iter_mut() {
            let t = &row[src] * q;
            row[dst] -= t;
        }
    };
    let col_swap = |a: &mut Vec<Vec<BigInt>>, u: &mut Vec<Vec<BigInt>>, i: usize, j: usize| {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
        for row in u.iter_mut() {
            row.swap(i, j);
        }
    };
    let mut p = 0;
    for i in 0..a.len() {
        if p >= n {
            break;
        }
        loop {
            let best = (p..n)
                .filter(|&j| !a[i][j].is_zero())
                .min_by(|&x, &y| a[i][x].abs().cmp(&a[i][y].abs()));
            let Some(j) = best else { break };
            col_swap(&mut a, &mut u, p, j);
            let mut done = true;
            for j in p + 1..n {
                if !a[i][j].is_zero() {
                    let q = a[i][j].div_floor(&a[i][p]);
                    col_op(&mut a, &mut u, j, p, &q);
                    if !a[i][j].is_zero() {
                        done = false;
                    }
                }
            }
            if done {
                p += 1;
                break;
            }
        }
    }
    (p..n).map(|c| (0..n).map(|r| u[r][c].clone()).collect()).collect()
}

/// Echelon Z-basis of the span of the given integer vectors (dependent ones are dropped).
pub fn row_basis(vectors: Vec<Vec<BigInt>>) -> Vec<Vec<BigInt>> {
    let mut m = vectors;
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        loop {
            let best = (rank..m.len())
                .filter(|&i| !m[i][col].is_zero())
                .min_by(|&x, &y| m[x][col].abs().cmp(&m[y][col].abs()));
            let Some(p) = best else { break };
            m.swap(rank, p);
            let mut done = true;
            for i in rank + 1..m.len() {
                if !m[i][col].is_zero() {
                    let q = m[i][col].div_floor(&m[rank][col]);
                    for j in 0..ncols {
                        let t = &m[rank][j] * &q;
                        m[i][j] -= t;
                    }
                    if !m[i][col].is_zero() {
                        done = false;
                    }
                }
            }
            if done {
                if m[rank][col].is_negative() {
                    for x in m[rank].iter_mut() {
                        *x = -&*x;
                    }
                }
                rank += 1;
                break;
            }
        }
    }
    m.truncate(rank);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn reduce_examples() {
        let l = Lattice::new(vec![[10, 0, -4]]).unwrap();
        let r = maximal_reduce(&l).unwrap();
        assert_eq!(r.basis, vec![[5, 0, -2]]);
        assert_eq!(r.multipliers, vec![2]);

        let l = Lattice::new(vec![[100, 0, -41]]).unwrap();
        let r = maximal_reduce(&l).unwrap();
        assert_eq!(r.basis, vec![[100, 0, -41]]);
        assert_eq!(r.multipliers, vec![1]);

        let l = Lattice::new(vec![[10, 0, -4], [0, 10, -7]]).unwrap();
        let r = maximal_reduce(&l).unwrap();
        assert_eq!(r.basis, vec![[5, 0, -2], [0, 10, -7]]);
        assert_eq!(r.multipliers, vec![2, 1]);
        assert!(r.is_maximal);
    }

    #[test]
    fn primitive_basis_need_not_be_saturated() {
        let r = Lattice::new(vec![[5, 0, -2], [0, 10, -7]]).unwrap();
        assert_eq!(r.index_in_saturation(), BigInt::from(5));
        let s = r.saturate().unwrap();
        assert!(s.is_saturated());
        assert!(s.contains([5, 0, -2]) && s.contains([0, 10, -7]));
        // (1, -2, 1) is orthogonal to (4, 7, 10) but not in the primitive span
        assert!(s.contains([1, -2, 1]));
        assert!(!r.contains([1, -2, 1]));
    }

    #[test]
    fn rejects_zero_and_dependent() {
        assert!(Lattice::new(vec![[1, 2, 3], [2, 4, 6]]).is_err());
        let l = Lattice { basis: vec![[0, 0, 0]], is_maximal: false, multipliers: vec![1] };
        assert!(maximal_reduce(&l).is_err());
    }

    #[test]
    fn membership() {
        let l = Lattice::new(vec![[10, 0, -4], [0, 10, -7]]).unwrap();
        assert!(l.contains([20, 10, -15]));
        assert!(!l.contains([5, 0, -2]));
        assert!(!l.contains([1, 0, 0]));
        assert!(l.contains([0, 0, 0]));
        assert!(Lattice::full().contains([3, -7, 11]));
    }

    #[test]
    fn resonant_kernel_is_orthogonal_and_saturated() {
        let w = [q(4, 10), q(7, 10), q(1, 1)];
        let l = Lattice::resonant(&w).unwrap();
        assert_eq!(l.rank(), 2);
        assert!(l.is_saturated());
        for b in &l.basis {
            assert_eq!(4 * b[0] + 7 * b[1] + 10 * b[2], 0);
        }
        assert!(l.contains([5, 0, -2]));
        assert!(l.contains([1, -2, 1]));
    }

    #[test]
    fn intersection_of_two_resonances_has_rank_one() {
        let a = Lattice::resonant(&[q(4, 10), q(7, 10), q(1, 1)]).unwrap();
        let b = Lattice::resonant(&[q(4, 10), q(71, 100), q(1, 1)]).unwrap();
        let c = a.intersection(&b).unwrap();
        assert_eq!(c.rank(), 1);
        // same first coordinate: the common vector has no second component
        assert_eq!(c.basis[0][1], 0);
        assert!(c.contains([5, 0, -2]));
    }

    #[test]
    fn kernel_of_empty_rows_is_everything() {
        let k = integer_kernel(&[], 3);
        assert_eq!(k.len(), 3);
    }
}
