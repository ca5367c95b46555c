//! Exact unimodular changes of the angle-time variables, Hessian rescaling and the
//! homogenizing rescale onto the mechanical model.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::dynamics::{MechanicalSystem, TrigPoly2};
use crate::error::{bail, Result};
use crate::normalform::TrigPoly;

pub type RatMat3 = [[BigRational; 3]; 3];

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn zero3() -> RatMat3 {
    std::array::from_fn(|_| std::array::from_fn(|_| BigRational::zero()))
}

pub fn transpose(m: &RatMat3) -> RatMat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| m[j][i].clone()))
}

pub fn mat_mul(a: &RatMat3, b: &RatMat3) -> RatMat3 {
    let mut out = zero3();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += &a[i][k] * &b[k][j];
            }
        }
    }
    out
}

pub fn det(m: &RatMat3) -> BigRational {
    let minor = |i: usize, j: usize, k: usize, l: usize| &m[i][k] * &m[j][l] - &m[i][l] * &m[j][k];
    &m[0][0] * minor(1, 2, 1, 2) - &m[0][1] * minor(1, 2, 0, 2) + &m[0][2] * minor(1, 2, 0, 1)
}

pub fn inverse(m: &RatMat3) -> Result<RatMat3> {
    let d = det(m);
    if d.is_zero() {
        bail!(Symplectic, "matrix is singular");
    }
    let mut out = zero3();
    for i in 0..3 {
        for j in 0..3 {
            // cofactor of (j, i)
            let r: Vec<usize> = (0..3).filter(|&x| x != j).collect();
            let c: Vec<usize> = (0..3).filter(|&x| x != i).collect();
            let minor = &m[r[0]][c[0]] * &m[r[1]][c[1]] - &m[r[0]][c[1]] * &m[r[1]][c[0]];
            let sign = if (i + j) % 2 == 0 { rat(1) } else { rat(-1) };
            out[i][j] = sign * minor / &d;
        }
    }
    Ok(out)
}

pub fn to_f64(m: &RatMat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[i][j].to_f64().unwrap_or(f64::NAN)))
}

fn apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalChange {
    pub xi: RatMat3,
    pub xi_t: RatMat3,
    /// Momentum offset `p*`.
    pub base_point: [BigRational; 2],
    /// Diagonal amplification `Θ` acting on the slow momenta.
    pub theta: [BigRational; 2],
}

fn check_positive(vals: &[(&str, i64)]) -> Result<()> {
    for (name, v) in vals {
        if *v <= 0 {
            bail!(Symplectic, "{name} must be positive, got {v}");
        }
    }
    Ok(())
}

impl CanonicalChange {
    fn from_xi(xi: RatMat3, base_point: [BigRational; 2], theta: [BigRational; 2]) -> Result<Self> {
        if !det(&xi).is_one() {
            bail!(Symplectic, "Ξ has determinant {}, not 1", det(&xi));
        }
        Ok(CanonicalChange { xi_t: transpose(&xi), xi, base_point, theta })
    }

    /// Entries as exact fractions, row by row.
    pub fn describe(&self) -> String {
        let rows: Vec<String> = self.xi.iter().map(|r| r.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(" ")).collect();
        format!("xi [{}] p* [{} {}]", rows.join("; "), self.base_point[0], self.base_point[1])
    }
}

/// Ξ with rows `(l^m, 0, −a)`, `(0, μι, −μc)`, `(0, 0, 1/(μι l^m))`.
pub fn build_xi_2res(l: i64, m: u32, a_m: i64, mu: i64, iota: i64, c_m: i64, base_point: [BigRational; 2]) -> Result<CanonicalChange> {
    check_positive(&[("l", l), ("mu", mu), ("iota", iota)])?;
    let lm = rat(l).pow(m as i32);
    let mi = rat(mu * iota);
    let mut xi = zero3();
    xi[0][0] = lm.clone();
    xi[0][2] = rat(-a_m);
    xi[1][1] = mi.clone();
    xi[1][2] = rat(-mu * c_m);
    xi[2][2] = (&lm * &mi).recip();
    CanonicalChange::from_xi(xi, base_point, [lm, mi])
}

/// Ξ with rows `(l^m, 0, −a)`, `(0, l^m, 0)`, `(0, 0, 1/l^{2m})`.
pub fn build_xi_1res(l: i64, m: u32, a_m: i64, base_point: [BigRational; 2]) -> Result<CanonicalChange> {
    check_positive(&[("l", l)])?;
    let lm = rat(l).pow(m as i32);
    let mut xi = zero3();
    xi[0][0] = lm.clone();
    xi[0][2] = rat(-a_m);
    xi[1][1] = lm.clone();
    xi[2][2] = (&lm * &lm).recip();
    CanonicalChange::from_xi(xi, base_point, [lm.clone(), lm])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OldPoint {
    pub q: [f64; 2],
    pub t: f64,
    pub p: [f64; 2],
    pub action: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewPoint {
    pub x: [f64; 2],
    pub s: f64,
    pub y: [f64; 2],
    pub j: f64,
}

/// `(x, s) = Ξ(q, t)`, `(p, I) = Ξᵗ(y, J) + (p*, 0)`. Acts on lifts; angles are not reduced.
pub fn transform_coords(c: &CanonicalChange, pt: &OldPoint) -> Result<NewPoint> {
    let xi = to_f64(&c.xi);
    let inv_t = to_f64(&transpose(&inverse(&c.xi)?));
    let [x1, x2, s] = apply(&xi, [pt.q[0], pt.q[1], pt.t]);
    let ps = [c.base_point[0].to_f64().unwrap_or(f64::NAN), c.base_point[1].to_f64().unwrap_or(f64::NAN)];
    let [y1, y2, j] = apply(&inv_t, [pt.p[0] - ps[0], pt.p[1] - ps[1], pt.action]);
    Ok(NewPoint { x: [x1, x2], s, y: [y1, y2], j })
}

pub fn inverse_coords(c: &CanonicalChange, pt: &NewPoint) -> Result<OldPoint> {
    let inv = to_f64(&inverse(&c.xi)?);
    let xt = to_f64(&c.xi_t);
    let [q1, q2, t] = apply(&inv, [pt.x[0], pt.x[1], pt.s]);
    let [p1, p2, i] = apply(&xt, [pt.y[0], pt.y[1], pt.j]);
    let ps = [c.base_point[0].to_f64().unwrap_or(f64::NAN), c.base_point[1].to_f64().unwrap_or(f64::NAN)];
    Ok(OldPoint { q: [q1, q2], t, p: [p1 + ps[0], p2 + ps[1]], action: i })
}

/// Canonical form `ω(u, v) = Σ dq∧dp` on 6-vectors ordered `(angles, momenta)`.
pub fn two_form(u: &[f64; 6], v: &[f64; 6]) -> f64 {
    (0..3).map(|i| u[i] * v[i + 3] - u[i + 3] * v[i]).sum()
}

/// Tangent map of the change: `blockdiag(Ξ, Ξ^{−T})`.
pub fn tangent_map(c: &CanonicalChange) -> Result<[[f64; 6]; 6]> {
    let xi = to_f64(&c.xi);
    let inv_t = to_f64(&transpose(&inverse(&c.xi)?));
    let mut m = [[0.0; 6]; 6];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = xi[i][j];
            m[i + 3][j + 3] = inv_t[i][j];
        }
    }
    Ok(m)
}

fn apply6(m: &[[f64; 6]; 6], v: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| (0..6).map(|j| m[i][j] * v[j]).sum())
}

/// Largest `|ω(Mu, Mv) − factor·ω(u, v)|` over the given tangent pairs, relative to `|u||v|`.
pub fn two_form_defect(m: &[[f64; 6]; 6], factor: f64, pairs: &[([f64; 6], [f64; 6])]) -> f64 {
    let norm = |v: &[f64; 6]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    pairs
        .iter()
        .map(|(u, v)| {
            let d = two_form(&apply6(m, u), &apply6(m, v)) - factor * two_form(u, v);
            d.abs() / (norm(u) * norm(v) * scale * scale)
        })
        .fold(0.0, f64::max)
}

/// Symmetric derivative tensor of order `n` on `R^dim`, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub order: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim.pow(order as u32) {
            bail!(Symplectic, "tensor of order {order} on R^{dim} needs {} entries", dim.pow(order as u32));
        }
        Ok(Tensor { order, dim, data })
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.index(idx)]
    }

    /// `T[v, …, v]`.
    pub fn contract(&self, v: &[f64]) -> f64 {
        (0..self.data.len())
            .map(|flat| {
                let mut f = flat;
                let mut w = self.data[flat];
                for _ in 0..self.order {
                    w *= v[f % self.dim];
                    f /= self.dim;
                }
                w
            })
            .sum()
    }
}

/// `Dⁿh′(0) = ⟨Θ, Dⁿh(p*) Θᵗ⟩…Θᵗ⟩` for diagonal `Θ`: every index picks up its `θ`.
pub fn rescale_hessian(theta: &[f64], t: &Tensor) -> Result<Tensor> {
    if theta.len() != t.dim {
        bail!(Symplectic, "Θ has {} entries for a tensor on R^{}", theta.len(), t.dim);
    }
    if theta.iter().any(|&x| !(x > 0.0)) {
        bail!(Symplectic, "Θ must be positive");
    }
    let mut out = t.clone();
    for (flat, v) in out.data.iter_mut().enumerate() {
        let mut f = flat;
        for _ in 0..t.order {
            *v *= theta[f % t.dim];
            f /= t.dim;
        }
    }
    Ok(out)
}

/// Diagonal `(l^m, μι, 1/(δ l^m μι), δ/l^m, δ/(μι), δ² l^m μι)` taking `(X, S, Y, e)` to `(x, s, y, J)`.
pub fn homogenization_diagonal(l_pow_m: f64, mu_iota: f64, delta: f64) -> Result<[f64; 6]> {
    if !(delta > 0.0) {
        bail!(Symplectic, "δ must be positive");
    }
    if !(l_pow_m > 0.0 && mu_iota > 0.0) {
        bail!(Symplectic, "scales must be positive");
    }
    Ok([
        l_pow_m,
        mu_iota,
        1.0 / (delta * l_pow_m * mu_iota),
        delta / l_pow_m,
        delta / mu_iota,
        delta * delta * l_pow_m * mu_iota,
    ])
}

/// The old blocks before homogenization; `z1` in `x₁`, `z21` in `x₂`, `z22` in `(x₁, x₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParts {
    pub hessian: [[f64; 2]; 2],
    pub cubic: Option<Tensor>,
    pub z1: TrigPoly,
    pub z21: TrigPoly,
    pub z22: TrigPoly2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogenizationScales {
    pub l_pow_m: f64,
    pub mu_iota: f64,
    pub big_l: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizationReport {
    pub diagonal: [f64; 6],
    /// Prefactors `1`, `(l^m/μι)^{r+2}`, `(1/𝕃)(l^m/μι)^{r+2}` of the three blocks.
    pub prefactors: [f64; 3],
    /// C⁰ proxy of each block after dividing out its prefactor.
    pub normalized_c0: [f64; 3],
    /// C² proxy of each block after dividing out its prefactor, in `X`.
    pub normalized_c2: [f64; 3],
    pub hardest: bool,
    /// Size of the `𝒪(δY²)` term at `|Y| <= 1` when the cubic part is kept.
    pub cubic_term: Option<f64>,
}

fn scale_poly(p: &TrigPoly, freq: f64, amp: f64) -> Result<TrigPoly> {
    let f = freq.round();
    if (f - freq).abs() > 1e-9 * freq {
        bail!(Symplectic, "frequency scale {freq} is not an integer");
    }
    Ok(TrigPoly::new(p.terms.iter().map(|&(n, a, b)| (n * f as i64, amp * a, amp * b)).collect()))
}

fn c0(p: &TrigPoly) -> f64 {
    p.terms.iter().filter(|t| t.0 != 0).map(|t| t.1.hypot(t.2)).sum()
}

/// `H̃ = ½⟨Y, D²h Y⟩ + Z′(ΘX)/δ²` with time `S = δ l^m μι s`.
pub fn homogenize(parts: &SystemParts, delta: f64, sc: &HomogenizationScales) -> Result<(MechanicalSystem, HomogenizationReport)> {
    let diagonal = homogenization_diagonal(sc.l_pow_m, sc.mu_iota, delta)?;
    let inv = 1.0 / (delta * delta);
    let z1 = scale_poly(&parts.z1, sc.l_pow_m, inv)?;
    let z2 = scale_poly(&parts.z21, sc.mu_iota, inv)?;
    let (f1, f2) = (sc.l_pow_m.round() as i64, sc.mu_iota.round() as i64);
    let z3 = TrigPoly2::new(parts.z22.terms.iter().map(|&(n, a, b)| ([n[0] * f1, n[1] * f2], a, b)).collect());
    let ratio = (sc.l_pow_m / sc.mu_iota).powf(sc.r + 2.0);
    let prefactors = [1.0, ratio, ratio / sc.big_l];
    let normalized_c0 = [c0(&z1), c0(&z2) / prefactors[1], z3.c0_mass() * inv / prefactors[2]];
    let normalized_c2 = [z1.c2_mass(), z2.c2_mass() / prefactors[1], z3.c2_mass() * inv / prefactors[2]];
    // coupling enters as ε·Z₃ with ε = 1/𝕃
    let eps = 1.0 / sc.big_l;
    let z3 = z3.scale(inv * sc.big_l);
    let cubic_term = parts.cubic.as_ref().map(|t| delta / 6.0 * t.data.iter().map(|x| x.abs()).sum::<f64>());
    let sys = MechanicalSystem::new(parts.hessian, z1, z2, z3, eps)?;
    Ok((
        sys,
        HomogenizationReport {
            diagonal,
            prefactors,
            normalized_c0,
            normalized_c2,
            hardest: sc.mu_iota < 2.0 * sc.l_pow_m,
            cubic_term,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn pstar() -> [BigRational; 2] {
        [q(1, 10), q(-3, 7)]
    }

    #[test]
    fn xi_examples() {
        // l^m = 10, μ = 3, ι = 5, a = 4, c = 3
        let c = build_xi_2res(10, 1, 4, 3, 5, 3, pstar()).unwrap();
        assert_eq!(c.xi[0], [rat(10), rat(0), rat(-4)]);
        assert_eq!(c.xi[1], [rat(0), rat(15), rat(-9)]);
        assert_eq!(c.xi[2], [rat(0), rat(0), q(1, 150)]);
        assert!(det(&c.xi).is_one());
        let id = mat_mul(&inverse(&c.xi).unwrap(), &c.xi);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id[i][j], rat((i == j) as i64));
            }
        }
        let one = build_xi_1res(10, 2, 41, pstar()).unwrap();
        assert_eq!(one.xi[1][1], rat(100));
        assert_eq!(one.xi[2][2], q(1, 10_000));
        assert!(det(&one.xi).is_one());
        assert!(build_xi_2res(10, 1, 4, 0, 5, 3, pstar()).is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        let c = build_xi_2res(10, 2, 41, 2, 7, 5, pstar()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = OldPoint {
                q: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                t: rng.gen_range(0.0..1.0),
                p: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                action: rng.gen_range(-1.0..1.0),
            };
            let back = inverse_coords(&c, &transform_coords(&c, &p).unwrap()).unwrap();
            for (a, b) in [(p.q[0], back.q[0]), (p.q[1], back.q[1]), (p.t, back.t), (p.p[0], back.p[0]), (p.p[1], back.p[1]), (p.action, back.action)] {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0) * 100.0, "{a} vs {b}");
            }
        }
        let at = OldPoint { q: [0.0; 2], t: 0.0, p: [0.1, -3.0 / 7.0], action: 0.0 };
        let n = transform_coords(&c, &at).unwrap();
        assert!(n.y[0].abs() < 1e-15 && n.y[1].abs() < 1e-15 && n.j.abs() < 1e-15);
    }

    #[test]
    fn pulled_back_hamiltonian_has_time_coefficient() {
        // h(p) = ½|p|² + ω₀·p, resonant frequency ω* = ∇h(p*) = (a/l^m, c/ι)
        let (l, m, a, mu, iota, cm) = (10i64, 1u32, 4i64, 3i64, 5i64, 3i64);
        let omega0 = [0.05, 0.1];
        let w = [a as f64 / 10.0, cm as f64 / iota as f64];
        let ps = [q(35, 100), q(5, 10)];
        assert!((ps[0].to_f64().unwrap() - (w[0] - omega0[0])).abs() < 1e-15);
        let c = build_xi_2res(l, m, a, mu, iota, cm, ps).unwrap();
        let h = |p: [f64; 2]| 0.5 * (p[0] * p[0] + p[1] * p[1]) + omega0[0] * p[0] + omega0[1] * p[1];
        let ham = |y: [f64; 2], j: f64| {
            let o = inverse_coords(&c, &NewPoint { x: [0.0; 2], s: 0.0, y, j }).unwrap();
            h(o.p) + o.action
        };
        // quadratic in (y, J): central differences are exact up to rounding
        let dj = (ham([0.0; 2], 1.0) - ham([0.0; 2], -1.0)) / 2.0;
        assert!((dj - 1.0 / 150.0).abs() < 1e-12);
        for e in [[1e-3, 0.0], [0.0, 1e-3]] {
            let lin = (ham(e, 0.0) - ham([-e[0], -e[1]], 0.0)) / 2e-3;
            assert!(lin.abs() < 1e-9, "linear term {lin}");
        }
        // curvature is ΘΘ
        let d2 = (ham([1e-3, 0.0], 0.0) + ham([-1e-3, 0.0], 0.0) - 2.0 * ham([0.0; 2], 0.0)) / 1e-6;
        assert!((d2 - 100.0).abs() < 1e-4);
    }

    #[test]
    fn two_form_preserved() {
        let c = build_xi_2res(10, 2, 41, 2, 7, 5, pstar()).unwrap();
        let m = tangent_map(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<_> = (0..200)
            .map(|_| (std::array::from_fn(|_| rng.gen_range(-1.0..1.0)), std::array::from_fn(|_| rng.gen_range(-1.0..1.0))))
            .collect();
        assert!(two_form_defect(&m, 1.0, &pairs) <= 1e-12);
        // homogenization scales the form by δ
        let d = homogenization_diagonal(100.0, 140.0, 1e-3).unwrap();
        let mut hm = [[0.0; 6]; 6];
        for i in 0..6 {
            hm[i][i] = d[i];
        }
        assert!(two_form_defect(&hm, 1e-3, &pairs) <= 1e-12);
    }

    #[test]
    fn hessian_rescale() {
        let t = Tensor::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(rescale_hessian(&[10.0, 15.0], &t).unwrap().data, vec![100.0, 0.0, 0.0, 225.0]);
        let one = rescale_hessian(&[100.0, 100.0], &Tensor::new(3, 2, vec![1.0; 8]).unwrap()).unwrap();
        assert!(one.data.iter().all(|&v| v == 1e6));
    }

    #[test]
    fn cubic_rescale_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // symmetric cubic from random coefficients of a cubic form
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let cubic = |p: [f64; 2]| c[0] * p[0].powi(3) + c[1] * p[0].powi(2) * p[1] + c[2] * p[0] * p[1].powi(2) + c[3] * p[1].powi(3);
        let mut data = vec![0.0; 8];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let ones = i + j + k;
                    data[i * 4 + j * 2 + k] = match ones {
                        0 => 6.0 * c[0],
                        1 => 2.0 * c[1],
                        2 => 2.0 * c[2],
                        _ => 6.0 * c[3],
                    };
                }
            }
        }
        let th = [1.5, 2.5];
        let r = rescale_hessian(&th, &Tensor::new(3, 2, data).unwrap()).unwrap();
        let sub = |y: [f64; 2]| cubic([th[0] * y[0], th[1] * y[1]]);
        // third derivative ∂₀∂₀∂₁ by nested central differences
        let h = 1e-2;
        let d001 = (sub([h, h]) - sub([h, -h]) - 2.0 * sub([0.0, h]) + 2.0 * sub([0.0, -h]) + sub([-h, h]) - sub([-h, -h])) / (2.0 * h * h * h);
        assert!((d001 - r.get(&[0, 0, 1])).abs() <= 1e-6 * r.get(&[0, 0, 1]).abs().max(1.0));
        let v = [0.3, -0.7];
        assert!((r.contract(&v) / 6.0 - sub(v)).abs() < 1e-12);
    }

    #[test]
    fn homogenize_uncoupled_and_time_rescale() {
        let (lm, mi, delta) = (10.0, 20.0, 1e-2);
        let amp = delta * delta;
        let parts = SystemParts {
            hessian: [[1.0, 0.0], [0.0, 1.0]],
            cubic: None,
            z1: TrigPoly::new(vec![(0, -4.0 * amp, 0.0), (1, 4.0 * amp, 0.0)]),
            z21: TrigPoly::new(vec![(0, -amp, 0.0), (1, amp, 0.0)]),
            z22: TrigPoly2::default(),
        };
        let sc = HomogenizationScales { l_pow_m: lm, mu_iota: mi, big_l: 50.0, r: 8.0 };
        let (sys, rep) = homogenize(&parts, delta, &sc).unwrap();
        assert!(sys.z3.is_zero());
        assert!((rep.normalized_c0[0] - 4.0).abs() < 1e-12);
        assert!(!rep.hardest);
        // original (x, y) flow in time s versus homogenized (X, Y) flow in time S = δ l^m μι s
        let k = lm * mi;
        let orig = |st: [f64; 4]| -> [f64; 4] {
            let (x, y) = ([st[0], st[1]], [st[2], st[3]]);
            // h′(y) = ½ yΘΘy, Z′ = Z₁(x₁) + Z₂₁(x₂)
            [k * lm * lm * y[0], k * mi * mi * y[1], -k * parts.z1.d1(x[0]), -k * parts.z21.d1(x[1])]
        };
        let homog = |st: [f64; 4]| -> [f64; 4] {
            let g = sys.grad_potential([st[0], st[1]], 0.0);
            let v = sys.velocity([st[2], st[3]]);
            [v[0], v[1], -g[0], -g[1]]
        };
        fn rk4(f: &dyn Fn([f64; 4]) -> [f64; 4], mut z: [f64; 4], dt: f64, n: usize) -> [f64; 4] {
            let add = |a: [f64; 4], b: [f64; 4], s: f64| -> [f64; 4] { std::array::from_fn(|i| a[i] + s * b[i]) };
            for _ in 0..n {
                let k1 = f(z);
                let k2 = f(add(z, k1, dt / 2.0));
                let k3 = f(add(z, k2, dt / 2.0));
                let k4 = f(add(z, k3, dt));
                z = std::array::from_fn(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
            }
            z
        }
        let big = [0.3, -0.2, 0.5, 0.1];
        let small = [big[0] * lm, big[1] * mi, big[2] * delta / lm, big[3] * delta / mi];
        let n = 20_000;
        let end_big = rk4(&homog, big, 1.0 / n as f64, n);
        let s_end = 1.0 / (delta * k);
        let end_small = rk4(&orig, small, s_end / n as f64, n);
        let mapped = [end_small[0] / lm, end_small[1] / mi, end_small[2] * lm / delta, end_small[3] * mi / delta];
        for i in 0..4 {
            assert!((mapped[i] - end_big[i]).abs() <= 1e-6, "{i}: {} vs {}", mapped[i], end_big[i]);
        }
    }
}
