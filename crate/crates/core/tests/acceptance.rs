//! Quantitative acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails. Run with `cargo test --test acceptance`.

use std::f64::consts::{PI, SQRT_2 as SQRT2};
use std::process::ExitCode;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diffusion_lab::action::{broken_action, flat_polygon, quadrature_actions, through_action, CornerActionInput, PolygonKind, IRREDUCIBLE};
use diffusion_lab::cli::{Scenario, DEFAULT_SCENARIO};
use diffusion_lab::dynamics::{
    flow_difference_bound, hyperbolic_fixed_point, linear_fit, period_law, section_expansion_rates, torus_splitting, FlowDomain, MechanicalSystem,
    ShootingOptions, TrigPoly2,
};
use diffusion_lab::fourier::{kappa3, random_admissible, truncate};
use diffusion_lab::melnikov::{check_flow_invariance, critical_points, hessian_rank_scan, melnikov_evaluate, HomoclinicFamily, MelnikovGrid};
use diffusion_lab::normalform::{admissibility_report, inf_delta_plus_exponent, small_denominator_margin, AdmissibilityParams, MarginInput};
use diffusion_lab::resonance::{build_plan, verify_plan_properties, DiophantineVector, ResonantPlan};
use diffusion_lab::symplectic::{build_xi_1res, build_xi_2res, det, tangent_map, two_form_defect};
use diffusion_lab::weakkam::{
    annulus_diagnostic, barrier, fit_flat, flat_radius, lax_oleinik_step, weak_kam_solve, Discretization, FlatOptions, Lagrangian, SolveOptions,
};

type Outcome = Result<(bool, String), String>;

fn within(measured: f64, expected: f64, rel: f64) -> bool {
    ((measured - expected) / expected).abs() <= rel
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn omega0() -> [f64; 2] {
    [2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0]
}

fn pendulums(c1: f64, c2: f64) -> MechanicalSystem {
    MechanicalSystem::pendulums(c1, c2, TrigPoly2::default(), 0.0).unwrap()
}

fn d2(p: &[BigRational; 2], q: &[BigRational; 2]) -> BigRational {
    let (dx, dy) = (&p[0] - &q[0], &p[1] - &q[1]);
    &dx * &dx + &dy * &dy
}

/// Brute-force plan: at each level scan a wide box of grid points and keep the closest one
/// whose extension passes the full property check.
fn exhaustive_plan(omega: [BigRational; 2], l: u32, m_max: u32) -> Vec<(BigInt, BigInt)> {
    let mut chosen: Vec<(BigInt, BigInt)> = vec![];
    let mut prev: Option<BigRational> = None;
    for m in 1..=m_max + 1 {
        let den = BigInt::from(l).pow(m);
        let scale = BigRational::from_integer(den.clone());
        let (ca, cb) = ((&omega[0] * &scale).round().to_integer(), (&omega[1] * &scale).round().to_integer());
        let two = BigRational::from_integer(2.into());
        let (lo, hi) = (&two / (&scale * &scale * BigRational::from_integer(BigInt::from(l * l))), &two / (&scale * &scale));
        let mut best: Option<(BigRational, BigInt, BigInt)> = None;
        for da in -6i64..=6 {
            for db in -6i64..=6 {
                let (a, b) = (&ca + da, &cb + db);
                let p = [BigRational::new(a.clone(), den.clone()), BigRational::new(b.clone(), den.clone())];
                let dist = d2(&p, &omega);
                if dist < lo || dist > hi || prev.as_ref().is_some_and(|q| dist >= *q) {
                    continue;
                }
                let earlier = chosen.iter().enumerate().any(|(j, (pa, pb))| {
                    let dj = BigInt::from(l).pow(j as u32 + 1);
                    BigRational::new(pa.clone(), dj.clone()) == p[0] || BigRational::new(pb.clone(), dj) == p[1]
                });
                if earlier {
                    continue;
                }
                if let Some((pa, pb)) = chosen.last() {
                    let dl = BigInt::from(l).pow(m - 1);
                    let prev_pt = [BigRational::new(pa.clone(), dl.clone()), BigRational::new(pb.clone(), dl)];
                    let half = [prev_pt[0].clone(), p[1].clone()];
                    let dh = d2(&half, &omega);
                    if dh > d2(&prev_pt, &omega) || dh < dist {
                        continue;
                    }
                    let mut a_list: Vec<BigInt> = chosen.iter().map(|c| c.0.clone()).collect();
                    let mut b_list: Vec<BigInt> = chosen.iter().map(|c| c.1.clone()).collect();
                    a_list.push(a.clone());
                    b_list.push(b.clone());
                    let trial = ResonantPlan::from_numerators(l, omega.clone(), 1, a_list, b_list).unwrap();
                    // the property check needs three levels
                    if trial.points.len() >= 3 && !verify_plan_properties(&trial).unwrap().pass() {
                        continue;
                    }
                }
                let better = match &best {
                    None => true,
                    Some((bd, ba, bb)) => dist < *bd || (dist == *bd && (&a, &b) < (ba, bb)),
                };
                if better {
                    best = Some((dist, a, b));
                }
            }
        }
        let (dist, a, b) = best.expect("oracle finds a point");
        chosen.push((a, b));
        prev = Some(dist);
    }
    chosen
}

fn resonant_plan() -> Outcome {
    let start = Instant::now();
    let v = DiophantineVector::new(omega0(), 1.0, 0.01).map_err(err)?;
    let plan = build_plan(&v, 10, 6).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let props = verify_plan_properties(&plan).map_err(err)?;
    let mut windows = true;
    for (i, d) in plan.distances.iter().enumerate() {
        let m = plan.level(i) as i32;
        windows &= SQRT2 / 10f64.powi(m + 1) <= *d && *d <= SQRT2 / 10f64.powi(m);
    }
    let oracle = exhaustive_plan(v.exact_omega().map_err(err)?, 10, 6);
    let agree = oracle == plan.points;
    Ok((
        props.pass() && windows && agree && elapsed < 1.0,
        format!("{} levels, properties {}, windows {windows}, oracle agrees {agree}, {elapsed:.3} s", plan.points.len(), props.pass()),
    ))
}

fn fourier_tail() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kappa = 4.0 * PI * PI + PI.powi(4) / 45.0;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let norm = rng.gen_range(0.5..2.0);
        let f = random_admissible(&mut rng, 8, norm, 60, 80);
        f.validate().map_err(err)?;
        for k in [10.0, 20.0, 40.0] {
            let (low, _) = truncate(&f, k).map_err(err)?;
            let discarded = f.c2_mass() - low.c2_mass();
            let bound = kappa * k.powi(-2) * norm;
            worst = worst.max(discarded / bound);
            violations += (discarded > bound) as usize;
        }
    }
    // the library value is a certified upper bound on the lattice sum
    let close = kappa3() >= kappa && kappa3() - kappa < 1e-6;
    Ok((violations == 0 && close, format!("{violations} violations in 300 checks, worst ratio {worst:.2e}, kappa3 {:.6}", kappa3())))
}

fn small_denominator() -> Outcome {
    let rep = small_denominator_margin(&MarginInput {
        l: 10,
        m: 2,
        a_m: 41,
        y_range: (0.73, 0.741),
        delta: 1e-9,
        delta_plus: 1e-5,
        k_max: 20,
        samples: 2000,
    })
    .map_err(err)?;
    let (sigma, r, xi) = (58.0, 8.0, 4.5);
    let adm = admissibility_report(&AdmissibilityParams::new(sigma, r, xi, 2, 10, 4.686e-3, 1e-60, 1e-40));
    let chain = adm.line("sigma_gt_3r_4xi_15").map_or(false, |l| l.pass && l.lhs == 3.0 * r + 4.0 * xi + 15.0);
    let oracle = |s: f64| (s - 7.0 - r - 2.0 * xi) / (2.0 * (s + r + 2.0));
    let e = inf_delta_plus_exponent(sigma, r, xi);
    let sweep: Vec<f64> = (0..2000).map(|k| inf_delta_plus_exponent(sigma + k as f64 * 10.0, r, xi)).collect();
    let monotone = sweep.windows(2).all(|w| w[1] > w[0]) && sweep.iter().all(|&v| v > 1.0 / 6.0 && v < 0.5);
    let limit = 0.5 - inf_delta_plus_exponent(1e9, r, xi);
    let pass = rep.pass && chain && (e - 0.25).abs() < 1e-15 && (e - oracle(sigma)).abs() < 1e-15 && monotone && limit < 1e-7;
    Ok((pass, format!("min {:.4e} >= alpha {:.4e}; exponent {e} at (58, 8, 4.5); monotone {monotone}; 1/2 - e(1e9) = {limit:.1e}", rep.measured_min, rep.alpha)))
}

fn unimodular_symplectic() -> Outcome {
    let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let base = [q(1, 10), q(-3, 7)];
    let changes = [
        build_xi_2res(10, 1, 4, 3, 5, 3, base.clone()).map_err(err)?,
        build_xi_2res(10, 2, 41, 2, 7, 5, base.clone()).map_err(err)?,
        build_xi_2res(10, 3, 414, 5, 11, 8, base.clone()).map_err(err)?,
        build_xi_1res(10, 2, 41, base.clone()).map_err(err)?,
    ];
    let unimodular = changes.iter().all(|c| det(&c.xi).is_one());
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pairs: Vec<([f64; 6], [f64; 6])> =
        (0..1000).map(|_| (std::array::from_fn(|_| rng.gen_range(-1.0..1.0)), std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))).collect();
    let mut worst = 0.0f64;
    for c in &changes {
        worst = worst.max(two_form_defect(&tangent_map(c).map_err(err)?, 1.0, &pairs));
    }
    Ok((unimodular && worst <= 1e-12, format!("det = 1 exactly for {} changes {unimodular}; two-form residual {worst:.2e} on 1000 pairs", changes.len())))
}

fn eigen_period_expansion() -> Outcome {
    let start = Instant::now();
    let sys = pendulums(4.0, 1.0);
    let h = hyperbolic_fixed_point(&sys, 0.3).map_err(err)?;
    let eig = (h.lambda1 - 2.0).abs() <= 1e-8 && (h.lambda2 - 1.0).abs() <= 1e-8;
    let es = [1e-6, 1e-5, 1e-4, 1e-3];
    let fit = period_law(&sys, &h, &es, 2e-3).map_err(err)?;
    let mut pts = vec![];
    for &e in &es {
        let rep = section_expansion_rates(&sys, &h, e, 0.25, 2e-3).map_err(err)?;
        pts.push(((1.0 / e).ln(), rep.local.expansion.ln()));
    }
    let (slope, _) = linear_fit(&pts);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = eig && within(fit.slope, 1.0, 0.02) && within(slope, 2.0, 0.05) && elapsed < 120.0;
    Ok((
        pass,
        format!("lambda = ({:.10}, {:.10}); period slope {:.5} vs 1; expansion slope {slope:.4} vs 2; {elapsed:.1} s", h.lambda1, h.lambda2, fit.slope),
    ))
}

fn torus_curvature() -> Outcome {
    let mut parts = vec![];
    let mut pass = true;
    for (c1, c2) in [(4.0, 1.0), (2.25, 1.0)] {
        let sys = pendulums(c1, c2);
        let h = hyperbolic_fixed_point(&sys, 0.3).map_err(err)?;
        for axis in [0, 1] {
            let t = torus_splitting(&sys, &h, axis, 1e-3, 1e-2, ShootingOptions::default()).map_err(err)?;
            // curvature across the transverse factor: twice its exponent √c
            let want = 2.0 * [c1, c2][1 - axis].sqrt();
            pass &= within(t.second_difference, want, 0.01);
            parts.push(format!("{:.5}/{want}", t.second_difference));
        }
    }
    Ok((pass, parts.join(", ")))
}

fn actions() -> Outcome {
    let worked = CornerActionInput { lambda: [2.0, 1.0], entry: [0.1, 0.0], exit: [0.0, 0.1], t: 1.0 };
    let (th, br) = (through_action(&worked).map_err(err)?, broken_action(&worked));
    let example = (th - 0.01175175).abs() < 5e-9 && (br - 0.01).abs() < 1e-15;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut violations, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let l2 = rng.gen_range(0.2..2.0);
        let inp = CornerActionInput {
            lambda: [l2 * rng.gen_range(1.05..3.0), l2],
            entry: [rng.gen_range(-0.3..=0.0), rng.gen_range(-0.3..=0.0)],
            exit: [rng.gen_range(0.0..=0.3), rng.gen_range(0.0..=0.3)],
            t: rng.gen_range(0.2..12.0),
        };
        let th = through_action(&inp).map_err(err)?;
        violations += (th <= broken_action(&inp)) as usize;
        let (qt, qb) = quadrature_actions(&inp).map_err(err)?;
        worst = worst.max((qt - th).abs()).max((qb - broken_action(&inp)).abs());
    }
    let pass = example && violations == 0 && worst <= 1e-9;
    Ok((pass, format!("worked {th:.8} vs {br:.8}; {violations} violations in 1000; quadrature gap {worst:.2e}")))
}

fn melnikov() -> Outcome {
    let r = Scenario::from_toml(DEFAULT_SCENARIO).and_then(|s| s.resolve()).map_err(err)?;
    let family = HomoclinicFamily::new(&r.uncoupled().map_err(err)?, [1, 1]).map_err(err)?;
    let z3 = r.coupling_poly();
    let h1 = move |x: [f64; 2], _: [f64; 2]| z3.eval(x);
    let c = [PI, PI];
    let grid = |n: usize, hw: f64| MelnikovGrid { lo: [c[0] - hw, c[1] - hw], hi: [c[0] + hw, c[1] + hw], n: [n, n] };
    let coarse = melnikov_evaluate(&family, &h1, &grid(33, 1.2)).map_err(err)?;
    let fine = melnikov_evaluate(&family, &h1, &grid(65, 1.2)).map_err(err)?;
    let ratio = check_flow_invariance(&coarse, &family).residual / check_flow_invariance(&fine, &family).residual;

    let g = |x: [f64; 2], _: [f64; 2]| (2.0 * x[0] - x[1]).sin();
    let z3b = r.coupling_poly();
    let sum = move |x: [f64; 2], y: [f64; 2]| 3.0 * z3b.eval(x) - 0.5 * g(x, y);
    let small = grid(9, 1.2);
    let (a, b, s) = (
        melnikov_evaluate(&family, &h1, &small).map_err(err)?,
        melnikov_evaluate(&family, &g, &small).map_err(err)?,
        melnikov_evaluate(&family, &sum, &small).map_err(err)?,
    );
    let defect = (0..s.values.len()).map(|i| (s.values[i] - 3.0 * a.values[i] + 0.5 * b.values[i]).abs()).fold(0.0, f64::max);
    let tolerance = 1e-10 * (1.0 + s.span()) + s.tail_estimate + a.tail_estimate + b.tail_estimate;

    let crit = critical_points(&family, &h1, c, 0.5).map_err(err)?;
    // the open separatrices cover (0, 2π) in each angle
    let rank = hessian_rank_scan(&family, &h1, &grid(9, PI - 0.2)).map_err(err)?;
    let pass = (3.5..=4.5).contains(&ratio) && defect <= tolerance && crit.count == 1 && rank.max_rank <= 1;
    Ok((pass, format!("refinement ratio {ratio:.3}; linearity {defect:.1e} <= {tolerance:.1e}; {} critical line(s); max rank {} over {} points", crit.count, rank.max_rank, rank.samples)))
}

fn weak_kam() -> Outcome {
    let opts = SolveOptions::default();
    let pend = Lagrangian::mechanical_1d(1.0, |x: f64| x.cos() - 1.0).map_err(err)?;
    let d = Discretization::new(512, 0.2);
    let res = weak_kam_solve(&pend, [0.0; 2], &d, &opts).map_err(err)?;
    let u_pi = res.u_minus.values[256] - res.u_minus.values[0];
    let b_pi = barrier(&res.u_minus, &res.u_plus).map_err(err)?.field.values[256];
    let width = flat_radius(&pend, [1.0, 0.0], &d, &opts, &FlatOptions::default()).map_err(err)?;
    let line = within(u_pi, 4.0, 0.02) && within(b_pi, 8.0, 0.02) && within(width, 4.0 / PI, 0.03);

    let free = Lagrangian::free(2).map_err(err)?;
    let mut free_err = 0.0f64;
    for c in [[0.0, 0.0], [0.4, -1.3], [2.05, 0.7], [-1.5, 1.5]] {
        let r = weak_kam_solve(&free, c, &Discretization::new(16, 0.3), &opts).map_err(err)?;
        free_err = free_err.max((r.alpha - 0.5 * (c[0] * c[0] + c[1] * c[1])).abs());
    }

    let rect = fit_flat(&Lagrangian::from_system(&pendulums(4.0, 1.0)).map_err(err)?, &Discretization::new(32, 0.4), &opts, &FlatOptions::default())
        .map_err(err)?;
    let rectangle = rect.polygon.kind == PolygonKind::Rectangle;

    let r = Scenario::from_toml(DEFAULT_SCENARIO).and_then(|s| s.resolve()).map_err(err)?;
    let shipped = Lagrangian::from_system(&r.system().map_err(err)?).map_err(err)?;
    let flat = fit_flat(&shipped, &Discretization::new(32, 0.4), &opts, &FlatOptions::default()).map_err(err)?;
    let mut counts = vec![rect.polygon.vertices.len(), flat.polygon.vertices.len()];
    // polygons from random support data
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let (w1, w2) = (rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
        let diag = [(w1 + w2) * rng.gen_range(0.6..1.1), (w1 + w2) * rng.gen_range(0.6..1.1)];
        let support = |g: [i64; 2]| match (g[0] != 0, g[1] != 0) {
            (true, false) => w1,
            (false, true) => w2,
            _ => diag[(g[0] != g[1]) as usize],
        };
        let supports: Vec<([i64; 2], f64)> = IRREDUCIBLE.iter().map(|&g| (g, support(g))).collect();
        counts.push(flat_polygon(&supports).map_err(err)?.vertices.len());
    }
    let shapes = counts.iter().all(|n| [4, 6, 8].contains(n));

    let start = Instant::now();
    let big = weak_kam_solve(&shipped, [0.0; 2], &Discretization::new(128, 0.2), &opts).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();

    let (mono, contraction) = lax_oleinik_pairs(&shipped)?;
    let pass = line && free_err <= 1e-6 && rectangle && shapes && mono && contraction && elapsed < 300.0;
    Ok((
        pass,
        format!(
            "u(pi) {u_pi:.4}, B(pi) {b_pi:.4}, half-width {width:.4}; free error {free_err:.1e}; uncoupled {:?}; shipped {:?}; {} polygons in {{4,6,8}} {shapes}; monotone {mono}, non-expansive {contraction}; 128^2 solve {elapsed:.1} s ({} iterations, alpha {:.1e})",
            rect.polygon.kind,
            flat.polygon.kind,
            counts.len(),
            big.iterations,
            big.alpha
        ),
    ))
}

fn lax_oleinik_pairs(l: &Lagrangian) -> Result<(bool, bool), String> {
    let d = Discretization::new(12, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut mono, mut contraction) = (true, true);
    let c = [0.3, -0.2];
    for _ in 0..1000 {
        let mut u = d.zeros(l);
        let mut v = u.clone();
        let mut w = u.clone();
        for i in 0..u.values.len() {
            u.values[i] = rng.gen_range(-1.0..1.0);
            v.values[i] = u.values[i] + rng.gen_range(0.0..0.5);
            w.values[i] = rng.gen_range(-1.0..1.0);
        }
        let (tu, tv, tw) = (lax_oleinik_step(&u, l, c, &d).map_err(err)?, lax_oleinik_step(&v, l, c, &d).map_err(err)?, lax_oleinik_step(&w, l, c, &d).map_err(err)?);
        mono &= tu.values.iter().zip(&tv.values).all(|(a, b)| a <= b);
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        contraction &= sup(&tu.values, &tw.values) <= sup(&u.values, &w.values) + 1e-12;
    }
    Ok((mono, contraction))
}

fn annulus() -> Outcome {
    let r = Scenario::from_toml(DEFAULT_SCENARIO).and_then(|s| s.resolve()).map_err(err)?;
    let l = Lagrangian::from_system(&r.system().map_err(err)?).map_err(err)?;
    let rep = annulus_diagnostic(&l, &Discretization::new(32, 0.4), &SolveOptions::default(), &[0.01, 0.0475, 0.1], 4, (1e-6, 0.3)).map_err(err)?;
    let below = rep.samples.iter().filter(|s| s.delta <= rep.verified_delta).all(|s| s.coverage.map_or(true, |c| c < 1.0));
    let reach = 3.0 * 1e-6f64.powf(0.3);
    let pass = below && rep.verified_delta >= reach && (rep.wedge_reach - reach).abs() < 1e-12;
    Ok((pass, format!("verified {:.4} >= 3 eps^d = {reach:.4}; coverage < 1 below it {below}", rep.verified_delta)))
}

fn gronwall() -> Outcome {
    let r = Scenario::from_toml(DEFAULT_SCENARIO).and_then(|s| s.resolve()).map_err(err)?;
    let a = r.system().map_err(err)?;
    let b = a.clone().with_tail(r.tail());
    let eps: f64 = 1e-6;
    let t = (1.0 / eps).powf(1.0 / 3.0).ln();
    let rep = flow_difference_bound(&a, &b, t, FlowDomain { y_max: 1.0, samples: 200, seed: 5, dt: 5e-3 }).map_err(err)?;
    Ok((rep.pass && rep.slack >= 2.0, format!("t = {t:.4}; bound {:.3e}, measured {:.3e}; slack {:.3e}", rep.bound, rep.state_difference.max(rep.tangent_difference), rep.slack)))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("resonant plan", resonant_plan),
        ("fourier tail bound", fourier_tail),
        ("small denominators and exponents", small_denominator),
        ("unimodularity and symplecticity", unimodular_symplectic),
        ("eigenvalues, period law, expansion", eigen_period_expansion),
        ("generating-function curvature", torus_curvature),
        ("action comparison", actions),
        ("melnikov", melnikov),
        ("weak KAM", weak_kam),
        ("annulus", annulus),
        ("gronwall", gronwall),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!("[{}] {name}: {detail} [{:.1} s]", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
