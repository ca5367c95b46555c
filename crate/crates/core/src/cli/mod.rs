//! Experiment driver: runs the pipeline stages on a scenario and writes CSV artifacts plus
//! `report.txt` into an output directory.

pub mod scenario;

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{
    broken_action, decompose_homology, flat_polygon, quadrature_actions, separatrix_c_value, through_action, CornerActionInput, IRREDUCIBLE,
};
use crate::dynamics::{
    check_u5prime, check_u6_u7, find_homoclinic, flow_difference_bound, hyperbolic_fixed_point, linear_fit, period_law, section_expansion_rates,
    time_window_holds, torus_splitting, FlowDomain, Homoclinic, HomoclinicOptions, Homology, HyperbolicData, MechanicalSystem, ShootingOptions,
};
use crate::error::{Error, Result};
use crate::fourier::{random_admissible, truncate};
use crate::melnikov::{check_flow_invariance, critical_points, hessian_rank_scan, melnikov_evaluate, HomoclinicFamily, MelnikovGrid};
use crate::normalform::{admissibility_report, inf_delta_plus_exponent, small_denominator_margin, AdmissibilityParams, AdmissibilityReport, MarginInput};
use crate::resonance::{build_plan, diophantine_check, plan_csv, verify_plan_properties, DiophantineVector, ResonantPlan};
use crate::weakkam::{
    alpha_scan, annulus_diagnostic, barrier, fit_flat, flat_radius, mane_set_estimate, semiconcavity_constant, weak_kam_solve, ClassGrid,
    Discretization, FlatOptions, Lagrangian, SolveOptions,
};
pub use scenario::{explain, Resolved, Scenario, DEFAULT_SCENARIO};

/// Pipeline stages; `All` runs them in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Plan,
    Normalform,
    Conditions,
    Homoclinic,
    Period,
    Melnikov,
    Actions,
    Weakkam,
    Annulus,
    All,
}

const ORDER: [Stage; 9] = [
    Stage::Plan,
    Stage::Normalform,
    Stage::Conditions,
    Stage::Homoclinic,
    Stage::Period,
    Stage::Melnikov,
    Stage::Actions,
    Stage::Weakkam,
    Stage::Annulus,
];

/// Command-line overrides of scenario fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    /// False when a scale inequality of the averaging step fails.
    pub admissible: bool,
    pub files: Vec<String>,
    /// Names of the checks that failed.
    pub failed: Vec<String>,
}

struct Section {
    lines: Vec<String>,
    failed: Vec<String>,
}

impl Section {
    fn new(title: &str) -> Self {
        Section { lines: vec![format!("== {title}")], failed: vec![] }
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl std::fmt::Display) {
        self.lines.push(format!("{name}: {} ({detail})", if pass { "pass" } else { "FAIL" }));
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn note(&mut self, name: &str, detail: impl std::fmt::Display) {
        self.lines.push(format!("{name}: {detail}"));
    }
}

struct Ctx {
    r: Resolved,
    out: PathBuf,
    files: Vec<String>,
    sections: Vec<Section>,
    plan: ResonantPlan,
    diophantine: DiophantineVector,
    admissibility: AdmissibilityReport,
    sys: MechanicalSystem,
    hyper: Option<HyperbolicData>,
    homoclinic: Option<Homoclinic>,
}

/// Index lines must hold before anything runs; scale lines only downgrade the run.
const INDEX_LINES: [&str; 4] = ["sigma_gt_r_plus_2", "xi_gt_8_over_r_minus_6", "sigma_gt_3r_4xi_15", "delta_plus_window_nonempty"];

/// Runs `stage` and writes its artifacts under `out`.
pub fn run(stage: Stage, scenario: Scenario, out: &Path, ov: Overrides) -> Result<Outcome> {
    let mut scenario = scenario;
    if let Some(s) = ov.seed {
        scenario.seed = s;
    }
    if let Some(g) = ov.grid {
        scenario.solver.grid = g;
    }
    if let Some(dt) = ov.dt {
        scenario.solver.dt = dt;
    }
    let r = scenario.resolve()?;
    std::fs::create_dir_all(out)?;

    let f = &r.scenario.frequency;
    let p = &r.scenario.plan;
    let diophantine = DiophantineVector::new(r.omega, f.tau, f.c0)?;
    let plan = build_plan(&diophantine, p.l, p.m_max)?;
    let m = r.scenario.averaging.m;
    let d_m = (0..plan.points.len())
        .find(|&i| plan.level(i) == m)
        .map(|i| plan.distances[i])
        .ok_or_else(|| Error::Config(format!("plan has no level {m}")))?;
    let av = &r.scenario.averaging;
    let admissibility = admissibility_report(&AdmissibilityParams::new(p.sigma, p.r, p.xi, m, p.l, d_m, av.delta, av.delta_plus));
    for name in INDEX_LINES {
        let line = admissibility.line(name).expect("index line present");
        if !line.pass {
            return Err(Error::Inadmissible(format!("{name} fails: {:.6} vs {:.6}", line.lhs, line.rhs)));
        }
    }
    let sys = r.system()?;
    let mut ctx = Ctx { r, out: out.to_path_buf(), files: vec![], sections: vec![], plan, diophantine, admissibility, sys, hyper: None, homoclinic: None };

    let stages: Vec<Stage> = if stage == Stage::All { ORDER.to_vec() } else { vec![stage] };
    for s in stages {
        match s {
            Stage::Plan => ctx.plan_stage()?,
            Stage::Normalform => ctx.normalform_stage()?,
            Stage::Conditions => ctx.conditions_stage()?,
            Stage::Homoclinic => ctx.homoclinic_stage()?,
            Stage::Period => ctx.period_stage()?,
            Stage::Melnikov => ctx.melnikov_stage()?,
            Stage::Actions => ctx.actions_stage()?,
            Stage::Weakkam => ctx.weakkam_stage()?,
            Stage::Annulus => ctx.annulus_stage()?,
            Stage::All => unreachable!(),
        }
    }
    ctx.finish()
}

fn fit_within(measured: f64, expected: f64, rel: f64) -> bool {
    ((measured - expected) / expected).abs() <= rel
}

impl Ctx {
    fn write(&mut self, name: &str, content: String) -> Result<()> {
        std::fs::write(self.out.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn solver(&self) -> &scenario::SolverConfig {
        &self.r.scenario.solver
    }

    fn constant(&self, name: &str) -> f64 {
        self.r.constants.get(name)
    }

    fn admissible(&self) -> bool {
        self.admissibility.pass()
    }

    fn finish(mut self) -> Result<Outcome> {
        let s = &self.r.scenario;
        let mut text = String::new();
        let _ = writeln!(text, "scenario: {}", s.name);
        let _ = writeln!(text, "seed: {}", s.seed);
        let status = if self.admissible() { "admissible" } else { "inadmissible: diagnostics only" };
        let _ = writeln!(text, "status: {status}");
        for line in self.admissibility.lines.iter().filter(|l| !l.pass) {
            let _ = writeln!(text, "  violated: {} ({:.4e} vs {:.4e})", line.name, line.lhs, line.rhs);
        }
        let mut failed = vec![];
        for sec in &self.sections {
            text.push('\n');
            for l in &sec.lines {
                let _ = writeln!(text, "{l}");
            }
            failed.extend(sec.failed.iter().cloned());
        }
        let _ = writeln!(text, "\nfailed checks: {}", if failed.is_empty() { "none".to_string() } else { failed.join(", ") });
        self.write("report.txt", text)?;
        Ok(Outcome { admissible: self.admissible(), files: self.files, failed })
    }

    fn hyperbolic(&mut self) -> Result<HyperbolicData> {
        if self.hyper.is_none() {
            self.hyper = Some(hyperbolic_fixed_point(&self.sys, self.solver().local_radius)?);
        }
        Ok(self.hyper.clone().unwrap())
    }

    fn homoclinic(&mut self) -> Result<Homoclinic> {
        if self.homoclinic.is_none() {
            let h = self.hyperbolic()?;
            let class = Homology::new(self.solver().homoclinic_class)?;
            self.homoclinic = Some(find_homoclinic(&self.sys, &h, class, HomoclinicOptions::default())?);
        }
        Ok(self.homoclinic.clone().unwrap())
    }

    fn plan_stage(&mut self) -> Result<()> {
        let mut s = Section::new("plan");
        let csv = plan_csv(&self.plan)?;
        self.write("plan.csv", csv)?;
        let rep = verify_plan_properties(&self.plan)?;
        s.check("parallel_noncollinear", rep.parallel_noncollinear, "segment pairs");
        s.check("adjacency", rep.adjacency, "segment pairs");
        s.check("lattice_intersections", rep.lattice_intersections, "frequency pairs");
        for v in &rep.violations {
            s.note("violation", v);
        }
        let l = self.plan.l as f64;
        for i in 0..self.plan.points.len() {
            let m = self.plan.level(i) as i32;
            let (d, lo, hi) = (self.plan.distances[i], SQRT_2 / l.powi(m + 1), SQRT_2 / l.powi(m));
            s.check(&format!("d_{m}_window"), lo <= d && d <= hi, format!("{d:.6e} in [{lo:.3e}, {hi:.3e}]"));
        }
        let dio = diophantine_check(&self.diophantine, 50)?;
        s.check("diophantine", dio.pass, format!("min margin {:.4e} at k = {:?}, |k| <= 50", dio.min_margin, dio.worst_k));
        self.sections.push(s);
        Ok(())
    }

    fn normalform_stage(&mut self) -> Result<()> {
        let mut s = Section::new("normalform");
        let mut csv = String::from("name,lhs,rhs,slack,pass\n");
        for line in &self.admissibility.lines {
            let _ = writeln!(csv, "{},{:.12e},{:.12e},{:.12e},{}", line.name, line.lhs, line.rhs, line.slack, line.pass);
            s.check(line.name, line.pass, format!("{:.4e} vs {:.4e}", line.lhs, line.rhs));
        }
        self.write("admissibility.csv", csv)?;

        let (p, av) = (&self.r.scenario.plan, &self.r.scenario.averaging);
        let mg = &av.margin;
        let margin = small_denominator_margin(&MarginInput {
            l: p.l,
            m: av.m,
            a_m: mg.a_m,
            y_range: (mg.y_range[0], mg.y_range[1]),
            delta: mg.delta,
            delta_plus: mg.delta_plus,
            k_max: mg.k_max,
            samples: mg.samples,
        })?;
        s.check("small_denominator_margin", margin.pass, format!("measured {:.6e} >= alpha {:.6e}", margin.measured_min, margin.alpha));

        let (sigma, r, xi) = (p.sigma, p.r, p.xi);
        let e = inf_delta_plus_exponent(sigma, r, xi);
        s.note("delta_plus_exponent", format!("{e:.6} at sigma = {sigma}"));
        let start = (3.0 * r + 4.0 * xi + 15.0).floor() + 1.0;
        let mut csv = String::from("sigma,exponent\n");
        let curve: Vec<(f64, f64)> = (0..400).map(|k| start + k as f64).map(|sg| (sg, inf_delta_plus_exponent(sg, r, xi))).collect();
        for (sg, v) in &curve {
            let _ = writeln!(csv, "{sg},{v:.12e}");
        }
        self.write("exponents.csv", csv)?;
        let increasing = curve.windows(2).all(|w| w[1].1 > w[0].1);
        let inside = curve.iter().all(|&(_, v)| v > 1.0 / 6.0 && v < 0.5);
        s.check("exponent_window", increasing && inside, format!("increasing in (1/6, 1/2) over sigma in [{start}, {}]", start + 399.0));

        let mut rng = ChaCha8Rng::seed_from_u64(self.r.scenario.seed);
        let f = random_admissible(&mut rng, r.floor() as u32, 1.0, 60, 200);
        let mut csv = String::from("cutoff,discarded,bound\n");
        let mut ok = true;
        for k in [10.0, 20.0, 40.0] {
            let (low, bound) = truncate(&f, k)?;
            let discarded = f.c2_mass() - low.c2_mass();
            ok &= discarded <= bound;
            let _ = writeln!(csv, "{k},{discarded:.12e},{bound:.12e}");
        }
        self.write("truncation.csv", csv)?;
        s.check("fourier_tail", ok, "discarded C2 mass within the kappa3 bound for K = 10, 20, 40");
        self.sections.push(s);
        Ok(())
    }

    fn conditions_stage(&mut self) -> Result<()> {
        let mut s = Section::new("conditions");
        let h = self.hyperbolic()?;
        let a = self.sys.a;
        s.check("C3", a == [[1.0, 0.0], [0.0, 1.0]], format!("kinetic form {a:?}"));
        let fp = h.fixed_point;
        let hz = self.sys.z3.hess(fp);
        let off = (self.sys.eps * hz[0][1]).abs() + a[0][1].abs();
        s.check(
            "C4",
            fp[0].hypot(fp[1]) < 1e-9 && h.max_value.abs() < 1e-12 && off < 1e-12,
            format!("maximum {:.2e} at {fp:?}, off-diagonal Hessian {off:.2e}", h.max_value),
        );
        let (c8, c9) = (self.constant("c8"), self.constant("c9"));
        s.check(
            "U3'",
            h.gaps_hold(c8, c9),
            format!("lambda = ({:.10}, {:.10}), gap {:.4} >= {c8}, ratio {:.4} >= 1 + {c9}", h.lambda1, h.lambda2, h.lambda1 - h.lambda2, h.ratio()),
        );
        let k = self.solver().u5_order;
        let u5 = check_u5prime(h.lambda1, h.lambda2, k);
        s.check("U5'", u5.pass, format!("order {k}, smallest combination {:.4e}", u5.min_abs));
        let iota = self.constant("iota");
        s.check("iota", 1.0 + 1e3 * iota < h.ratio(), format!("1 + 1000 iota = {:.4} < {:.4}", 1.0 + 1e3 * iota, h.ratio()));

        let hc = self.homoclinic()?;
        let u6 = check_u6_u7(&self.sys, &h, &hc, self.constant("K"));
        let fmt_fit = |f: &crate::dynamics::AsymptoticFit| match f.exponent {
            Some(e) => format!("exponent {e:.4}, prefactor {:.4e}", f.prefactor),
            None => "Q1 vanishes".to_string(),
        };
        s.check(
            "U6",
            u6.pass,
            format!(
                "class {:?}: departure {}; approach {}; expected {:.4}{}",
                self.solver().homoclinic_class,
                fmt_fit(&u6.departure),
                fmt_fit(&u6.approach),
                u6.expected_exponent,
                u6.violation.map(|v| format!("; {v}")).unwrap_or_default()
            ),
        );
        s.check("splitting_minimizer", u6.u7_pass, format!("{} minimizer(s), curvature {:.6}", hc.minimizer_count, hc.splitting_second_derivative));

        let class = self.solver().melnikov_class;
        let family = HomoclinicFamily::new(&self.r.uncoupled()?, class)?;
        let z3 = self.r.coupling_poly();
        let h1 = move |x: [f64; 2], _: [f64; 2]| z3.eval(x);
        let center = [PI * class[0] as f64, PI * class[1] as f64];
        let crit = critical_points(&family, &h1, center, self.solver().melnikov_ball)?;
        s.check("U7", crit.u7_pass && crit.count == 1, format!("{} critical line(s) of M in the ball around {center:?}", crit.count));

        let (eps_t, d) = (self.r.scenario.potential.tail_amplitude, self.constant("d"));
        let (lhs, rhs, ok) = time_window_holds(h.lambda2, eps_t, d);
        s.note("time_window", format!("{} ({lhs:.4} vs {rhs:.4}; holds iff d <= lambda2/(2(1+lambda2)))", if ok { "holds" } else { "fails" }));

        let tail = self.r.tail();
        let t = -eps_t.ln() / 3.0;
        let dom = FlowDomain { y_max: 1.0, samples: self.solver().gronwall_samples, seed: self.r.scenario.seed, dt: self.solver().gronwall_dt };
        let g = flow_difference_bound(&self.sys, &self.sys.clone().with_tail(tail), t, dom)?;
        s.check(
            "gronwall",
            g.pass && g.slack >= 2.0,
            format!("t = {t:.4}, bound {:.4e}, measured {:.4e}, slack {:.3e}, {} used", g.bound, g.state_difference.max(g.tangent_difference), g.slack, g.used),
        );
        self.sections.push(s);
        Ok(())
    }

    fn homoclinic_stage(&mut self) -> Result<()> {
        let mut s = Section::new("homoclinic");
        let h = self.hyperbolic()?;
        let hc = self.homoclinic()?;
        self.write("homoclinic.csv", hc.trajectory.to_csv())?;
        let mut csv = String::from("transverse,splitting\n");
        for (x, v) in &hc.scan {
            let _ = writeln!(csv, "{x:.12e},{v:.12e}");
        }
        self.write("splitting_scan.csv", csv)?;
        s.note("section", format!("X{} = {:.6}", hc.class.axis + 1, hc.section_value));
        s.note("minimizer", format!("{:.10} with momentum {:?}, mismatch {:.2e}", hc.transverse, hc.momentum, hc.mismatch));
        s.check("unique_minimizer", hc.minimizer_count == 1 && hc.splitting_second_derivative > 0.0, format!("curvature {:.6}", hc.splitting_second_derivative));
        for (name, rate) in [("departure_rate", hc.departure_rate), ("approach_rate", hc.approach_rate)] {
            s.check(name, rate >= 0.9 * h.lambda2 && rate <= 1.1 * h.lambda1, format!("{rate:.6} in [0.9 lambda2, 1.1 lambda1]"));
        }
        let g = self.solver().homoclinic_class;
        let back = find_homoclinic(&self.sys, &h, Homology::new([-g[0], -g[1]])?, HomoclinicOptions::default())?;
        let rev = (back.transverse - hc.transverse).abs() + (back.momentum[0] + hc.momentum[0]).abs() + (back.momentum[1] + hc.momentum[1]).abs();
        s.check("time_reversal", rev < 1e-6, format!("defect {rev:.2e} against the class {:?}", [-g[0], -g[1]]));

        let free = self.r.uncoupled()?;
        let h0 = hyperbolic_fixed_point(&free, self.solver().local_radius)?;
        for axis in [0, 1] {
            let t = torus_splitting(&free, &h0, axis, 1e-3, 1e-2, ShootingOptions::default())?;
            s.check(
                &format!("torus_curvature_{}", axis + 1),
                fit_within(t.second_difference, t.expected, 0.01),
                format!("{:.6} vs {:.6}", t.second_difference, t.expected),
            );
        }
        self.sections.push(s);
        Ok(())
    }

    fn period_stage(&mut self) -> Result<()> {
        let mut s = Section::new("period");
        let h = self.hyperbolic()?;
        let (energies, dt) = (self.solver().energies.clone(), self.solver().dt);
        let fit = period_law(&self.sys, &h, &energies, dt)?;
        let mut csv = String::from("log_inv_energy,period,residual\n");
        for (p, res) in fit.points.iter().zip(&fit.residuals) {
            let _ = writeln!(csv, "{:.12e},{:.12e},{:.6e}", p.0, p.1, res);
        }
        self.write("period.csv", csv)?;
        s.check("period_slope", fit_within(fit.slope, 1.0 / h.lambda2, 0.02), format!("{:.6} vs 1/lambda2 = {:.6}", fit.slope, 1.0 / h.lambda2));
        for (e, why) in &fit.failures {
            s.note("period_failure", format!("E = {e:e}: {why}"));
        }

        let zeta = self.constant("zeta");
        let mut csv = String::from("energy,local_expansion,local_contraction,global_expansion,global_contraction,composed_expansion\n");
        let (mut local, mut composed) = (vec![], vec![]);
        for &e in &energies {
            let rep = section_expansion_rates(&self.sys, &h, e, zeta, dt)?;
            let _ = writeln!(
                csv,
                "{e:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                rep.local.expansion, rep.local.contraction, rep.global.expansion, rep.global.contraction, rep.composed.expansion
            );
            local.push(((1.0 / e).ln(), rep.local.expansion.ln()));
            composed.push(((1.0 / e).ln(), rep.composed.expansion.ln()));
        }
        self.write("expansion.csv", csv)?;
        let (ls, _) = linear_fit(&local);
        let (cs, _) = linear_fit(&composed);
        s.check("local_expansion_slope", fit_within(ls, h.ratio(), 0.05), format!("{ls:.6} vs lambda1/lambda2 = {:.6}", h.ratio()));
        s.check("composed_expansion_slope", fit_within(cs, h.ratio(), 0.05), format!("{cs:.6}"));
        self.sections.push(s);
        Ok(())
    }

    fn melnikov_stage(&mut self) -> Result<()> {
        let mut s = Section::new("melnikov");
        let sv = self.solver().clone();
        let class = sv.melnikov_class;
        let family = HomoclinicFamily::new(&self.r.uncoupled()?, class)?;
        let z3 = self.r.coupling_poly();
        let h1 = move |x: [f64; 2], _: [f64; 2]| z3.eval(x);
        let center = [PI * class[0] as f64, PI * class[1] as f64];
        let hw = sv.melnikov_half_width;
        let grid = |n: usize| MelnikovGrid { lo: [center[0] - hw, center[1] - hw], hi: [center[0] + hw, center[1] + hw], n: [n, n] };
        let n = sv.melnikov_grid;
        let field = melnikov_evaluate(&family, &h1, &grid(n))?;
        self.write("melnikov.csv", field.to_csv())?;
        s.check("tail", field.tail_certified(), format!("cut at {:.3}, tail estimate {:.2e}", field.tail_cut, field.tail_estimate));
        let fine = melnikov_evaluate(&family, &h1, &grid(2 * n - 1))?;
        let (r0, r1) = (check_flow_invariance(&field, &family).residual, check_flow_invariance(&fine, &family).residual);
        s.check("flow_invariance_order", (3.5..=4.5).contains(&(r0 / r1)), format!("residuals {r0:.3e} / {r1:.3e} = {:.3}", r0 / r1));

        let other = |x: [f64; 2], _: [f64; 2]| (x[0] - 2.0 * x[1]).cos() - 1.0;
        let z3b = self.r.coupling_poly();
        let both = move |x: [f64; 2], y: [f64; 2]| z3b.eval(x) + 2.0 * other(x, y);
        let small = grid(9);
        let (ma, mb, mab) = (melnikov_evaluate(&family, &h1, &small)?, melnikov_evaluate(&family, &other, &small)?, melnikov_evaluate(&family, &both, &small)?);
        let defect = (0..ma.values.len()).map(|i| (mab.values[i] - ma.values[i] - 2.0 * mb.values[i]).abs()).fold(0.0, f64::max);
        s.check("linearity", defect <= 1e-10 * (1.0 + mab.span()), format!("max defect {defect:.2e}"));

        let rank = hessian_rank_scan(&family, &h1, &small)?;
        s.check("hessian_rank", rank.max_rank <= 1, format!("max rank {} over {} samples, worst ratio {:.2e}", rank.max_rank, rank.samples, rank.worst_ratio));
        let crit = critical_points(&family, &h1, center, sv.melnikov_ball)?;
        let mut csv = String::from("sigma,x1,x2,hessian_rank\n");
        for p in &crit.points {
            let _ = writeln!(csv, "{:.12e},{:.12e},{:.12e},{}", p.sigma, p.point[0], p.point[1], p.hessian_rank);
        }
        self.write("critical.csv", csv)?;
        s.check("U7_count", crit.count == 1 && crit.u7_pass, format!("{} critical line(s)", crit.count));
        self.sections.push(s);
        Ok(())
    }

    fn actions_stage(&mut self) -> Result<()> {
        let mut s = Section::new("actions");
        let worked = CornerActionInput { lambda: [2.0, 1.0], entry: [0.1, 0.0], exit: [0.0, 0.1], t: 1.0 };
        let (th, br) = (through_action(&worked)?, broken_action(&worked));
        s.check("worked_example", (th - 0.01175175).abs() < 5e-9 && (br - 0.01).abs() < 1e-15, format!("through {th:.8}, broken {br:.8}"));

        let h = self.hyperbolic()?;
        let lambda = [h.lambda1, h.lambda2];
        let mut rng = ChaCha8Rng::seed_from_u64(self.r.scenario.seed.wrapping_add(1));
        let mut csv = String::from("entry1,entry2,exit1,exit2,t,through,broken\n");
        let (mut violations, mut worst) = (0usize, 0.0f64);
        let n = self.solver().action_samples;
        for i in 0..n {
            let inp = CornerActionInput {
                lambda,
                entry: [rng.gen_range(-0.2..=0.0), rng.gen_range(-0.2..=0.0)],
                exit: [rng.gen_range(0.0..=0.2), rng.gen_range(0.0..=0.2)],
                t: rng.gen_range(0.5..10.0),
            };
            let (th, br) = (through_action(&inp)?, broken_action(&inp));
            if th <= br {
                violations += 1;
            }
            if i < 100 {
                let (qt, _) = quadrature_actions(&inp)?;
                worst = worst.max((qt - th).abs());
            }
            let _ = writeln!(csv, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{th:.15e},{br:.15e}", inp.entry[0], inp.entry[1], inp.exit[0], inp.exit[1], inp.t);
        }
        self.write("actions.csv", csv)?;
        s.check("through_exceeds_broken", violations == 0, format!("{violations} violations in {n} inputs"));
        s.check("closed_form_vs_quadrature", worst <= 1e-9, format!("max difference {worst:.2e} on 100 inputs"));
        for n in [[3, 1], [2, -5], [-4, 4]] {
            let parts = decompose_homology(n)?;
            s.note("decomposition", format!("{n:?} = {parts:?}"));
        }

        let p = &self.sys;
        let w1 = separatrix_c_value(&p.z1, p.a[0][0])?;
        let w2 = separatrix_c_value(&p.z2, p.a[1][1])?;
        let edges: Vec<([i64; 2], f64)> = IRREDUCIBLE.iter().map(|&g| (g, g[0].abs() as f64 * w1 + g[1].abs() as f64 * w2)).collect();
        let poly = flat_polygon(&edges)?;
        self.write("flat_uncoupled.csv", poly.to_csv())?;
        s.check("uncoupled_flat", matches!(poly.kind, crate::action::PolygonKind::Rectangle), format!("{:?} with half-widths ({w1:.6}, {w2:.6})", poly.kind));
        self.sections.push(s);
        Ok(())
    }

    fn options(&self) -> SolveOptions {
        SolveOptions { tol: self.solver().tol, max_iter: self.solver().max_iter }
    }

    fn weakkam_stage(&mut self) -> Result<()> {
        let mut s = Section::new("weakkam");
        let sv = self.solver().clone();
        let opts = self.options();

        // the first factor as a one-dimensional pendulum
        let (z1, a1) = (self.sys.z1.clone(), self.sys.a[0][0]);
        let width = separatrix_c_value(&z1, a1)?;
        let zz = z1.clone();
        let line = Lagrangian::mechanical_1d(a1, move |x| zz.eval(x))?;
        let d1 = Discretization::new(sv.line_grid, sv.line_t_step);
        let res = weak_kam_solve(&line, [0.0; 2], &d1, &opts)?;
        let b = barrier(&res.u_minus, &res.u_plus)?;
        let half = sv.line_grid / 2;
        let mut csv = String::from("x,u_minus,u_plus,barrier\n");
        for i in 0..sv.line_grid {
            let x = 2.0 * PI * i as f64 / sv.line_grid as f64;
            let _ = writeln!(csv, "{x:.12e},{:.12e},{:.12e},{:.12e}", res.u_minus.values[i], res.u_plus.values[i], b.field.values[i]);
        }
        self.write("weakkam_line.csv", csv)?;
        let u_pi = res.u_minus.values[half] - res.u_minus.values[0];
        let (want_u, want_b) = (PI * width, 2.0 * PI * width);
        s.check("line_u_at_pi", fit_within(u_pi, want_u, 0.02), format!("{u_pi:.6} vs {want_u:.6}"));
        s.check("line_barrier_at_pi", fit_within(b.field.values[half], want_b, 0.02), format!("{:.6} vs {want_b:.6}", b.field.values[half]));
        let w = flat_radius(&line, [1.0, 0.0], &d1, &opts, &FlatOptions::default())?;
        s.check("line_flat_half_width", fit_within(w, width, 0.03), format!("{w:.6} vs {width:.6}"));

        let l = Lagrangian::from_system(&self.sys)?;
        let d2 = Discretization::new(sv.grid, sv.t_step);
        let res = weak_kam_solve(&l, [0.0; 2], &d2, &opts)?;
        let b = barrier(&res.u_minus, &res.u_plus)?;
        self.write("barrier.csv", b.field.to_csv(&["x1", "x2"]))?;
        let mane = mane_set_estimate(&res, None)?;
        s.note("alpha_0", format!("{:.6e} in [{:.6e}, {:.6e}] after {} iterations", res.alpha, res.alpha_bounds.0, res.alpha_bounds.1, res.iterations));
        s.note("hj_residual", format!("{:.3e}", res.hj_residual));
        s.note("semiconcavity", format!("{:.4}", semiconcavity_constant(&res.u_minus)));
        s.check("barrier_nonnegative", b.field.min() >= 0.0, format!("min {:.2e}, {} minimizer(s)", b.field.min(), b.minimizers.len()));
        s.check("mane_coverage", mane.coverage < 1.0, format!("{:.4} at threshold {:.2e}", mane.coverage, mane.threshold));

        let df = Discretization::new(sv.flat_grid, sv.flat_t_step);
        let fit = fit_flat(&l, &df, &opts, &FlatOptions::default())?;
        self.write("flat_polygon.csv", fit.polygon.to_csv())?;
        let nv = fit.polygon.vertices.len();
        s.check("flat_vertex_count", [4, 6, 8].contains(&nv), format!("{:?} with {nv} vertices", fit.polygon.kind));
        let (lo, hi) = (-sv.alpha_range, sv.alpha_range);
        let classes = ClassGrid { lo: [lo, lo], hi: [hi, hi], n: [sv.alpha_classes, sv.alpha_classes] };
        let scan = alpha_scan(&l, &classes, &df, &opts, FlatOptions::default().tol_flat)?;
        self.write("alpha.csv", scan.to_csv())?;
        s.check(
            "alpha_convex",
            scan.convex_within_resolution(),
            format!("defect {:.2e} within grid tolerance {:.2e}", scan.convexity_defect, scan.grid_tolerance),
        );
        self.sections.push(s);
        Ok(())
    }

    fn annulus_stage(&mut self) -> Result<()> {
        let mut s = Section::new("annulus");
        let sv = self.solver().clone();
        let l = Lagrangian::from_system(&self.sys)?;
        let df = Discretization::new(sv.flat_grid, sv.flat_t_step);
        let (eps_t, d) = (self.r.scenario.potential.tail_amplitude, self.constant("d"));
        let rep = annulus_diagnostic(&l, &df, &self.options(), &sv.annulus_deltas, sv.annulus_rays, (eps_t, d))?;
        self.write("annulus.csv", rep.to_csv())?;
        let below = rep.samples.iter().filter(|x| x.delta <= rep.verified_delta).all(|x| x.coverage.map_or(true, |c| c < 1.0));
        s.check("coverage_below_one", below, format!("all sampled classes up to delta {:.4}", rep.verified_delta));
        s.check("annulus_reach", rep.reaches_wedge, format!("verified {:.4} >= 3 eps^d = {:.4}", rep.verified_delta, rep.wedge_reach));
        if rep.excluded > 0 {
            s.note("excluded", format!("{} ray/level pairs found no crossing", rep.excluded));
        }
        self.sections.push(s);
        Ok(())
    }
}
