//! Scenario files: TOML with one section per stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::dynamics::{MechanicalSystem, Tail, TrigPoly2};
use crate::error::{bail, Error, Result};
use crate::normalform::TrigPoly;

/// The weak-coupled scenario shipped with the binary.
pub const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/weak_coupled.toml");

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub frequency: FrequencyConfig,
    pub plan: PlanConfig,
    pub averaging: AveragingConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Overrides for the named constants; see [`CONSTANTS`].
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    /// Components as arithmetic expressions, e.g. `"sqrt(2) - 1"`.
    pub omega: [String; 2],
    pub tau: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub l: u32,
    pub m_max: u32,
    pub xi: f64,
    pub r: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    /// Level whose averaging step is checked.
    pub m: u32,
    pub delta: f64,
    pub delta_plus: f64,
    pub margin: MarginConfig,
}

/// Desk-scale small-denominator instance on the vertical segment of level `m`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginConfig {
    pub a_m: i64,
    pub y_range: [f64; 2],
    pub delta: f64,
    pub delta_plus: f64,
    pub k_max: i64,
    pub samples: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default = "identity")]
    pub kinetic: [[f64; 2]; 2],
    /// `(n, a, b)` for `a cos nX₁ + b sin nX₁`.
    pub z1: Vec<(i64, f64, f64)>,
    pub z2: Vec<(i64, f64, f64)>,
    /// `(n₁, n₂, a, b)` for `a cos(n₁X₁ + n₂X₂) + b sin(…)`.
    pub z3: Vec<(i64, i64, f64, f64)>,
    /// Coupling; defaults to `1/L`.
    pub eps: Option<f64>,
    /// Amplitude ϵ of the time-periodic tail.
    pub tail_amplitude: f64,
    pub tail_seed: u64,
    pub tail_modes: usize,
}

fn identity() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub dt: f64,
    pub local_radius: f64,
    pub energies: Vec<f64>,
    pub u5_order: u32,
    pub homoclinic_class: [i64; 2],
    pub melnikov_class: [i64; 2],
    pub melnikov_grid: usize,
    pub melnikov_half_width: f64,
    pub melnikov_ball: f64,
    pub grid: usize,
    pub t_step: f64,
    pub line_grid: usize,
    pub line_t_step: f64,
    pub flat_grid: usize,
    pub flat_t_step: f64,
    pub alpha_classes: usize,
    pub alpha_range: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub annulus_deltas: Vec<f64>,
    pub annulus_rays: usize,
    pub gronwall_samples: usize,
    pub gronwall_dt: f64,
    pub action_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 2e-3,
            local_radius: 0.3,
            energies: vec![1e-6, 1e-5, 1e-4, 1e-3],
            u5_order: 8,
            homoclinic_class: [0, 1],
            melnikov_class: [1, 1],
            melnikov_grid: 33,
            melnikov_half_width: 1.2,
            melnikov_ball: 0.5,
            grid: 128,
            t_step: 0.2,
            line_grid: 512,
            line_t_step: 0.2,
            flat_grid: 32,
            flat_t_step: 0.4,
            alpha_classes: 5,
            alpha_range: 1.5,
            tol: 1e-9,
            max_iter: 20_000,
            annulus_deltas: vec![0.01, 0.0475, 0.1],
            annulus_rays: 4,
            gronwall_samples: 200,
            gronwall_dt: 5e-3,
            action_samples: 1000,
        }
    }
}

/// Named constant: default value and the inequality it must satisfy.
pub struct ConstantDef {
    pub name: &'static str,
    pub default: f64,
    pub rule: &'static str,
}

const fn def(name: &'static str, default: f64, rule: &'static str) -> ConstantDef {
    ConstantDef { name, default, rule }
}

pub const CONSTANTS: &[ConstantDef] = &[
    def("c1", 1.0, "c1 > 0"),
    def("c2", 1.0, "c2 > 0"),
    def("c3", 1.0, "c3 > 0"),
    def("c4", 1.0, "c4 > 0"),
    def("c5", 3.0, "c5 >= 1/2, curvature factor of the level-m minimum"),
    def("c6", 1.0, "1/2 <= c6 < c5/2, size factor of the second resonant block"),
    def("c7", 1.0, "c7 > 0, momentum ball after rescaling"),
    def("c8", 0.5, "lambda1 - lambda2 >= c8 > 0"),
    def("c9", 0.5, "lambda1 / lambda2 >= 1 + c9 > 1"),
    def("c10", 1.0, "c10 > 0"),
    def("c11", 1.0, "c11 > 0"),
    def("c12", 1.0, "c12 > 0, radius of the sections"),
    def("c13", 1.0, "c13 > 1 is measured; this entry is only a floor"),
    def("c14", 1.0, "c14 > 0"),
    def("c15", 1.0, "c15 > 0"),
    def("c16", 1.0, "c16 > 0"),
    def("c17", 1.0, "c17 > 0"),
    def("c18", 1.0, "c18 > 0, growth rate of the flow comparison"),
    def("K", 1e6, "K >> 1, cap on the asymptotic prefactors"),
    def("L", 20.0, "L >> 1, coupling eps = 1/L"),
    def("M", 2000.0, "M >> L, first level of the construction"),
    def("d", 0.3, "0 < d < 1/3, annulus scale eps_tail^d"),
    def("zeta", 0.25, "0 < zeta <= local radius, section offset"),
    def("iota", 1e-4, "0 < iota and 1 + 1000 iota < lambda1 / lambda2"),
];

/// Constants after applying the scenario overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Constants(BTreeMap<&'static str, f64>);

impl Constants {
    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }

    fn resolve(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut map: BTreeMap<&'static str, f64> = CONSTANTS.iter().map(|c| (c.name, c.default)).collect();
        for (k, v) in overrides {
            match CONSTANTS.iter().find(|c| c.name == k) {
                Some(c) => {
                    map.insert(c.name, *v);
                }
                None => bail!(Config, "unknown constant `{k}`"),
            }
        }
        let c = Constants(map);
        c.validate()?;
        Ok(c)
    }

    /// Checks the inequalities that involve only the table itself.
    fn validate(&self) -> Result<()> {
        for def in CONSTANTS {
            let v = self.get(def.name);
            if !(v.is_finite() && v > 0.0) {
                bail!(Config, "constant {} = {v} must be positive ({})", def.name, def.rule);
            }
        }
        let g = |n| self.get(n);
        let checks = [
            (g("c5") >= 0.5, "c5 >= 1/2"),
            (g("c6") >= 0.5 && g("c6") < g("c5") / 2.0, "1/2 <= c6 < c5/2"),
            (g("K") > 1.0, "K > 1"),
            (g("L") > 1.0, "L > 1"),
            (g("M") > g("L"), "M > L"),
            (g("d") < 1.0 / 3.0, "d < 1/3"),
        ];
        for (ok, rule) in checks {
            if !ok {
                bail!(Config, "constant table violates {rule}");
            }
        }
        Ok(())
    }
}

/// One line per constant: `name = default  # rule`.
pub fn explain() -> String {
    let mut s = String::from("[constants]\n");
    for c in CONSTANTS {
        let _ = writeln!(s, "{} = {}  # {}", c.name, c.default, c.rule);
    }
    s
}

/// A scenario checked for internal consistency, with derived objects ready for the runners.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub scenario: Scenario,
    pub omega: [f64; 2],
    pub constants: Constants,
    pub eps: f64,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Scenario::from_toml(&text)
    }

    pub fn resolve(self) -> Result<Resolved> {
        let constants = Constants::resolve(&self.constants)?;
        let mut omega = [0.0; 2];
        for (w, expr) in omega.iter_mut().zip(&self.frequency.omega) {
            *w = exmex::eval_str::<f64>(expr).map_err(|e| Error::Config(format!("frequency `{expr}`: {e}")))?;
        }
        let eps = match self.potential.eps {
            Some(e) if ((e * constants.get("L")) - 1.0).abs() > 1e-12 && self.constants.contains_key("L") => {
                bail!(Config, "eps = {e} disagrees with 1/L = {}", 1.0 / constants.get("L"))
            }
            Some(e) => e,
            None => 1.0 / constants.get("L"),
        };
        let s = &self.solver;
        if s.dt <= 0.0 || s.t_step <= 0.0 || s.line_t_step <= 0.0 || s.flat_t_step <= 0.0 || s.gronwall_dt <= 0.0 {
            bail!(Config, "time steps must be positive");
        }
        if s.grid < 8 || s.line_grid < 8 || s.flat_grid < 8 || s.melnikov_grid < 5 {
            bail!(Config, "grids need at least 8 nodes per axis (5 for the Melnikov grid)");
        }
        if s.energies.len() < 2 || s.annulus_deltas.is_empty() {
            bail!(Config, "need two energies for the period law and at least one annulus level");
        }
        if self.averaging.m == 0 || self.averaging.m > self.plan.m_max {
            bail!(Config, "averaging level m = {} outside 1..={}", self.averaging.m, self.plan.m_max);
        }
        if constants.get("zeta") > s.local_radius {
            bail!(Config, "zeta = {} exceeds the local radius {}", constants.get("zeta"), s.local_radius);
        }
        Ok(Resolved { scenario: self, omega, constants, eps })
    }
}

impl Resolved {
    fn base_system(&self, eps: f64) -> Result<MechanicalSystem> {
        let p = &self.scenario.potential;
        let z3 = TrigPoly2::new(p.z3.iter().map(|&(n1, n2, a, b)| ([n1, n2], a, b)).collect());
        MechanicalSystem::new(p.kinetic, TrigPoly::new(p.z1.clone()), TrigPoly::new(p.z2.clone()), z3, eps)
    }

    /// The autonomous model system.
    pub fn system(&self) -> Result<MechanicalSystem> {
        self.base_system(self.eps)
    }

    /// The model system without coupling.
    pub fn uncoupled(&self) -> Result<MechanicalSystem> {
        self.base_system(0.0)
    }

    /// Seeded time-periodic tail of amplitude ϵ; harmonics in `{-2..2}³` with a time component.
    pub fn tail(&self) -> Tail {
        let p = &self.scenario.potential;
        let mut rng = ChaCha8Rng::seed_from_u64(p.tail_seed);
        let terms = (0..p.tail_modes)
            .map(|_| {
                let n = [rng.gen_range(-2..=2), rng.gen_range(-2..=2), *[-1, 1, 2].get(rng.gen_range(0..3)).unwrap()];
                (n, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        Tail { amplitude: p.tail_amplitude, terms }
    }

    pub fn coupling_poly(&self) -> TrigPoly2 {
        TrigPoly2::new(self.scenario.potential.z3.iter().map(|&(n1, n2, a, b)| ([n1, n2], a, b)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_resolves() {
        let r = Scenario::from_toml(DEFAULT_SCENARIO).unwrap().resolve().unwrap();
        assert!((r.omega[0] - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((r.eps - 0.05).abs() < 1e-15);
        assert_eq!(r.constants.get("d"), 0.3);
        let sys = r.system().unwrap();
        assert!(sys.potential([0.0, 0.0]).abs() < 1e-15);
    }

    #[test]
    fn explain_lists_each_constant_once() {
        let text = explain();
        for c in CONSTANTS {
            assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{} = ", c.name))).count(), 1, "{}", c.name);
        }
        assert_eq!(CONSTANTS.len(), 24);
    }

    #[test]
    fn rejects_bad_constants() {
        let mut s = Scenario::from_toml(DEFAULT_SCENARIO).unwrap();
        s.constants.insert("c6".into(), 2.0);
        assert!(matches!(s.clone().resolve(), Err(Error::Config(_))));
        s.constants.clear();
        s.constants.insert("c99".into(), 1.0);
        assert!(matches!(s.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn tail_is_seeded() {
        let r = Scenario::from_toml(DEFAULT_SCENARIO).unwrap().resolve().unwrap();
        assert_eq!(r.tail(), r.tail());
        assert!(r.tail().terms.iter().all(|t| t.0[2] != 0));
    }
}
