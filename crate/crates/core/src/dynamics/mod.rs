//! Flows of the mechanical model system and their hyperbolic structure.

mod gronwall;
mod hyperbolic;
mod integrate;
mod manifold;
mod periodic;
mod system;

pub use integrate::{
    field, flow_with_tangent, identity4, integrate, integrate_to_event, integrate_to_event_or_escape, mat4_mul, mat4_vec, step, Crossing, Scheme, State,
    Tangent, Trajectory,
};
pub use gronwall::{flow_difference_bound, time_window_holds, FlowDomain, GronwallReport};
pub use hyperbolic::{check_u5prime, hyperbolic_fixed_point, local_linear_form, HyperbolicData, LocalLinearForm, U5Report};
pub use manifold::{
    check_u6_u7, factor_separatrix, find_homoclinic, manifold_graph, torus_splitting, AsymptoticFit, GraphDomain, Homoclinic,
    HomoclinicOptions, Homology, ManifoldGraph, ShootingOptions, TorusSplitting, U6Report, Which,
};
pub use periodic::{
    angle, fly, image_angle, linear_fit, mat2_mul, period_law, periodic_orbit, section_expansion_rates, singular_values,
    ExpansionReport, Flight, Mat2, PeriodFit, PeriodicOrbit, Section, SectionMapData,
};
pub use system::{MechanicalSystem, Tail, TrigPoly2};
