//! Flow-based solvers for rough differential equations.
//!
//! The central object is a two-time family of maps that approximates the
//! solution flow of `dy = f(y) dx` over short intervals. Iterating such a
//! family along a partition and refining the partition produces the flow
//! itself whenever the family's composition defect is summable against a
//! remainder scale; this crate builds the families, runs the refinement,
//! and measures every constant in that story on concrete drivers.
//!
//! Module map:
//!
//! - [`algebra`]: truncated tensor products and signatures of piecewise
//!   linear paths.
//! - [`driver`]: controls, remainders, and rough drivers (smooth lifts with
//!   a dyadic signature cache, pure-area drivers, polylines).
//! - [`fields`]: driving vector fields, composed actions, Lie brackets, and
//!   4-points control constants.
//! - [`flows`]: iterated products over partitions and sampled estimators
//!   for the structural bounds.
//! - [`schemes`]: the order-2 expansion, step-N Euler, bracket-ODE and
//!   chord-plus-loops one-step families.
//! - [`sewing`]: dyadic refinement to the limit, convergence-rate fitting,
//!   and the recursion-bound constants.
//! - [`analysis`]: solution certification, scheme comparison,
//!   perturbations, and flow inversion.
//! - [`config`]: JSON study configuration shared with the CLI.
//!
//! With the `parallel` feature (default) the sampling loops run on rayon;
//! disabling it gives a sequential build with bit-identical results.

pub mod algebra;
pub mod analysis;
pub mod config;
pub mod driver;
pub mod error;
pub mod exec;
pub mod fields;
pub mod flows;
pub mod sampling;
pub mod schemes;
pub mod sewing;

pub use crate::algebra::{
    piecewise_linear_signature, segment_signature, tensor_product, weak_geometric_defect,
    TensorSeries,
};
pub use crate::driver::{
    check_chen, check_weak_geometric, lift_smooth, make_holder_control, p_norm_estimate,
    piecewise_linear_driver, pure_area_driver, Control, Remainder, RoughDriver, SewingParameters,
};
pub use crate::error::{Error, Result};
pub use crate::fields::{
    analytic_four_point, empirical_four_point_defect, f_i_identity, lie_bracket, linear_field,
    rotation_field, scalar_trig_field, sine_field, FourPointConstants, VectorFieldFamily,
};
pub use crate::flows::{
    almost_flow_defect, flow_property_defect, galaxy_distance, galaxy_stability,
    iterated_product, lipschitz_gap_estimate, sewing_gap, sewing_l_bound, ul_lipschitz_estimate,
    DefectReport, FlowFamily, Orientation, Partition,
};
pub use crate::schemes::{
    axis_loop_path, bailleul_almost_flow, bailleul_remainder, davie_almost_flow,
    friz_victoir_almost_flow, step_n_euler, SchemeSpec,
};
pub use crate::sewing::{
    convergence_study, davie_constant_continuous, davie_constant_discrete,
    davie_recursion_verify, sew, theoretical_rate, ConvergenceReport, SewTrace, TheoreticalRate,
};
pub use crate::analysis::{
    apply_perturbation, davie_solution_check, inverse_flow, inversion_round_trip, invert_step,
    manifold_lipschitz_estimate, solution_compare, solve_path, InvertOptions, PerturbationClass,
    PerturbationFamily, SolutionPath,
};
