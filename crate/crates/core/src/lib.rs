//! Operator-valued kernel interpolation on embedded manifolds, power
//! function error bounds, center-count scaling studies, and a deadzone
//! model-reference adaptive controller built on kernel subspaces.
//!
//! Modules:
//! - [`kernel`]: scalar kernel catalog and operator-valued (separable)
//!   kernels with admissibility checks.
//! - [`geometry`]: built-in embedded manifolds, farthest-point center
//!   selection, fill distance / separation radius.
//! - [`approximation`]: generalized Grammians, interpolation and
//!   projection, power functions, restriction and extension.
//! - [`complexity`]: convergence-rate studies and cube-vs-manifold
//!   center-count predictions.
//! - [`control`]: matched reference models, Lyapunov solves, and the
//!   deadzone adaptive control loop.
//! - [`config`]: serde-backed run configuration types.

pub mod error;
pub mod kernel;
pub mod geometry;
pub mod approximation;
pub mod complexity;
pub mod control;
pub mod config;
pub mod io;

pub use approximation::{
    apply_integral_operator, build_subspace, interpolate, interpolation_residual,
    pointwise_error_bound, power2, power_deficit, power_inf, power_sweep, project_field,
    project_values, restrict_then_extend_check, subspace_kernel, sup_power2, ExtensionCheck,
    KernelField, KernelFunction, RestrictedKernel, Subspace,
};
pub use complexity::{
    convergence_study, curse_comparison, fit_order, predict_center_count,
    predict_cube_center_count, reduced_smoothness, CurseRow, FitX, FitY, RateMeta, RateRow,
    RateTable, ReducedSmoothness, StudyOptions,
};
pub use config::{
    assemble_simulation, parse_toml, CurseConfig, InterpConfig, PowerConfig, RatesConfig,
    SimulateConfig, SimulationSetup,
};
pub use control::{
    build_matched_reference, check_deadzone_freeze, check_descent, check_estimate_bound,
    closed_loop_rhs, controller, deadzone_eval, deadzone_floor, learning_rhs, lyapunov_solve,
    probe_cloud, simulate, tracking_radius, ultimate_error, validate_gains, AdaptiveState,
    ClosedLoopRhs, CommandSignal, DeadzoneFloor, DeadzoneSpec, DescentReport, GainSpec,
    LearningRhs, PlantSpec, ReferenceSpec, Regressor, SimulationParams, Trace, TraceRow,
};
pub use error::{Error, Result};
pub use io::{fnv1a64, RunReport};
pub use kernel::{psd_check, KernelFamily, OperatorKernel, Point, ScalarKernel};
pub use geometry::{
    count_scaling_check, dense_candidates, farthest_point_order, farthest_point_sample,
    fill_distance, quasiuniformity_ratio, separation_radius, CenterSet, CenterSource, Manifold,
    QuadratureNode, ScalingRow, Shape,
};
