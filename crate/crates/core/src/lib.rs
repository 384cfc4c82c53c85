//! Solver for initial-boundary value problems of systems of nonlocal balance
//! laws (renewal equations): backward characteristics, the representation
//! formula for frozen linear problems, Picard iteration with slab
//! continuation, numerical certificates of the a priori and stability
//! estimates, shipped models and a derivative-free control harness.

pub mod analysis;
pub mod characteristics;
pub mod control;
pub mod domain;
pub mod error;
pub mod models;
pub mod picard;
pub mod problem;
pub mod transport;

pub use characteristics::{exit_jacobian, growth_factor, trace_back, CharKind, CharRecord};
pub use domain::{Axis, AxisKind, BoundaryFn, Domain, FaceGrid, Grid, GridFn, Stencil};
pub use error::{Error, Result};
pub use picard::{apply_t, freeze, lipschitz_probe, solve, solve_from, solve_partial, solve_slab, Ball, PicardConfig, SlabDiagnostics, Trajectory};
pub use problem::{check_hypotheses, HypothesisConstants, HypothesisReport, Kernel, KernelFormConstants, ProbeConfig, SystemDef, Velocity};
pub use transport::{evaluate, evaluate_traced, solve_series, LinearProblem};
pub use analysis::{
    apriori_l1_bound, apriori_linf_bound, contraction_certificate, contraction_prediction, entropy_residual, entropy_sweep, gronwall_global_bound,
    linear_stability_bound, linear_stability_rhs, Certificate, EntropyResidual, EntropySweep, Sign, StabilityTerms, TestFunction,
};
pub use control::{cost_deaths, cost_peak_infection, optimize, pattern_search, profit, ControlSpec, ControlTarget, Objective, OptimizeResult};
pub use models::{build_blowup, build_cell_growth, build_competitive, build_preset, build_sihr, BlowupVariant, Model, Rate, PRESETS};
