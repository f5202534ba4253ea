//! Uncertainty-quantification engines: stochastic testing (ST), stochastic
//! Galerkin (SG), stochastic collocation (SC) and Monte Carlo (MC).

mod result;
mod sampling;
mod sg;
mod st;
mod testing;

pub use result::{moments, surrogate_eval, GpcState, Method, SolveStats, UqResult};
pub use sampling::{analysis_times, mc_sample, mc_solve, pilot_step, sc_solve, PointAnalysis};
pub use sg::{
    sg_points_per_axis, sg_quadrature, sg_quadrature_sparse, sg_solve_dc, sg_solve_transient,
    SgSystem,
};
pub use st::{deterministic_state, st_solve_dc, st_solve_transient, LinearMode, StSystem};
pub use testing::{
    default_candidates, sampling_speedup_ratio, select_testing_points, TestingSet, DEFAULT_BETA,
};
