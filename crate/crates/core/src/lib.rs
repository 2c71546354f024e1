//! Adaptive barrier methods for nonconvex optimization over a
//! self-concordant-barrier domain intersected with an affine subspace.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ahba;
pub mod barrier;
pub mod certify;
pub mod checks;
pub mod cubic;
pub mod error;
pub mod geometry;
mod linalg;
pub mod model;
pub mod problems;
pub mod sahba;
mod solver;
pub mod trace;

pub use barrier::{
    make_log_ball, make_log_box, make_log_orthant, omega, sum_barriers, Barrier, BarrierEval, BarrierRef, Domain,
    LocalMetric, LogBall, LogBox, LogOrthant, SumBarrier,
};
pub use error::{Error, Result};
pub use geometry::{build_null_basis, project_reduced_data, solve_first_order_kkt, AffineConstraint, NullBasis};
pub use model::{
    fd_check_gradient, fd_check_hessian, potential_eval, ClosureObjective, Objective, ObjectiveRef, Potential,
};
pub use cubic::{model_value, solve_cubic, CubicInstance, CubicSolution};
pub use ahba::{ahba_step, run_ahba, AhbaConfig, AhbaState, AhbaStep};
pub use trace::{Algorithm, SolveOutput, Status, StepRecord, Trace, TraceRow, TRACE_HEADER};
pub use sahba::{run_sahba, sahba_step, SahbaConfig, SahbaState, SahbaStep};
pub use certify::{
    analytic_center, certify_output, eps_kkt_certificate, restart_loop, second_order_certificate, Certificates,
    KktCertificate, RestartConfig, SecondOrderCertificate,
};
pub use problems::{Problem, ProblemSpec, PROBLEM_NAMES};
pub use checks::{barrier_suite, verify_problem, with_scaled_gradient, BarrierSuite, CheckLine};
