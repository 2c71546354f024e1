//! Plumbing shared by the first- and second-order solvers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{Domain, LocalMetric};
use crate::error::{Error, Result};
use crate::geometry::AffineConstraint;
use crate::model::Potential;

pub(crate) const FEAS_TOL: f64 = 1e-8;

/// Absolute slack added to sufficient-decrease tests to absorb roundoff in `f`.
pub(crate) fn ls_slack(fx: f64) -> f64 {
    8.0 * f64::EPSILON * (1.0 + fx.abs())
}

pub(crate) fn elapsed_ms(clock: Instant) -> f64 {
    clock.elapsed().as_secs_f64() * 1e3
}

/// Everything the solvers need at an interior point.
pub(crate) struct PointEval {
    pub f: f64,
    pub grad_f: DVector<f64>,
    pub fmu: f64,
    pub grad_fmu: DVector<f64>,
    pub metric: LocalMetric,
}

impl PointEval {
    pub fn new(pot: &Potential, x: &DVector<f64>) -> Result<Self> {
        if pot.barrier.domain_test(x) != Domain::Interior {
            return Err(Error::OutsideDomain);
        }
        let f = pot.objective.value(x);
        let grad_f = pot.objective.gradient(x);
        let fmu = f + pot.mu * pot.barrier.value(x);
        let grad_fmu = &grad_f + pot.barrier.gradient(x) * pot.mu;
        if !f.is_finite() || !fmu.is_finite() || !grad_fmu.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteValue { iteration: 0 });
        }
        let metric = LocalMetric::new(pot.barrier.as_ref(), x)?;
        Ok(Self { f, grad_f, fmu, grad_fmu, metric })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        self.metric.hessian()
    }
}

/// `(F_mu(z), f(z))`, both `+inf` when `z` is outside the domain or values are not finite.
pub(crate) fn trial_values(pot: &Potential, z: &DVector<f64>) -> (f64, f64) {
    if pot.barrier.domain_test(z) != Domain::Interior {
        return (f64::INFINITY, f64::INFINITY);
    }
    let f = pot.objective.value(z);
    let fmu = f + pot.mu * pot.barrier.value(z);
    if f.is_finite() && fmu.is_finite() {
        (fmu, f)
    } else {
        (f64::INFINITY, f64::INFINITY)
    }
}

pub(crate) fn check_start(pot: &Potential, c: &AffineConstraint, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != pot.dim() || c.dim() != pot.dim() {
        return Err(Error::DimensionMismatch { expected: pot.dim(), found: x0.len() });
    }
    if pot.barrier.domain_test(x0) != Domain::Interior {
        return Err(Error::InfeasibleStart("start point is not strictly interior".into()));
    }
    if !c.is_feasible(x0, FEAS_TOL) {
        return Err(Error::InfeasibleStart(format!("||A x0 - b|| = {:e}", c.residual(x0))));
    }
    Ok(())
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eps = {eps} must be positive")))
    }
}

/// `grad f(x) - A^T y`.
pub(crate) fn dual_residual(c: &AffineConstraint, grad_f: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    if c.rows() == 0 {
        grad_f.clone()
    } else {
        grad_f - c.a().transpose() * y
    }
}
