//! Analytic-center initialization, first- and second-order certificates and
//! the warm-started restart wrapper.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::ahba::{run_ahba, AhbaConfig};
use crate::barrier::{Barrier, LocalMetric};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{solve_first_order_kkt, AffineConstraint, NullBasis};
use crate::linalg::{congruence, min_eigenvalue};
use crate::model::Potential;
use crate::sahba::{run_sahba, SahbaConfig};
use crate::solver::{dual_residual, FEAS_TOL};
use crate::trace::{Algorithm, SolveOutput};

pub const DEFAULT_CENTER_ITERS: usize = 500;
pub const PSD_TOL: f64 = 1e-8;

/// Approximate minimizer of `h` over `{A x = b}` with Newton decrement at most `1/2`,
/// by damped Newton steps `1 / (1 + lambda)`.
pub fn analytic_center(
    barrier: &dyn Barrier,
    basis: &NullBasis,
    x_start: &DVector<f64>,
    max_iters: usize,
) -> Result<DVector<f64>> {
    check_dim(barrier.dim(), x_start.len())?;
    if !barrier.is_interior(x_start) {
        return Err(Error::InfeasibleStart("start point is not strictly interior".into()));
    }
    if !basis.constraint().is_feasible(x_start, FEAS_TOL) {
        return Err(Error::InfeasibleStart(format!("||A x - b|| = {:e}", basis.constraint().residual(x_start))));
    }
    let mut x = x_start.clone();
    for _ in 0..=max_iters {
        let lambda = newton_decrement_and_step(barrier, basis, &x)?;
        if lambda.0 <= 0.5 {
            return Ok(x);
        }
        x += lambda.1 * (1.0 / (1.0 + lambda.0));
    }
    Err(Error::NoConvergence(format!("analytic center not reached in {max_iters} damped Newton steps")))
}

fn newton_decrement_and_step(barrier: &dyn Barrier, basis: &NullBasis, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let metric = LocalMetric::new(barrier, x)?;
    let (v, _) = solve_first_order_kkt(metric.hessian(), basis, &barrier.gradient(x))?;
    Ok((metric.local_norm(&v)?, v))
}

/// Equality-constrained Newton decrement of the barrier at `x`.
pub fn newton_decrement(barrier: &dyn Barrier, basis: &NullBasis, x: &DVector<f64>) -> Result<f64> {
    Ok(newton_decrement_and_step(barrier, basis, x)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCertificate {
    /// `|| -(grad f - A^T y) / mu - grad h(x) ||*_x`.
    pub xi: f64,
    /// Certified `eps`; `None` when `xi >= 1`.
    pub eps_bound: Option<f64>,
    pub feasibility_residual: f64,
}

/// `mu (nu + (sqrt(nu) + xi) xi / (1 - xi))` for `xi < 1`.
pub fn eps_bound_from_xi(mu: f64, nu: f64, xi: f64) -> Option<f64> {
    (0.0..1.0).contains(&xi).then(|| mu * (nu + (nu.sqrt() + xi) * xi / (1.0 - xi)))
}

pub fn eps_kkt_certificate(
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: f64,
    barrier: &dyn Barrier,
    grad_f: &DVector<f64>,
    c: &AffineConstraint,
) -> Result<KktCertificate> {
    check_dim(barrier.dim(), x.len())?;
    check_dim(c.rows(), y.len())?;
    let metric = LocalMetric::new(barrier, x)?;
    let s = dual_residual(c, grad_f, y);
    let r = -s / mu - barrier.gradient(x);
    let xi = metric.dual_local_norm(&r)?;
    Ok(KktCertificate { xi, eps_bound: eps_bound_from_xi(mu, barrier.nu(), xi), feasibility_residual: c.residual(x) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderCertificate {
    pub eps2: f64,
    /// Smallest eigenvalue of `Z^T (hess f + sqrt(eps2) H) Z`.
    pub min_eig: f64,
    pub passed: bool,
}

pub fn second_order_certificate(
    x: &DVector<f64>,
    basis: &NullBasis,
    hess_f: &DMatrix<f64>,
    barrier: &dyn Barrier,
    eps2: f64,
) -> Result<SecondOrderCertificate> {
    check_dim(basis.dim(), x.len())?;
    check_dim(basis.dim(), hess_f.nrows())?;
    check_dim(basis.dim(), hess_f.ncols())?;
    if !(eps2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps2 = {eps2} must be nonnegative")));
    }
    let m = hess_f + barrier.hessian(x) * eps2.sqrt();
    let min_eig = min_eigenvalue(&congruence(basis.z(), &m));
    Ok(SecondOrderCertificate { eps2, min_eig, passed: min_eig >= -PSD_TOL })
}

/// `eps2 = L eps / (24 nu)`.
pub fn second_order_eps(l: f64, eps: f64, nu: f64) -> f64 {
    l * eps / (24.0 * nu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificates {
    pub kkt: KktCertificate,
    pub second_order: Option<SecondOrderCertificate>,
}

/// Certificates for a solver output: the first-order one always, the
/// second-order one at `eps2 = L_last eps / (24 nu)` for the second-order method.
pub fn certify_output(out: &SolveOutput, pot: &Potential, basis: &NullBasis) -> Result<Certificates> {
    let grad_f = pot.objective.gradient(&out.x);
    let kkt = eps_kkt_certificate(&out.x, &out.y, out.mu, pot.barrier.as_ref(), &grad_f, basis.constraint())?;
    let second_order = match out.algorithm {
        Algorithm::Ahba => None,
        Algorithm::Sahba => {
            let hess = pot.objective.hessian(&out.x).ok_or(Error::MissingHessian)?;
            let eps2 = second_order_eps(out.l_last, out.eps, out.nu);
            Some(second_order_certificate(&out.x, basis, &hess, pot.barrier.as_ref(), eps2)?)
        }
    };
    Ok(Certificates { kkt, second_order })
}

/// Draws a point of the closed feasible slice `{A z = b} ∩ closure(dom h)` within
/// distance `radius` of `x`, along a random null-space direction. Half of the
/// draws land on the boundary or the radius cap.
pub fn sample_feasible_slice<R: Rng>(
    barrier: &dyn Barrier,
    basis: &NullBasis,
    x: &DVector<f64>,
    radius: f64,
    rng: &mut R,
) -> Option<DVector<f64>> {
    let p = basis.kernel_dim();
    if p == 0 {
        return Some(x.clone());
    }
    let coeffs = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-1.0..1.0)));
    let d = (basis.z() * coeffs).normalize();
    if !d.iter().all(|v| v.is_finite()) {
        return None;
    }
    // largest t <= radius with x + t d in the closure, by bisection on interiority
    let inside = |t: f64| barrier.is_interior(&(x + &d * t));
    let t_max = if inside(radius) {
        radius
    } else {
        let (mut lo, mut hi) = (0.0, radius);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let t = if rng.random::<bool>() { t_max } else { t_max * rng.random::<f64>() };
    Some(x + d * t)
}

/// Number of sampled feasible `z` with `<s, z - x> < -eps_bound`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_kkt_violations<R: Rng>(
    barrier: &dyn Barrier,
    basis: &NullBasis,
    x: &DVector<f64>,
    s: &DVector<f64>,
    eps_bound: f64,
    samples: usize,
    radius: f64,
    rng: &mut R,
) -> usize {
    (0..samples)
        .filter_map(|_| sample_feasible_slice(barrier, basis, x, radius, rng))
        .filter(|z| s.dot(&(z - x)) < -eps_bound)
        .count()
}

/// Epoch tolerances `eps0, eps0/2, ...` down to `eps_target`.
pub fn restart_schedule(eps0: f64, eps_target: f64) -> Result<Vec<f64>> {
    if !(eps_target > 0.0) || !(eps0 > eps_target) || !eps0.is_finite() {
        return Err(Error::InvalidParameter(format!("restart needs eps0 > eps_target > 0, got {eps0} and {eps_target}")));
    }
    let mut out = vec![eps0];
    let mut eps = eps0;
    while eps > eps_target * (1.0 + 1e-12) {
        eps *= 0.5;
        out.push(eps);
    }
    Ok(out)
}

/// Solver configuration used as the template of every restart epoch.
#[derive(Debug, Clone, PartialEq)]
pub enum RestartConfig {
    Ahba(AhbaConfig),
    Sahba(SahbaConfig),
}

/// Runs epochs with halving tolerance, warm-starting each at the previous
/// output point and estimate. The result concatenates traces and step records.
pub fn restart_loop(
    cfg: &RestartConfig,
    pot: &Potential,
    basis: &NullBasis,
    x_start: &DVector<f64>,
    eps0: f64,
    eps_target: f64,
) -> Result<SolveOutput> {
    let schedule = restart_schedule(eps0, eps_target)?;
    let mut x = x_start.clone();
    let mut combined: Option<SolveOutput> = None;
    for eps in schedule {
        let out = match cfg {
            RestartConfig::Ahba(template) => {
                let l0 = combined.as_ref().map_or(template.l0, |c| c.l_final);
                run_ahba(pot, basis, &x, &AhbaConfig { eps, l0, ..template.clone() })?
            }
            RestartConfig::Sahba(template) => {
                let m0 = combined.as_ref().map_or(template.m0, |c| Some(c.l_final));
                run_sahba(pot, basis, &x, &SahbaConfig { eps, m0, ..template.clone() })?
            }
        };
        x = out.x.clone();
        combined = Some(match combined {
            None => out,
            Some(prev) => merge(prev, out),
        });
    }
    combined.ok_or_else(|| Error::InvalidParameter("empty restart schedule".into()))
}

fn merge(prev: SolveOutput, next: SolveOutput) -> SolveOutput {
    let offset = prev.iterations;
    let mut trace = prev.trace;
    trace.extend_shifted(&next.trace, offset);
    let mut steps = prev.steps;
    steps.extend(next.steps.into_iter().map(|mut s| {
        s.k += offset;
        s
    }));
    let mut iterates = prev.iterates;
    iterates.extend(next.iterates.into_iter().skip(1));
    let mut warnings = prev.warnings;
    warnings.extend(next.warnings);
    SolveOutput {
        iterations: prev.iterations + next.iterations,
        inner_trials: prev.inner_trials + next.inner_trials,
        l_max: prev.l_max.max(next.l_max),
        l_initial: prev.l_initial,
        fmu_initial: prev.fmu_initial,
        f_initial: prev.f_initial,
        f_best: prev.f_best.min(next.f_best),
        epochs: prev.epochs + next.epochs,
        trace,
        steps,
        iterates,
        warnings,
        ..next
    }
}
