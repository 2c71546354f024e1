//! Second-order adaptive barrier method with cubic-regularized steps in the
//! null space of the constraints.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::cubic::{solve_cubic, CubicInstance};
use crate::error::{Error, Result};
use crate::geometry::{project_reduced_data, NullBasis};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::model::Potential;
use crate::solver::{check_eps, check_start, dual_residual, elapsed_ms, ls_slack, trial_values, PointEval};
use crate::trace::{Algorithm, SolveOutput, Status, StepRecord, Trace, TraceRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SahbaConfig {
    pub eps: f64,
    /// Defaults to `eps / (4 nu)`.
    pub mu_override: Option<f64>,
    /// Initial estimate; `None` starts at the floor `144 eps`. Smaller values are clamped.
    pub m0: Option<f64>,
    pub max_outer: usize,
    pub max_inner_per_step: usize,
}

impl SahbaConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, mu_override: None, m0: None, max_outer: 100_000, max_inner_per_step: 200 }
    }

    pub fn mu(&self, nu: f64) -> f64 {
        self.mu_override.unwrap_or(self.eps / (4.0 * nu))
    }

    /// `144 eps`.
    pub fn l_floor(&self) -> f64 {
        144.0 * self.eps
    }

    /// Initial estimate after clamping, plus a warning if a clamp happened.
    pub fn effective_m0(&self) -> (f64, Option<String>) {
        let floor = self.l_floor();
        match self.m0 {
            None => (floor, None),
            Some(m0) if m0 < floor => (floor, Some(format!("M0 = {m0} is below 144 eps = {floor}; clamped to {floor}"))),
            Some(m0) => (m0, None),
        }
    }

    fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if let Some(m0) = self.m0 {
            if !(m0 > 0.0) || !m0.is_finite() {
                return Err(Error::InvalidParameter(format!("M0 = {m0} must be positive")));
            }
        }
        if let Some(mu) = self.mu_override {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter(format!("mu = {mu} must be positive")));
            }
        }
        Ok(())
    }
}

/// `alpha = min{1, 1 / (2 ||v||)}`.
pub fn step_size(vnorm: f64) -> f64 {
    if vnorm > 0.5 {
        1.0 / (2.0 * vnorm)
    } else {
        1.0
    }
}

/// `Delta = sqrt(eps / (12 L nu))`.
pub fn stopping_radius(eps: f64, l: f64, nu: f64) -> f64 {
    (eps / (12.0 * l * nu)).sqrt()
}

#[derive(Debug, Clone)]
pub struct SahbaState {
    pub x: DVector<f64>,
    /// Current estimate `M_k`.
    pub m: f64,
    pub k: usize,
    pub inner_total: usize,
    /// `(||v^{k-1}||, Delta_{k-1}, y^{k-1})` of the previous accepted step.
    pub previous: Option<(f64, f64, DVector<f64>)>,
}

/// The accepted cubic step at the current point.
#[derive(Debug, Clone)]
pub struct CubicStep {
    pub v: DVector<f64>,
    pub y: DVector<f64>,
    pub vnorm: f64,
    /// `L_k`.
    pub l: f64,
    pub alpha: f64,
    pub delta: f64,
    pub fmu: f64,
    pub f: f64,
    pub grad_f: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum SahbaStep {
    /// The two-iteration stopping rule fired; the state was not moved.
    Stop(CubicStep),
    Moved(CubicStep, StepRecord),
}

/// Smallest eigenvalue of `Z^T (hess_f + (L r / 2) H) Z` after symmetric
/// Jacobi scaling by `diag(Z^T H Z)`.
pub fn curvature_certificate(z: &DMatrix<f64>, hess_f: &DMatrix<f64>, h: &DMatrix<f64>, shift: f64) -> f64 {
    if z.ncols() == 0 {
        return f64::INFINITY;
    }
    let m = symmetrize(&(z.transpose() * (hess_f + h * shift) * z));
    let hr = z.transpose() * h * z;
    let d = DVector::from_iterator(hr.nrows(), hr.diagonal().iter().map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()));
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j]);
    min_eigenvalue(&scaled)
}

/// One outer iteration: backtracking over `L = 2^i M_k` with the cubic model,
/// accepting when the cubic bound on `f` and the gradient remainder bound hold.
pub fn sahba_step(
    state: &mut SahbaState,
    pot: &Potential,
    basis: &NullBasis,
    cfg: &SahbaConfig,
    trace: &mut Trace,
    clock: Instant,
) -> Result<SahbaStep> {
    let pe = PointEval::new(pot, &state.x).map_err(|e| match e {
        Error::NonFiniteValue { .. } => Error::NonFiniteValue { iteration: state.k },
        other => other,
    })?;
    let hess_f = pot.objective.hessian(&state.x).ok_or(Error::MissingHessian)?;
    let h = pe.hessian().clone();
    let (g_r, j_r, h_r) = project_reduced_data(basis, &pe.grad_fmu, &hess_f, &h)?;
    let z_basis = basis.z();
    let c = basis.constraint();
    let nu = pot.nu();
    let mut nonfinite_run = 0;
    let mut i = 0usize;
    loop {
        if i > cfg.max_inner_per_step {
            return Err(Error::InnerLoopExceeded { iteration: state.k, trials: i });
        }
        let l = state.m * 2f64.powi(i as i32);
        let sol = solve_cubic(&CubicInstance::new(g_r.clone(), j_r.clone(), h_r.clone(), l)?)?;
        let v = z_basis * &sol.u;
        let vnorm = pe.metric.local_norm(&v)?;
        let alpha = step_size(vnorm);
        let d = &v * alpha;
        let dnorm = alpha * vnorm;
        let z = &state.x + &d;
        let (fmu_z, f_z) = trial_values(pot, &z);
        let finite = fmu_z.is_finite();
        let hd = &hess_f * &d;
        let mut accepted = false;
        if finite {
            let model = pe.f + pe.grad_f.dot(&d) + 0.5 * hd.dot(&d) + l / 6.0 * dnorm.powi(3);
            let ls1 = f_z <= model + ls_slack(pe.f);
            if ls1 {
                let grad_z = pot.objective.gradient(&z);
                let remainder = &grad_z - &pe.grad_f - &hd;
                let scale = pe.metric.dual_local_norm(&grad_z)? + pe.metric.dual_local_norm(&pe.grad_f)?;
                let lhs = pe.metric.dual_local_norm(&remainder)?;
                accepted = lhs <= 0.5 * l * dnorm * dnorm + 8.0 * f64::EPSILON * (1.0 + scale);
            }
        }
        trace.push(TraceRow {
            k: state.k,
            inner: i,
            estimate: l,
            alpha,
            vnorm,
            fmu: fmu_z,
            f: f_z,
            feas: c.residual(&z),
            accepted,
            ms: elapsed_ms(clock),
        });
        state.inner_total += 1;
        if accepted {
            let y = basis.multiplier(&(&pe.grad_fmu + &hess_f * &v + &h * &v * (0.5 * l * vnorm)))?;
            let delta = stopping_radius(cfg.eps, l, nu);
            let step = CubicStep { v, y, vnorm, l, alpha, delta, fmu: pe.fmu, f: pe.f, grad_f: pe.grad_f.clone() };
            if let Some((prev_norm, prev_delta, _)) = &state.previous {
                if *prev_norm < *prev_delta && vnorm < delta {
                    return Ok(SahbaStep::Stop(step));
                }
            }
            let record = StepRecord {
                k: state.k,
                inner_trials: i + 1,
                estimate: l,
                alpha,
                vnorm,
                fmu_before: pe.fmu,
                fmu_after: fmu_z,
                decrease_bound: -vnorm.powi(3) * l * alpha * alpha / 24.0,
                bound_applies: vnorm >= delta,
                threshold: delta,
                curvature_min_eig: Some(curvature_certificate(z_basis, &hess_f, &h, 0.5 * l * vnorm)),
                eps: cfg.eps,
                mu: pot.mu,
            };
            state.previous = Some((vnorm, delta, step.y.clone()));
            state.m = (l / 2.0).max(cfg.l_floor());
            state.x = z;
            state.k += 1;
            return Ok(SahbaStep::Moved(step, record));
        }
        if finite {
            nonfinite_run = 0;
        } else {
            nonfinite_run += 1;
            if nonfinite_run >= 2 {
                return Err(Error::NonFiniteValue { iteration: state.k });
            }
        }
        i += 1;
    }
}

/// Runs the second-order method until two consecutive steps fall below their
/// radii `Delta_k` or `max_outer` steps. The output carries `x^k`, `y^{k-1}`
/// and `s^k = grad f(x^k) - A^T y^{k-1}`.
pub fn run_sahba(pot: &Potential, basis: &NullBasis, x0: &DVector<f64>, cfg: &SahbaConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    if !pot.objective.has_hessian() {
        return Err(Error::MissingHessian);
    }
    check_start(pot, basis.constraint(), x0)?;
    let nu = pot.nu();
    let mu = cfg.mu(nu);
    let pot = pot.with_mu(mu)?;
    let (m0, warning) = cfg.effective_m0();
    let clock = Instant::now();
    let mut state = SahbaState { x: x0.clone(), m: m0, k: 0, inner_total: 0, previous: None };
    let mut trace = Trace::default();
    let mut steps = Vec::new();
    let mut iterates = vec![x0.clone()];
    let mut l_last = m0;
    let mut l_max = 0.0f64;
    let mut fmu_initial = f64::NAN;
    let mut f_initial = f64::NAN;
    let mut f_best = f64::INFINITY;
    let c = basis.constraint();
    loop {
        if state.k >= cfg.max_outer {
            let pe = PointEval::new(&pot, &state.x)?;
            let (vnorm, delta, y) = state.previous.clone().unwrap_or((f64::INFINITY, f64::NAN, DVector::zeros(c.rows())));
            let s = dual_residual(c, &pe.grad_f, &y);
            f_best = f_best.min(pe.f);
            if fmu_initial.is_nan() {
                fmu_initial = pe.fmu;
                f_initial = pe.f;
            }
            return Ok(finish(FinishArgs {
                status: Status::MaxIterations,
                state,
                y,
                s,
                l_last,
                l_max,
                l_initial: m0,
                eps: cfg.eps,
                mu,
                nu,
                final_vnorm: vnorm,
                threshold: delta,
                fmu_initial,
                f_initial,
                f_final: pe.f,
                f_best,
                trace,
                steps,
                iterates,
                warning,
            }));
        }
        let outcome = sahba_step(&mut state, &pot, basis, cfg, &mut trace, clock)?;
        match outcome {
            SahbaStep::Moved(step, record) => {
                if fmu_initial.is_nan() {
                    fmu_initial = step.fmu;
                    f_initial = step.f;
                    f_best = step.f;
                }
                l_last = record.estimate;
                l_max = l_max.max(record.estimate);
                f_best = f_best.min(trace.rows.last().map_or(f64::INFINITY, |r| r.f));
                steps.push(record);
                iterates.push(state.x.clone());
            }
            SahbaStep::Stop(step) => {
                if fmu_initial.is_nan() {
                    fmu_initial = step.fmu;
                    f_initial = step.f;
                }
                l_last = step.l;
                l_max = l_max.max(step.l);
                f_best = f_best.min(step.f);
                let y = state.previous.as_ref().map(|p| p.2.clone()).unwrap_or_else(|| step.y.clone());
                let s = dual_residual(c, &step.grad_f, &y);
                return Ok(finish(FinishArgs {
                    status: Status::Converged,
                    state,
                    y,
                    s,
                    l_last,
                    l_max,
                    l_initial: m0,
                    eps: cfg.eps,
                    mu,
                    nu,
                    final_vnorm: step.vnorm,
                    threshold: step.delta,
                    fmu_initial,
                    f_initial,
                    f_final: step.f,
                    f_best,
                    trace,
                    steps,
                    iterates,
                    warning,
                }));
            }
        }
    }
}

struct FinishArgs {
    status: Status,
    state: SahbaState,
    y: DVector<f64>,
    s: DVector<f64>,
    l_last: f64,
    l_max: f64,
    l_initial: f64,
    eps: f64,
    mu: f64,
    nu: f64,
    final_vnorm: f64,
    threshold: f64,
    fmu_initial: f64,
    f_initial: f64,
    f_final: f64,
    f_best: f64,
    trace: Trace,
    steps: Vec<StepRecord>,
    iterates: Vec<DVector<f64>>,
    warning: Option<String>,
}

fn finish(a: FinishArgs) -> SolveOutput {
    SolveOutput {
        algorithm: Algorithm::Sahba,
        status: a.status,
        x: a.state.x,
        y: a.y,
        s: a.s,
        l_final: a.state.m,
        l_last: a.l_last,
        l_max: a.l_max,
        l_initial: a.l_initial,
        iterations: a.state.k,
        inner_trials: a.state.inner_total,
        eps: a.eps,
        mu: a.mu,
        nu: a.nu,
        final_vnorm: a.final_vnorm,
        threshold: a.threshold,
        fmu_initial: a.fmu_initial,
        f_initial: a.f_initial,
        f_final: a.f_final,
        f_best: a.f_best,
        epochs: 1,
        trace: a.trace,
        steps: a.steps,
        iterates: a.iterates,
        warnings: a.warning.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{make_log_box, make_log_orthant, BarrierRef};
    use crate::geometry::{build_null_basis, AffineConstraint};
    use crate::model::ClosureObjective;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn radius_formula() {
        let eps = 0.012;
        assert_relative_eq!(stopping_radius(eps, 144.0 * eps, 1.0), (0.012f64 / (12.0 * 1.728)).sqrt(), epsilon = 1e-16);
        assert_relative_eq!(stopping_radius(eps, 1.728, 1.0), 5.787037037037037e-4f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn step_regimes() {
        assert_eq!(step_size(0.3), 1.0);
        assert_eq!(step_size(2.0), 0.25);
        assert_eq!(step_size(0.5), 1.0);
    }

    #[test]
    fn m0_clamp() {
        let cfg = SahbaConfig { m0: Some(1e-3), ..SahbaConfig::new(0.01) };
        let (m0, warn) = cfg.effective_m0();
        assert_relative_eq!(m0, 1.44, epsilon = 1e-15);
        assert!(warn.is_some());
        let cfg = SahbaConfig { m0: Some(5.0), ..SahbaConfig::new(0.01) };
        assert_eq!(cfg.effective_m0(), (5.0, None));
    }

    #[test]
    fn quadratic_accepts_first_trial() {
        let barrier: BarrierRef = Arc::new(make_log_orthant(2).unwrap());
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -0.5]);
        let pot = Potential::new(Arc::new(ClosureObjective::quadratic(q, v(&[0.2, -0.1]))), barrier, 0.01).unwrap();
        let basis = build_null_basis(&AffineConstraint::unconstrained(2)).unwrap();
        for m in [1e-3, 0.1, 10.0] {
            let mut state = SahbaState { x: v(&[1.0, 2.0]), m, k: 0, inner_total: 0, previous: None };
            let mut trace = Trace::default();
            let cfg = SahbaConfig::new(1e-5);
            let out = sahba_step(&mut state, &pot, &basis, &cfg, &mut trace, Instant::now()).unwrap();
            assert!(matches!(out, SahbaStep::Moved(..)));
            assert_eq!(trace.len(), 1);
        }
    }

    #[test]
    fn zero_objective_certificate() {
        let barrier: BarrierRef = Arc::new(make_log_box(v(&[0.0, 0.0]), v(&[1.0, 3.0])).unwrap());
        let pot = Potential::new(Arc::new(ClosureObjective::zero(2)), barrier, 1.0).unwrap();
        let basis = build_null_basis(&AffineConstraint::unconstrained(2)).unwrap();
        let out = run_sahba(&pot, &basis, &v(&[0.2, 2.5]), &SahbaConfig::new(0.05)).unwrap();
        assert!(out.converged());
        assert!(out.final_vnorm < out.threshold);
        for step in &out.steps {
            assert!(step.curvature_min_eig.unwrap() > 0.0);
        }
    }

    #[test]
    fn requires_hessian() {
        let barrier: BarrierRef = Arc::new(make_log_orthant(1).unwrap());
        let f = Arc::new(ClosureObjective::new(1, |x| x[0], |_| v(&[1.0])));
        let pot = Potential::new(f, barrier, 1.0).unwrap();
        let basis = build_null_basis(&AffineConstraint::unconstrained(1)).unwrap();
        assert!(matches!(run_sahba(&pot, &basis, &v(&[1.0]), &SahbaConfig::new(0.1)), Err(Error::MissingHessian)));
    }

    #[test]
    fn first_iteration_never_stops() {
        // started at the exact minimizer, so v = 0 at every iterate
        let barrier: BarrierRef = Arc::new(make_log_box(v(&[0.0]), v(&[2.0])).unwrap());
        let pot = Potential::new(Arc::new(ClosureObjective::zero(1)), barrier, 1.0).unwrap();
        let basis = build_null_basis(&AffineConstraint::unconstrained(1)).unwrap();
        let out = run_sahba(&pot, &basis, &v(&[1.0]), &SahbaConfig::new(0.1)).unwrap();
        assert!(out.converged());
        assert_eq!(out.iterations, 1);
        assert_eq!(out.inner_trials, 2);
    }
}
