//! First-order adaptive barrier method with backtracking on a local
//! Lipschitz estimate.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{solve_first_order_kkt, NullBasis};
use crate::model::Potential;
use crate::solver::{check_eps, check_start, dual_residual, elapsed_ms, ls_slack, trial_values, PointEval};
use crate::trace::{Algorithm, SolveOutput, Status, StepRecord, Trace, TraceRow};

/// Estimate used after the first failed trial when `L_k = 0`.
pub const L_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AhbaConfig {
    pub eps: f64,
    /// Defaults to `eps / nu`.
    pub mu_override: Option<f64>,
    /// Initial estimate; `0` is allowed for linear objectives.
    pub l0: f64,
    pub max_outer: usize,
    pub max_inner_per_step: usize,
}

impl AhbaConfig {
    pub fn new(eps: f64) -> Self {
        Self { eps, mu_override: None, l0: 1.0, max_outer: 200_000, max_inner_per_step: 200 }
    }

    pub fn mu(&self, nu: f64) -> f64 {
        self.mu_override.unwrap_or(self.eps / nu)
    }

    /// Stopping threshold `eps / (3 nu)` on `||v||_x`.
    pub fn threshold(&self, nu: f64) -> f64 {
        self.eps / (3.0 * nu)
    }

    fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if !(self.l0 >= 0.0) || !self.l0.is_finite() {
            return Err(Error::InvalidParameter(format!("L0 = {} must be finite and nonnegative", self.l0)));
        }
        if let Some(mu) = self.mu_override {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter(format!("mu = {mu} must be positive")));
            }
        }
        Ok(())
    }
}

/// `alpha = min{1 / (estimate + 2 mu), 1 / (2 ||v||)}`.
pub fn step_size(estimate: f64, mu: f64, vnorm: f64) -> f64 {
    let a = 1.0 / (estimate + 2.0 * mu);
    if vnorm > 0.0 {
        a.min(1.0 / (2.0 * vnorm))
    } else {
        a
    }
}

#[derive(Debug, Clone)]
pub struct AhbaState {
    pub x: DVector<f64>,
    /// Current estimate `L_k`.
    pub l: f64,
    pub k: usize,
    pub inner_total: usize,
}

/// Projected direction at a point: `grad F_mu + H v - A^T y = 0`, `A v = 0`.
#[derive(Debug, Clone)]
pub struct FirstOrderDirection {
    pub v: DVector<f64>,
    pub y: DVector<f64>,
    pub vnorm: f64,
    pub fmu: f64,
    pub f: f64,
    pub grad_f: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum AhbaStep {
    /// `||v|| < eps / (3 nu)` at the current point; no step taken.
    Stop(FirstOrderDirection),
    Moved(FirstOrderDirection, StepRecord),
}

pub fn first_order_direction(pot: &Potential, basis: &NullBasis, x: &DVector<f64>) -> Result<FirstOrderDirection> {
    let pe = PointEval::new(pot, x)?;
    direction_from_eval(&pe, basis)
}

fn direction_from_eval(pe: &PointEval, basis: &NullBasis) -> Result<FirstOrderDirection> {
    let (v, y) = solve_first_order_kkt(pe.hessian(), basis, &pe.grad_fmu)?;
    let vnorm = pe.metric.local_norm(&v)?;
    Ok(FirstOrderDirection { v, y, vnorm, fmu: pe.fmu, f: pe.f, grad_f: pe.grad_f.clone() })
}

/// One outer iteration: direction, stopping test, then backtracking until
/// `f(z) <= f(x) + <grad f, z - x> + 2^{i-1} L_k ||z - x||_x^2`.
pub fn ahba_step(
    state: &mut AhbaState,
    pot: &Potential,
    basis: &NullBasis,
    cfg: &AhbaConfig,
    trace: &mut Trace,
    clock: Instant,
) -> Result<AhbaStep> {
    let pe = PointEval::new(pot, &state.x).map_err(|e| match e {
        Error::NonFiniteValue { .. } => Error::NonFiniteValue { iteration: state.k },
        other => other,
    })?;
    let dir = direction_from_eval(&pe, basis)?;
    let nu = pot.nu();
    if dir.vnorm < cfg.threshold(nu) {
        return Ok(AhbaStep::Stop(dir));
    }
    let mu = pot.mu;
    let c = basis.constraint();
    let slope = pe.grad_f.dot(&dir.v);
    let mut base = state.l;
    let mut nonfinite_run = 0;
    let mut i = 0usize;
    let mut exp = 0i32;
    loop {
        if i > cfg.max_inner_per_step {
            return Err(Error::InnerLoopExceeded { iteration: state.k, trials: i });
        }
        let estimate = base * 2f64.powi(exp);
        let alpha = step_size(estimate, mu, dir.vnorm);
        debug_assert!(alpha * dir.vnorm <= 0.5 + 1e-15);
        let z = &state.x + &dir.v * alpha;
        let (fmu_z, f_z) = trial_values(pot, &z);
        let d2 = alpha * alpha * dir.vnorm * dir.vnorm;
        let rhs = pe.f + alpha * slope + 0.5 * estimate * d2 + ls_slack(pe.f);
        let finite = fmu_z.is_finite();
        let accepted = finite && f_z <= rhs;
        trace.push(TraceRow {
            k: state.k,
            inner: i,
            estimate,
            alpha,
            vnorm: dir.vnorm,
            fmu: fmu_z,
            f: f_z,
            feas: c.residual(&z),
            accepted,
            ms: elapsed_ms(clock),
        });
        state.inner_total += 1;
        if accepted {
            let decrease_bound = -alpha * dir.vnorm * dir.vnorm / 2.0;
            let record = StepRecord {
                k: state.k,
                inner_trials: i + 1,
                estimate,
                alpha,
                vnorm: dir.vnorm,
                fmu_before: pe.fmu,
                fmu_after: fmu_z,
                decrease_bound,
                bound_applies: true,
                threshold: cfg.threshold(nu),
                curvature_min_eig: None,
                eps: cfg.eps,
                mu,
            };
            state.l = estimate / 2.0;
            state.x = z;
            state.k += 1;
            return Ok(AhbaStep::Moved(dir, record));
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
        if base == 0.0 {
            base = L_FLOOR;
        } else {
            exp += 1;
        }
    }
}

/// Runs the first-order method from an interior feasible `x0` until
/// `||v^k||_x < eps / (3 nu)` or `max_outer` steps.
pub fn run_ahba(pot: &Potential, basis: &NullBasis, x0: &DVector<f64>, cfg: &AhbaConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    check_start(pot, basis.constraint(), x0)?;
    let nu = pot.nu();
    let mu = cfg.mu(nu);
    let pot = pot.with_mu(mu)?;
    let clock = Instant::now();
    let mut state = AhbaState { x: x0.clone(), l: cfg.l0, k: 0, inner_total: 0 };
    let mut trace = Trace::default();
    let mut steps = Vec::new();
    let mut iterates = vec![x0.clone()];
    let mut l_last = cfg.l0;
    let mut l_max = 0.0f64;
    let mut fmu_initial = None;
    let mut f_initial = 0.0;
    let mut f_best = f64::INFINITY;
    loop {
        let at_limit = state.k >= cfg.max_outer;
        let outcome = if at_limit {
            AhbaStep::Stop(first_order_direction(&pot, basis, &state.x)?)
        } else {
            ahba_step(&mut state, &pot, basis, cfg, &mut trace, clock)?
        };
        match outcome {
            AhbaStep::Moved(dir, record) => {
                if fmu_initial.is_none() {
                    fmu_initial = Some(dir.fmu);
                    f_initial = dir.f;
                    f_best = dir.f;
                }
                l_last = record.estimate;
                l_max = l_max.max(record.estimate);
                f_best = f_best.min(trace.rows.last().map_or(f64::INFINITY, |r| r.f));
                steps.push(record);
                iterates.push(state.x.clone());
            }
            AhbaStep::Stop(dir) => {
                let fmu0 = *fmu_initial.get_or_insert(dir.fmu);
                if state.k == 0 {
                    f_initial = dir.f;
                }
                f_best = f_best.min(dir.f);
                let status = if dir.vnorm < cfg.threshold(nu) { Status::Converged } else { Status::MaxIterations };
                let s = dual_residual(basis.constraint(), &dir.grad_f, &dir.y);
                return Ok(SolveOutput {
                    algorithm: Algorithm::Ahba,
                    status,
                    x: state.x,
                    y: dir.y,
                    s,
                    l_final: state.l,
                    l_last,
                    l_max,
                    l_initial: cfg.l0,
                    iterations: state.k,
                    inner_trials: state.inner_total,
                    eps: cfg.eps,
                    mu,
                    nu,
                    final_vnorm: dir.vnorm,
                    threshold: cfg.threshold(nu),
                    fmu_initial: fmu0,
                    f_initial,
                    f_final: dir.f,
                    f_best,
                    epochs: 1,
                    trace,
                    steps,
                    iterates,
                    warnings: Vec::new(),
                });
            }
        }
    }
}
