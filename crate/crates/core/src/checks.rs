//! Numeric self-checks for barriers and built-in problems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::barrier::{omega, Barrier, LocalMetric};
use crate::error::{Error, Result};
use crate::geometry::solve_first_order_kkt;
use crate::model::{fd_check_gradient, fd_check_hessian, Objective, ObjectiveRef, Potential};
use crate::problems::Problem;

pub const SELF_CONCORDANCE_TOL: f64 = 1e-3;
pub const NU_TOL: f64 = 1e-6;
pub const UPPER_BOUND_SLACK: f64 = 1e-9;

/// Worst-case statistics of the barrier suite over a set of sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSuite {
    pub samples: usize,
    /// Largest `|D^3 h[d,d,d]| / (2 (D^2 h[d,d])^{3/2})`.
    pub self_concordance_ratio: f64,
    /// Largest `<grad h, H^{-1} grad h> - nu`.
    pub nu_excess: f64,
    /// Largest `h(x + t d) - (h(x) + t <grad h, d> + t^2 ||d||^2 omega(t ||d||))`.
    pub upper_bound_excess: f64,
    /// Points `x + d` with `||d||_x < 1` that stayed interior.
    pub dikin_interior: usize,
}

impl BarrierSuite {
    pub fn passed(&self) -> bool {
        self.self_concordance_ratio <= 1.0 + SELF_CONCORDANCE_TOL
            && self.nu_excess <= NU_TOL
            && self.upper_bound_excess <= UPPER_BOUND_SLACK
            && self.dikin_interior == self.samples
    }
}

fn quad(barrier: &dyn Barrier, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    (barrier.hessian(x) * d).dot(d)
}

/// Third directional derivative by central differences of `D^2 h[d, d]`, with
/// `||d||_x = 1` and a step well inside the Dikin ellipsoid.
fn third_derivative(barrier: &dyn Barrier, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let t = 1e-4;
    (quad(barrier, &(x + d * t), d) - quad(barrier, &(x - d * t), d)) / (2.0 * t)
}

/// Runs self-concordance, barrier-parameter, upper-bound and Dikin checks at
/// every point with one random direction each.
pub fn barrier_suite<R: Rng>(barrier: &dyn Barrier, points: &[DVector<f64>], rng: &mut R) -> Result<BarrierSuite> {
    let n = barrier.dim();
    let mut out = BarrierSuite {
        samples: points.len(),
        self_concordance_ratio: 0.0,
        nu_excess: f64::NEG_INFINITY,
        upper_bound_excess: f64::NEG_INFINITY,
        dikin_interior: 0,
    };
    for x in points {
        let metric = LocalMetric::new(barrier, x)?;
        let raw = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let d = &raw / metric.local_norm(&raw)?;

        let d2 = quad(barrier, x, &d);
        let d3 = third_derivative(barrier, x, &d);
        out.self_concordance_ratio = out.self_concordance_ratio.max(d3.abs() / (2.0 * d2.powf(1.5)));

        let g = barrier.gradient(x);
        out.nu_excess = out.nu_excess.max(g.dot(&metric.solve(&g)?) - barrier.nu());

        let t: f64 = rng.random_range(0.0..0.99);
        let h0 = barrier.value(x);
        let bound = h0 + t * g.dot(&d) + t * t * omega(t)?;
        out.upper_bound_excess = out.upper_bound_excess.max(barrier.value(&(x + &d * t)) - bound);

        let s: f64 = rng.random_range(0.0..1.0);
        if metric.dikin_step_feasible(&d, s) && barrier.is_interior(&(x + &d * s)) {
            out.dikin_interior += 1;
        }
    }
    Ok(out)
}

/// One line of a verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CheckLine {
    fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.to_string(), value, tol, passed: value <= tol }
    }
}

/// Objective whose gradient is scaled by a constant, for fault injection.
#[derive(Debug)]
pub struct ScaledGradient {
    pub inner: ObjectiveRef,
    pub scale: f64,
}

impl Objective for ScaledGradient {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.inner.value(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.gradient(x) * self.scale
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.inner.hessian(x)
    }

    fn has_hessian(&self) -> bool {
        self.inner.has_hessian()
    }

    fn smooth_on_boundary(&self) -> bool {
        self.inner.smooth_on_boundary()
    }
}

/// Barrier suite, derivative checks and KKT residuals for a built-in problem
/// on `samples` random interior points.
pub fn verify_problem<R: Rng>(problem: &Problem, samples: usize, rng: &mut R) -> Result<Vec<CheckLine>> {
    if samples == 0 {
        return Err(Error::InvalidParameter("verification needs at least one sample".into()));
    }
    let barrier = problem.barrier.as_ref();
    let points = problem.sample_interior(rng, samples);
    let suite = barrier_suite(barrier, &points, rng)?;
    let mut lines = vec![
        CheckLine::at_most("self_concordance_ratio", suite.self_concordance_ratio, 1.0 + SELF_CONCORDANCE_TOL),
        CheckLine::at_most("nu_excess", suite.nu_excess, NU_TOL),
        CheckLine::at_most("upper_bound_excess", suite.upper_bound_excess, UPPER_BOUND_SLACK),
        CheckLine::at_most("dikin_outside", (suite.samples - suite.dikin_interior) as f64, 0.0),
    ];

    let objective = problem.objective.as_ref();
    let mut grad_err = 0.0f64;
    let mut hess_err = 0.0f64;
    for x in &points {
        grad_err = grad_err.max(fd_check_gradient(objective, x, 1e-5, Some(barrier))?);
        if objective.has_hessian() {
            hess_err = hess_err.max(fd_check_hessian(objective, x, 1e-4, Some(barrier))?);
        }
    }
    lines.push(CheckLine::at_most("fd_gradient", grad_err, 1e-5));
    if objective.has_hessian() {
        lines.push(CheckLine::at_most("fd_hessian", hess_err, 1e-4));
    }

    let basis = problem.basis()?;
    let pot = Potential::new(problem.objective.clone(), problem.barrier.clone(), 0.1)?;
    let a = problem.constraint.a();
    let mut stationarity = 0.0f64;
    let mut null_residual = 0.0f64;
    let x0 = problem.initial_point(&basis)?;
    let (_, g) = pot.eval(&x0)?;
    let h = barrier.hessian(&x0);
    let (v, y) = solve_first_order_kkt(&h, &basis, &g)?;
    let scale = 1.0 + g.norm();
    stationarity = stationarity.max((&g + &h * &v - a.transpose() * &y).norm() / scale);
    if a.nrows() > 0 {
        null_residual = null_residual.max((a * &v).norm() / scale);
    }
    lines.push(CheckLine::at_most("kkt_stationarity", stationarity, 1e-8));
    lines.push(CheckLine::at_most("kkt_null_residual", null_residual, 1e-10));
    Ok(lines)
}

/// Copy of `problem` whose gradient oracle is multiplied by `scale`.
pub fn with_scaled_gradient(problem: &Problem, scale: f64) -> Problem {
    Problem {
        objective: std::sync::Arc::new(ScaledGradient { inner: problem.objective.clone(), scale }),
        ..problem.clone()
    }
}
