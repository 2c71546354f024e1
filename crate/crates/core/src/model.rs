//! Objective oracles, the barrier potential `F_mu = f + mu h`, and
//! finite-difference derivative checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::barrier::{Barrier, BarrierRef, Domain, LocalMetric};
use crate::error::{check_dim, Error, Result};

/// Smooth objective `f` evaluated on the interior of the feasible set.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Second derivatives, if available. Required by the second-order method.
    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn has_hessian(&self) -> bool {
        false
    }

    /// Whether `f` stays differentiable on the boundary of the set.
    fn smooth_on_boundary(&self) -> bool {
        true
    }
}

pub type ObjectiveRef = Arc<dyn Objective>;

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Objective assembled from closures.
pub struct ClosureObjective {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    hessian: Option<Box<HessFn>>,
    smooth_on_boundary: bool,
}

impl ClosureObjective {
    pub fn new(
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, value: Box::new(value), gradient: Box::new(gradient), hessian: None, smooth_on_boundary: true }
    }

    pub fn with_hessian(mut self, hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }

    pub fn nonsmooth_on_boundary(mut self) -> Self {
        self.smooth_on_boundary = false;
        self
    }

    /// `f = 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_| 0.0, move |_| DVector::zeros(dim)).with_hessian(move |_| DMatrix::zeros(dim, dim))
    }

    /// `f(x) = <c, x>`.
    pub fn linear(c: DVector<f64>) -> Self {
        let dim = c.len();
        let c2 = c.clone();
        Self::new(dim, move |x| c.dot(x), move |_| c2.clone()).with_hessian(move |_| DMatrix::zeros(dim, dim))
    }

    /// `f(x) = 0.5 x^T Q x + <c, x>`.
    pub fn quadratic(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let dim = c.len();
        let (q1, q2, q3) = (q.clone(), q.clone(), q);
        let (c1, c2) = (c.clone(), c);
        Self::new(dim, move |x| 0.5 * (&q1 * x).dot(x) + c1.dot(x), move |x| &q2 * x + &c2)
            .with_hessian(move |_| q3.clone())
    }
}

impl fmt::Debug for ClosureObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureObjective")
            .field("dim", &self.dim)
            .field("has_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl Objective for ClosureObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.hessian.as_ref().map(|h| h(x))
    }

    fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    fn smooth_on_boundary(&self) -> bool {
        self.smooth_on_boundary
    }
}

/// `F_mu(x) = f(x) + mu h(x)`.
#[derive(Debug, Clone)]
pub struct Potential {
    pub objective: ObjectiveRef,
    pub barrier: BarrierRef,
    pub mu: f64,
}

impl Potential {
    pub fn new(objective: ObjectiveRef, barrier: BarrierRef, mu: f64) -> Result<Self> {
        check_dim(objective.dim(), barrier.dim())?;
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu = {mu} must be finite and nonnegative")));
        }
        Ok(Self { objective, barrier, mu })
    }

    pub fn dim(&self) -> usize {
        self.barrier.dim()
    }

    pub fn nu(&self) -> f64 {
        self.barrier.nu()
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.objective.clone(), self.barrier.clone(), mu)
    }

    /// `F_mu(x)`, or `+inf` outside the barrier domain.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        if self.barrier.domain_test(x) != Domain::Interior {
            return f64::INFINITY;
        }
        let f = self.objective.value(x);
        if self.mu == 0.0 {
            f
        } else {
            f + self.mu * self.barrier.value(x)
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        potential_eval(self, x)
    }
}

/// Value and gradient of the potential at an interior point.
pub fn potential_eval(p: &Potential, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    check_dim(p.dim(), x.len())?;
    if p.barrier.domain_test(x) != Domain::Interior {
        return Err(Error::OutsideDomain);
    }
    let f = p.objective.value(x);
    let g = p.objective.gradient(x);
    if p.mu == 0.0 {
        return Ok((f, g));
    }
    Ok((f + p.mu * p.barrier.value(x), g + p.barrier.gradient(x) * p.mu))
}

fn fd_step(x: &DVector<f64>, step: f64) -> f64 {
    step * (1.0 + x.amax())
}

/// Shrinks the step once if `x +- h e_i` leaves the interior.
fn admissible_step(barrier: Option<&dyn Barrier>, x: &DVector<f64>, h: f64) -> Result<f64> {
    let Some(b) = barrier else { return Ok(h) };
    let fits = |h: f64| {
        (0..x.len()).all(|i| {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            b.is_interior(&p) && b.is_interior(&m)
        })
    };
    if fits(h) {
        return Ok(h);
    }
    let shrunk = h * 1e-3;
    if fits(shrunk) {
        Ok(shrunk)
    } else {
        Err(Error::OutsideDomain)
    }
}

fn rel_err(approx: f64, exact: f64) -> f64 {
    (approx - exact).abs() / (1.0 + exact.abs())
}

/// Worst componentwise `|fd - grad| / (1 + |grad|)` for central differences
/// with step `step * (1 + ||x||_inf)`.
pub fn fd_check_gradient(m: &dyn Objective, x: &DVector<f64>, step: f64, domain: Option<&dyn Barrier>) -> Result<f64> {
    check_dim(m.dim(), x.len())?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {step} must be positive")));
    }
    if let Some(b) = domain {
        if !b.is_interior(x) {
            return Err(Error::OutsideDomain);
        }
    }
    let h = admissible_step(domain, x, fd_step(x, step))?;
    let g = m.gradient(x);
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut p = x.clone();
        p[i] += h;
        let mut q = x.clone();
        q[i] -= h;
        let fd = (m.value(&p) - m.value(&q)) / (2.0 * h);
        worst = worst.max(rel_err(fd, g[i]));
    }
    Ok(worst)
}

/// Same protocol as [`fd_check_gradient`] applied to differences of gradients.
pub fn fd_check_hessian(m: &dyn Objective, x: &DVector<f64>, step: f64, domain: Option<&dyn Barrier>) -> Result<f64> {
    check_dim(m.dim(), x.len())?;
    let hess = m.hessian(x).ok_or(Error::MissingHessian)?;
    if !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step {step} must be positive")));
    }
    if let Some(b) = domain {
        if !b.is_interior(x) {
            return Err(Error::OutsideDomain);
        }
    }
    let h = admissible_step(domain, x, fd_step(x, step))?;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut p = x.clone();
        p[i] += h;
        let mut q = x.clone();
        q[i] -= h;
        let col = (m.gradient(&p) - m.gradient(&q)) / (2.0 * h);
        for j in 0..x.len() {
            worst = worst.max(rel_err(col[j], hess[(j, i)]));
        }
    }
    Ok(worst)
}

/// Largest observed ratio `2 (f(x+v) - f(x) - <grad f(x), v>) / ||v||_x^2`
/// over the supplied samples with `||v||_x < 1`.
pub fn probe_gradient_smoothness(
    m: &dyn Objective,
    barrier: &dyn Barrier,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<f64> {
    let mut best = 0.0f64;
    for (x, v) in samples {
        let metric = LocalMetric::new(barrier, x)?;
        let norm = metric.local_norm(v)?;
        if norm == 0.0 || norm >= 1.0 {
            continue;
        }
        let z = x + v;
        let remainder = m.value(&z) - m.value(x) - m.gradient(x).dot(v);
        best = best.max(2.0 * remainder / (norm * norm));
    }
    Ok(best)
}

/// Largest observed ratio `2 ||grad f(x+v) - grad f(x) - hess f(x) v||*_x / ||v||_x^2`.
pub fn probe_hessian_smoothness(
    m: &dyn Objective,
    barrier: &dyn Barrier,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Result<f64> {
    let mut best = 0.0f64;
    for (x, v) in samples {
        let metric = LocalMetric::new(barrier, x)?;
        let norm = metric.local_norm(v)?;
        if norm == 0.0 || norm >= 1.0 {
            continue;
        }
        let hess = m.hessian(x).ok_or(Error::MissingHessian)?;
        let r = m.gradient(&(x + v)) - m.gradient(x) - hess * v;
        best = best.max(2.0 * metric.dual_local_norm(&r)? / (norm * norm));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::make_log_orthant;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn orthant(n: usize) -> BarrierRef {
        Arc::new(make_log_orthant(n).unwrap())
    }

    #[test]
    fn potential_values() {
        let p = Potential::new(Arc::new(ClosureObjective::zero(1)), orthant(1), 1.0).unwrap();
        let (val, g) = potential_eval(&p, &v(&[1.0])).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(g[0], -1.0);

        let p = Potential::new(Arc::new(ClosureObjective::linear(v(&[1.0]))), orthant(1), 0.5).unwrap();
        let (val, g) = potential_eval(&p, &v(&[2.0])).unwrap();
        assert_relative_eq!(val, 2.0 + 0.5 * -(2.0f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(g[0], 1.0 - 0.25, epsilon = 1e-15);

        let f = Arc::new(ClosureObjective::quadratic(DMatrix::identity(1, 1) * 3.0, v(&[1.0])));
        let p = Potential::new(f.clone(), orthant(1), 0.0).unwrap();
        let x = v(&[0.7]);
        assert_eq!(potential_eval(&p, &x).unwrap().0, f.value(&x));
        assert_eq!(potential_eval(&p, &x).unwrap().1, f.gradient(&x));

        assert!(matches!(potential_eval(&p, &v(&[-1.0])), Err(Error::OutsideDomain)));
    }

    #[test]
    fn fd_quadratic_and_linear() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, -3.0]);
        let f = ClosureObjective::quadratic(q, v(&[0.5, -0.25]));
        let x = v(&[0.3, 1.7]);
        assert!(fd_check_gradient(&f, &x, 1e-5, None).unwrap() <= 1e-9);
        assert!(fd_check_hessian(&f, &x, 1e-4, None).unwrap() <= 1e-9);

        let lin = ClosureObjective::linear(v(&[1.0, -2.0]));
        assert!(fd_check_gradient(&lin, &x, 1e-5, None).unwrap() <= 1e-10);
        assert!(fd_check_hessian(&lin, &x, 1e-4, None).unwrap() <= 1e-12);
    }

    #[test]
    fn fd_power_term() {
        let p = 0.5;
        let f = ClosureObjective::new(1, move |x| x[0].powf(p), move |x| v(&[p * x[0].powf(p - 1.0)]))
            .with_hessian(move |x| DMatrix::from_element(1, 1, p * (p - 1.0) * x[0].powf(p - 2.0)));
        let x = v(&[1.0]);
        assert_eq!(f.gradient(&x)[0], 0.5);
        let b = orthant(1);
        assert!(fd_check_gradient(&f, &x, 1e-5, Some(b.as_ref())).unwrap() <= 1e-8);
        assert!(fd_check_hessian(&f, &x, 1e-4, Some(b.as_ref())).unwrap() <= 1e-6);
        assert_relative_eq!(f.hessian(&x).unwrap()[(0, 0)], -0.25, epsilon = 1e-15);
    }

    #[test]
    fn fd_detects_scaled_gradient() {
        let q = DMatrix::identity(2, 2);
        let good = ClosureObjective::quadratic(q.clone(), v(&[1.0, 1.0]));
        let bad = ClosureObjective::new(2, move |x| 0.5 * x.norm_squared() + x.sum(), |x| (x + v(&[1.0, 1.0])) * 1.01);
        let x = v(&[0.5, 0.5]);
        assert!(fd_check_gradient(&good, &x, 1e-5, None).unwrap() < 1e-9);
        assert!(fd_check_gradient(&bad, &x, 1e-5, None).unwrap() > 1e-3);
    }

    #[test]
    fn fd_step_shrinks_near_boundary() {
        let f = ClosureObjective::linear(v(&[1.0]));
        let b = orthant(1);
        // the default step (1e-5 * 1) would cross zero from 5e-6; the shrunk one does not
        assert!(fd_check_gradient(&f, &v(&[5e-6]), 1e-5, Some(b.as_ref())).is_ok());
        assert!(matches!(fd_check_gradient(&f, &v(&[5e-12]), 1e-5, Some(b.as_ref())), Err(Error::OutsideDomain)));
    }

    #[test]
    fn missing_hessian() {
        let f = ClosureObjective::new(1, |x| x[0], |_| v(&[1.0]));
        assert!(!f.has_hessian());
        assert!(matches!(fd_check_hessian(&f, &v(&[1.0]), 1e-4, None), Err(Error::MissingHessian)));
    }
}
