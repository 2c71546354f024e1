//! Self-concordant barriers, local norms and Dikin-ellipsoid tests.
//!
//! A barrier `h` with parameter `nu` is exposed through the [`Barrier`] trait:
//! value, gradient and Hessian oracles plus a strict-interior domain test.
//! [`LocalMetric`] factorizes `H(x)` once and serves the local norm
//! `||v||_x = <H(x) v, v>^{1/2}` and its dual `||s||*_x = <H(x)^{-1} s, s>^{1/2}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::linalg::cholesky_with_jitter;

/// Outcome of a barrier domain test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Interior,
    BoundaryOrOutside,
}

/// Value, gradient and Hessian of a barrier at one point.
#[derive(Debug, Clone)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A `nu`-self-concordant barrier for a closed convex set with nonempty interior.
///
/// Oracles are only meaningful at interior points; callers check
/// [`Barrier::domain_test`] first. `value` returns `+inf` outside the domain.
pub trait Barrier: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn nu(&self) -> f64;
    fn domain_test(&self, x: &DVector<f64>) -> Domain;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn is_interior(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim() && self.domain_test(x) == Domain::Interior
    }

    fn oracle(&self, x: &DVector<f64>) -> Result<BarrierEval> {
        check_dim(self.dim(), x.len())?;
        if self.domain_test(x) != Domain::Interior {
            return Err(Error::OutsideDomain);
        }
        Ok(BarrierEval { value: self.value(x), gradient: self.gradient(x), hessian: self.hessian(x) })
    }
}

/// Shared handle to a barrier.
pub type BarrierRef = Arc<dyn Barrier>;

/// `h(x) = -sum log x_i` on the positive orthant, `nu = n`.
#[derive(Debug, Clone)]
pub struct LogOrthant {
    n: usize,
}

/// `h(x) = -sum log(x_i - l_i) - sum log(u_i - x_i)`, `nu = 2n`.
#[derive(Debug, Clone)]
pub struct LogBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

/// `h(x) = -log(R^2 - ||x - c||^2)` on the open Euclidean ball.
#[derive(Debug, Clone)]
pub struct LogBall {
    center: DVector<f64>,
    radius: f64,
    nu: f64,
}

/// Sum of two barriers on the intersection of their domains.
#[derive(Debug, Clone)]
pub struct SumBarrier {
    first: BarrierRef,
    second: BarrierRef,
}

pub fn make_log_orthant(n: usize) -> Result<LogOrthant> {
    if n == 0 {
        return Err(Error::InvalidDimension("orthant barrier needs n >= 1".into()));
    }
    Ok(LogOrthant { n })
}

pub fn make_log_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<LogBox> {
    check_dim(lower.len(), upper.len())?;
    if lower.is_empty() {
        return Err(Error::InvalidDimension("box barrier needs n >= 1".into()));
    }
    for i in 0..lower.len() {
        // written so that NaN bounds are rejected as well
        if !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
            return Err(Error::InvalidBounds { index: i, lower: lower[i], upper: upper[i] });
        }
    }
    Ok(LogBox { lower, upper })
}

pub fn make_log_ball(center: DVector<f64>, radius: f64) -> Result<LogBall> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidRadius(radius));
    }
    if center.is_empty() {
        return Err(Error::InvalidDimension("ball barrier needs n >= 1".into()));
    }
    let mut ball = LogBall { center, radius, nu: f64::INFINITY };
    ball.nu = ball.sampled_nu().max(1.0).ceil();
    Ok(ball)
}

pub fn sum_barriers(first: BarrierRef, second: BarrierRef) -> Result<SumBarrier> {
    check_dim(first.dim(), second.dim())?;
    Ok(SumBarrier { first, second })
}

impl Barrier for LogOrthant {
    fn dim(&self) -> usize {
        self.n
    }

    fn nu(&self) -> f64 {
        self.n as f64
    }

    fn domain_test(&self, x: &DVector<f64>) -> Domain {
        if x.len() == self.n && x.iter().all(|&v| v > 0.0 && v.is_finite()) {
            Domain::Interior
        } else {
            Domain::BoundaryOrOutside
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.domain_test(x) != Domain::Interior {
            return f64::INFINITY;
        }
        -x.iter().map(|v| v.ln()).sum::<f64>()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| -1.0 / v)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * v)))
    }
}

impl LogBox {
    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }
}

impl Barrier for LogBox {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn nu(&self) -> f64 {
        2.0 * self.lower.len() as f64
    }

    fn domain_test(&self, x: &DVector<f64>) -> Domain {
        if x.len() != self.dim() {
            return Domain::BoundaryOrOutside;
        }
        let inside = x
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&v, (&l, &u))| v > l && v < u);
        if inside {
            Domain::Interior
        } else {
            Domain::BoundaryOrOutside
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.domain_test(x) != Domain::Interior {
            return f64::INFINITY;
        }
        let mut h = 0.0;
        for i in 0..x.len() {
            h -= (x[i] - self.lower[i]).ln() + (self.upper[i] - x[i]).ln();
        }
        h
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| -1.0 / (x[i] - self.lower[i]) + 1.0 / (self.upper[i] - x[i]))
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = DVector::from_fn(x.len(), |i, _| {
            let a = x[i] - self.lower[i];
            let b = self.upper[i] - x[i];
            1.0 / (a * a) + 1.0 / (b * b)
        });
        DMatrix::from_diagonal(&d)
    }
}

impl LogBall {
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn slack(&self, x: &DVector<f64>) -> f64 {
        self.radius * self.radius - (x - &self.center).norm_squared()
    }

    /// Largest `<grad h, H^{-1} grad h>` seen along radial lines towards the
    /// boundary (coordinate axes in both orientations plus the diagonals).
    fn sampled_nu(&self) -> f64 {
        let n = self.center.len();
        let mut directions: Vec<DVector<f64>> = Vec::with_capacity(2 * n + 2);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut d = DVector::zeros(n);
                d[i] = sign;
                directions.push(d);
            }
        }
        for sign in [1.0, -1.0] {
            directions.push(DVector::from_element(n, sign / (n as f64).sqrt()));
        }
        let mut best = 0.0f64;
        for d in &directions {
            for k in 0..=12 {
                let frac = 1.0 - 10f64.powi(-k) * 0.5;
                let x = &self.center + d * (self.radius * frac);
                if self.domain_test(&x) != Domain::Interior {
                    continue;
                }
                let g = self.gradient(&x);
                if let Some(c) = Cholesky::new(self.hessian(&x)) {
                    best = best.max(g.dot(&c.solve(&g)));
                }
            }
        }
        best
    }
}

impl Barrier for LogBall {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn nu(&self) -> f64 {
        self.nu
    }

    fn domain_test(&self, x: &DVector<f64>) -> Domain {
        if x.len() == self.dim() && self.slack(x) > 0.0 {
            Domain::Interior
        } else {
            Domain::BoundaryOrOutside
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.domain_test(x) != Domain::Interior {
            return f64::INFINITY;
        }
        -self.slack(x).ln()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let q = self.slack(x);
        (x - &self.center) * (2.0 / q)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let q = self.slack(x);
        let y = x - &self.center;
        let mut h = &y * y.transpose() * (4.0 / (q * q));
        for i in 0..y.len() {
            h[(i, i)] += 2.0 / q;
        }
        h
    }
}

impl Barrier for SumBarrier {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn nu(&self) -> f64 {
        self.first.nu() + self.second.nu()
    }

    fn domain_test(&self, x: &DVector<f64>) -> Domain {
        if self.first.domain_test(x) == Domain::Interior && self.second.domain_test(x) == Domain::Interior {
            Domain::Interior
        } else {
            Domain::BoundaryOrOutside
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.domain_test(x) != Domain::Interior {
            return f64::INFINITY;
        }
        self.first.value(x) + self.second.value(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.first.gradient(x) + self.second.gradient(x)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.first.hessian(x) + self.second.hessian(x)
    }
}

/// The barrier Hessian at an anchor point together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct LocalMetric {
    anchor: DVector<f64>,
    hessian: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
    condition_estimate: f64,
}

impl LocalMetric {
    pub fn new(barrier: &dyn Barrier, x: &DVector<f64>) -> Result<Self> {
        check_dim(barrier.dim(), x.len())?;
        if barrier.domain_test(x) != Domain::Interior {
            return Err(Error::OutsideDomain);
        }
        Self::from_hessian(x.clone(), barrier.hessian(x))
    }

    /// Builds a metric from an explicit symmetric positive-definite matrix.
    pub fn from_hessian(anchor: DVector<f64>, hessian: DMatrix<f64>) -> Result<Self> {
        check_dim(anchor.len(), hessian.nrows())?;
        check_dim(hessian.nrows(), hessian.ncols())?;
        let factor = cholesky_with_jitter(&hessian).ok_or(Error::IllConditionedMetric)?;
        let diag = factor.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
        let condition_estimate = if diag.is_empty() { 1.0 } else { (hi / lo).powi(2) };
        Ok(Self { anchor, hessian, factor, condition_estimate })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// `H(x)^{-1} s`.
    pub fn solve(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), s.len())?;
        Ok(self.factor.solve(s))
    }

    pub fn local_norm(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok((&self.hessian * v).dot(v).max(0.0).sqrt())
    }

    pub fn dual_local_norm(&self, s: &DVector<f64>) -> Result<f64> {
        let w = self.solve(s)?;
        Ok(w.dot(s).max(0.0).sqrt())
    }

    /// True iff `t * ||v||_x < 1`, i.e. `x + t v` lies in the open Dikin ellipsoid.
    pub fn dikin_step_feasible(&self, v: &DVector<f64>, t: f64) -> bool {
        match self.local_norm(v) {
            Ok(norm) => t.abs() * norm < 1.0,
            Err(_) => false,
        }
    }
}

/// `omega(t) = (-t - ln(1 - t)) / t^2` on `[0, 1)`.
pub fn omega(t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::OutOfRange(t));
    }
    if t < 1e-4 {
        // 1/2 + t/3 + t^2/4 + t^3/5 + t^4/6
        return Ok(0.5 + t * (1.0 / 3.0 + t * (0.25 + t * (0.2 + t / 6.0))));
    }
    Ok((-t - (-t).ln_1p()) / (t * t))
}
