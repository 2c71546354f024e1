use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Problem;
use crate::barrier::make_log_orthant;
use crate::error::{Error, Result};
use crate::geometry::AffineConstraint;
use crate::model::Objective;

/// `f(x) = ||W2 tanh(W1 x + c) - z||^2 + lambda sum_i x_i^p` on the positive orthant.
#[derive(Debug, Clone)]
pub struct LpRegression {
    pub w1: DMatrix<f64>,
    pub c: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub z: DVector<f64>,
    pub lambda: f64,
    pub p: f64,
}

impl LpRegression {
    /// Hidden activations `t = tanh(W1 x + c)` and residual `W2 t - z`.
    fn forward(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let t = (&self.w1 * x + &self.c).map(f64::tanh);
        let r = &self.w2 * &t - &self.z;
        (t, r)
    }
}

impl Objective for LpRegression {
    fn dim(&self) -> usize {
        self.w1.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (_, r) = self.forward(x);
        r.norm_squared() + self.lambda * x.iter().map(|v| v.powf(self.p)).sum::<f64>()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (t, r) = self.forward(x);
        let back = (self.w2.transpose() * r).component_mul(&t.map(|t| 1.0 - t * t));
        self.w1.transpose() * back * 2.0 + x.map(|v| self.lambda * self.p * v.powf(self.p - 1.0))
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (t, r) = self.forward(x);
        let d1 = t.map(|t| 1.0 - t * t);
        let d2 = t.map(|t| -2.0 * t * (1.0 - t * t));
        let mut jac = self.w1.clone();
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= d1[i];
        }
        let jac = &self.w2 * jac;
        let weights = (self.w2.transpose() * r).component_mul(&d2);
        let mut scaled = self.w1.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let mut h = jac.transpose() * &jac * 2.0 + self.w1.transpose() * scaled * 2.0;
        for i in 0..x.len() {
            h[(i, i)] += self.lambda * self.p * (self.p - 1.0) * x[i].powf(self.p - 2.0);
        }
        Some((&h + h.transpose()) * 0.5)
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn smooth_on_boundary(&self) -> bool {
        false
    }
}

/// One-hidden-layer tanh regression with `n` inputs, `n` hidden units and
/// `max(1, n/2)` outputs, data generated from a sparse nonnegative signal.
pub fn build_lp_regression(n: usize, lambda: f64, p: f64, seed: u64) -> Result<Problem> {
    if n == 0 {
        return Err(Error::InvalidDimension("regression needs n >= 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must be positive")));
    }
    let hidden = n;
    let outputs = (n / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale1 = 1.0 / (n as f64).sqrt();
    let scale2 = 1.0 / (hidden as f64).sqrt();
    let w1 = DMatrix::from_fn(hidden, n, |_, _| scale1 * rng.sample::<f64, _>(StandardNormal));
    let c = DVector::from_fn(hidden, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    let w2 = DMatrix::from_fn(outputs, hidden, |_, _| scale2 * rng.sample::<f64, _>(StandardNormal));
    let x_true = DVector::from_fn(n, |_, _| if rng.random::<f64>() < 0.3 { rng.random_range(0.5..2.0) } else { 0.0 });
    let clean = &w2 * (&w1 * x_true + &c).map(f64::tanh);
    let z = clean.map(|v| v + 0.01 * rng.sample::<f64, _>(StandardNormal));
    Ok(Problem {
        name: "lp_regression".into(),
        objective: Arc::new(LpRegression { w1, c, w2, z, lambda, p }),
        barrier: Arc::new(make_log_orthant(n)?),
        constraint: AffineConstraint::unconstrained(n),
        x_start: DVector::from_element(n, 1.0),
        has_center: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fd_check_gradient;
    use approx::assert_relative_eq;

    fn regularizer_only(lambda: f64, p: f64) -> LpRegression {
        LpRegression {
            w1: DMatrix::zeros(1, 1),
            c: DVector::zeros(1),
            w2: DMatrix::zeros(1, 1),
            z: DVector::zeros(1),
            lambda,
            p,
        }
    }

    #[test]
    fn power_term_at_one() {
        let f = regularizer_only(0.3, 0.5);
        assert_relative_eq!(f.gradient(&DVector::from_element(1, 1.0))[0], 0.15, epsilon = 1e-15);
    }

    #[test]
    fn power_term_blows_up_at_boundary() {
        let (lambda, p) = (0.3, 0.5);
        let f = regularizer_only(lambda, p);
        // x^{p-1} = 1e3 exactly at x = 1e-6
        assert_relative_eq!(f.gradient(&DVector::from_element(1, 1e-6))[0], 1e3 * lambda * p, max_relative = 1e-12);
        assert!(f.gradient(&DVector::from_element(1, 1e-8))[0] > 1e3 * lambda * p);
    }

    #[test]
    fn loss_gradient_fd_at_random_points() {
        use rand::SeedableRng;
        let prob = build_lp_regression(6, 0.1, 0.5, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(0.2..2.0));
            assert!(fd_check_gradient(prob.objective.as_ref(), &x, 1e-5, Some(prob.barrier.as_ref())).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(matches!(build_lp_regression(3, 0.1, 1.0, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_lp_regression(3, 0.1, 0.0, 1), Err(Error::InvalidParameter(_))));
    }
}
