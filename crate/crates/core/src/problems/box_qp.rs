use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Problem;
use crate::barrier::make_log_box;
use crate::error::{check_dim, Error, Result};
use crate::geometry::AffineConstraint;
use crate::model::Objective;

/// `f(x) = 1/2 x^T Q x + <c, x>`.
#[derive(Debug, Clone)]
pub struct BoxQp {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Objective for BoxQp {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.q * x).dot(x) + self.c.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.c
    }

    fn hessian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.q.clone())
    }

    fn has_hessian(&self) -> bool {
        true
    }
}

/// Random `Q = V diag(lambda) V^T` with `round(fraction n)` eigenvalues in
/// `[-2, -0.5]` and the rest in `[0.5, 2]`, on the box `[-1, 1]^n`, optionally
/// with `sum(x) = n / 4`.
pub fn build_box_qp(n: usize, seed: u64, negative_curvature_fraction: f64, sum_constraint: bool) -> Result<Problem> {
    if n == 0 {
        return Err(Error::InvalidDimension("box QP needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&negative_curvature_fraction) {
        return Err(Error::InvalidParameter(format!(
            "negative curvature fraction {negative_curvature_fraction} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let mut v = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            v.column_mut(j).neg_mut();
        }
    }
    let n_neg = (negative_curvature_fraction * n as f64).round() as usize;
    let eig = DVector::from_iterator(
        n,
        (0..n).map(|i| if i < n_neg { -rng.random_range(0.5..=2.0) } else { rng.random_range(0.5..=2.0) }),
    );
    let q = &v * DMatrix::from_diagonal(&eig) * v.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let c = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
    let sum = sum_constraint.then_some(0.25 * n as f64);
    box_qp_from_parts(q, c, DVector::from_element(n, -1.0), DVector::from_element(n, 1.0), sum)
}

/// Box QP from explicit data; `sum = Some(s)` adds `sum(x) = s`.
pub fn box_qp_from_parts(
    q: DMatrix<f64>,
    c: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    sum: Option<f64>,
) -> Result<Problem> {
    let n = c.len();
    check_dim(n, q.nrows())?;
    check_dim(n, q.ncols())?;
    let barrier = make_log_box(lower.clone(), upper.clone())?;
    let mid = (&lower + &upper) * 0.5;
    let (constraint, x_start) = match sum {
        None => (AffineConstraint::unconstrained(n), mid),
        Some(s) => {
            let a = DMatrix::from_element(1, n, 1.0);
            let shift = (s - mid.sum()) / n as f64;
            let x = mid.add_scalar(shift);
            (AffineConstraint::new(a, DVector::from_element(1, s))?, x)
        }
    };
    if !(0..n).all(|i| x_start[i] > lower[i] && x_start[i] < upper[i]) {
        return Err(Error::InfeasibleStart("projected box midpoint leaves the box".into()));
    }
    Ok(Problem {
        name: "box_qp".into(),
        objective: Arc::new(BoxQp { q, c }),
        barrier: Arc::new(barrier),
        constraint,
        x_start,
        has_center: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use nalgebra::SymmetricEigen;

    #[test]
    fn deterministic_per_seed() {
        let a = build_box_qp(8, 42, 0.5, true).unwrap();
        let b = build_box_qp(8, 42, 0.5, true).unwrap();
        let c = build_box_qp(8, 43, 0.5, true).unwrap();
        let qa = a.objective.hessian(&a.x_start).unwrap();
        assert_eq!(qa, b.objective.hessian(&b.x_start).unwrap());
        assert_ne!(qa, c.objective.hessian(&c.x_start).unwrap());
    }

    #[test]
    fn spectrum_follows_fraction() {
        let p = build_box_qp(10, 1, 0.3, false).unwrap();
        let q = p.objective.hessian(&p.x_start).unwrap();
        let eig = SymmetricEigen::new(q).eigenvalues;
        assert_eq!(eig.iter().filter(|&&l| l < 0.0).count(), 3);
        assert!(eig.iter().all(|l| (0.5 - 1e-12..=2.0 + 1e-12).contains(&l.abs())));
        let convex = build_box_qp(10, 1, 0.0, false).unwrap();
        assert!(min_eigenvalue(&convex.objective.hessian(&convex.x_start).unwrap()) > 0.0);
    }

    #[test]
    fn start_on_sum_constraint() {
        let p = build_box_qp(20, 7, 0.5, true).unwrap();
        assert_eq!(p.x_start, DVector::from_element(20, 0.25));
        assert_eq!(p.constraint.residual(&p.x_start), 0.0);
    }

    #[test]
    fn scalar_concave_instance() {
        let p = box_qp_from_parts(
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_element(1, 2.0),
            None,
        )
        .unwrap();
        assert_eq!(p.x_start[0], 1.0);
        assert_eq!(p.objective.value(&p.x_start), -0.5);
    }
}
