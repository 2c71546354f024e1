//! Built-in test problems with exact derivatives, barriers, constraints and
//! strictly feasible starting points.

mod box_qp;
mod lp_regression;
mod poisson;

pub use box_qp::{build_box_qp, box_qp_from_parts, BoxQp};
pub use lp_regression::{build_lp_regression, LpRegression};
pub use poisson::{build_poisson, poisson_instance, PoissonInverse};

use nalgebra::DVector;
use rand::Rng;

use crate::barrier::{Barrier, BarrierRef};
use crate::certify::{analytic_center, DEFAULT_CENTER_ITERS};
use crate::error::{Error, Result};
use crate::geometry::{build_null_basis, AffineConstraint, NullBasis};
use crate::model::{ObjectiveRef, Potential};

/// Objective, barrier, constraint and a strictly feasible start.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub objective: ObjectiveRef,
    pub barrier: BarrierRef,
    pub constraint: AffineConstraint,
    pub x_start: DVector<f64>,
    /// Whether the barrier attains its minimum on the feasible slice.
    pub has_center: bool,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.x_start.len()
    }

    pub fn basis(&self) -> Result<NullBasis> {
        build_null_basis(&self.constraint)
    }

    pub fn potential(&self, mu: f64) -> Result<Potential> {
        Potential::new(self.objective.clone(), self.barrier.clone(), mu)
    }

    /// The analytic center when it exists, otherwise `x_start`.
    pub fn initial_point(&self, basis: &NullBasis) -> Result<DVector<f64>> {
        if self.has_center {
            analytic_center(self.barrier.as_ref(), basis, &self.x_start, DEFAULT_CENTER_ITERS)
        } else {
            Ok(self.x_start.clone())
        }
    }

    /// Random interior points near `x_start` (not necessarily on the affine slice).
    pub fn sample_interior<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<DVector<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let d = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
            let t_max = max_interior_step(self.barrier.as_ref(), &self.x_start, &d, 1.0);
            let z = &self.x_start + d * (0.9 * t_max * rng.random::<f64>());
            if self.barrier.is_interior(&z) {
                out.push(z);
            }
        }
        out
    }
}

/// Largest `t <= cap` with `x + t d` interior, by bisection.
pub(crate) fn max_interior_step(barrier: &dyn Barrier, x: &DVector<f64>, d: &DVector<f64>, cap: f64) -> f64 {
    let inside = |t: f64| barrier.is_interior(&(x + d * t));
    if inside(cap) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Parameters selecting a built-in problem by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub seed: u64,
    pub negative_curvature_fraction: f64,
    pub sum_constraint: bool,
    /// Rows of the Poisson forward operator.
    pub m: usize,
    pub alpha: f64,
    pub p: f64,
}

impl ProblemSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            n: 10,
            seed: 7,
            negative_curvature_fraction: 0.5,
            sum_constraint: true,
            m: 5,
            alpha: 0.1,
            p: 0.5,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        match self.name.as_str() {
            "box_qp" => build_box_qp(self.n, self.seed, self.negative_curvature_fraction, self.sum_constraint),
            "poisson" => poisson_instance(self.m, self.n, self.alpha, self.p, self.seed),
            "lp_regression" => build_lp_regression(self.n, self.alpha, self.p, self.seed),
            other => Err(Error::InvalidData(format!("unknown problem '{other}'"))),
        }
    }
}

pub const PROBLEM_NAMES: [&str; 3] = ["box_qp", "poisson", "lp_regression"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fd_check_gradient, fd_check_hessian};
    use crate::solver::FEAS_TOL;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_problems() -> Vec<Problem> {
        PROBLEM_NAMES.iter().map(|n| ProblemSpec::new(n).build().unwrap()).collect()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for prob in all_problems() {
            for x in prob.sample_interior(&mut rng, 20) {
                let g = fd_check_gradient(prob.objective.as_ref(), &x, 1e-5, Some(prob.barrier.as_ref())).unwrap();
                let h = fd_check_hessian(prob.objective.as_ref(), &x, 1e-4, Some(prob.barrier.as_ref())).unwrap();
                assert!(g <= 1e-5, "{}: gradient error {g}", prob.name);
                assert!(h <= 1e-4, "{}: hessian error {h}", prob.name);
            }
        }
    }

    #[test]
    fn starts_are_strictly_feasible() {
        for prob in all_problems() {
            assert!(prob.barrier.is_interior(&prob.x_start), "{}", prob.name);
            assert!(prob.constraint.residual(&prob.x_start) <= 1e-12, "{}", prob.name);
            let basis = prob.basis().unwrap();
            let x0 = prob.initial_point(&basis).unwrap();
            assert!(prob.constraint.is_feasible(&x0, FEAS_TOL));
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(ProblemSpec::new("nope").build(), Err(Error::InvalidData(_))));
    }
}
