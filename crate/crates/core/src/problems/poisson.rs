use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::Problem;
use crate::barrier::make_log_orthant;
use crate::error::{Error, Result};
use crate::geometry::AffineConstraint;
use crate::model::Objective;

/// Penalized Poisson likelihood over `x = (u, v)` with `v = Phi u`:
/// `f(x) = sum_i (v_i - z_i log v_i) + alpha sum_j u_j^p`.
#[derive(Debug, Clone)]
pub struct PoissonInverse {
    pub phi: DMatrix<f64>,
    pub z: DVector<f64>,
    pub alpha: f64,
    pub p: f64,
}

impl PoissonInverse {
    fn n_u(&self) -> usize {
        self.phi.ncols()
    }
}

impl Objective for PoissonInverse {
    fn dim(&self) -> usize {
        self.phi.ncols() + self.phi.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let nu = self.n_u();
        let reg: f64 = x.rows(0, nu).iter().map(|u| u.powf(self.p)).sum();
        let lik: f64 = x.rows(nu, self.z.len()).iter().zip(self.z.iter()).map(|(v, z)| v - z * v.ln()).sum();
        lik + self.alpha * reg
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let nu = self.n_u();
        DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                if i < nu {
                    self.alpha * self.p * x[i].powf(self.p - 1.0)
                } else {
                    1.0 - self.z[i - nu] / x[i]
                }
            }),
        )
    }

    fn hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let nu = self.n_u();
        let d = DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                if i < nu {
                    self.alpha * self.p * (self.p - 1.0) * x[i].powf(self.p - 2.0)
                } else {
                    self.z[i - nu] / (x[i] * x[i])
                }
            }),
        );
        Some(DMatrix::from_diagonal(&d))
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn smooth_on_boundary(&self) -> bool {
        false
    }
}

/// Problem with constraint `[Phi | -I] (u, v) = 0`, log-orthant barrier on
/// `(u, v)` and start `u = 1`, `v = Phi 1`.
pub fn build_poisson(phi: DMatrix<f64>, z: DVector<f64>, alpha: f64, p: f64) -> Result<Problem> {
    let (m, n_u) = phi.shape();
    if m == 0 || n_u == 0 {
        return Err(Error::InvalidDimension("Poisson operator must be nonempty".into()));
    }
    if z.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: z.len() });
    }
    if phi.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidData("forward operator must have finite nonnegative entries".into()));
    }
    if let Some(j) = (0..n_u).find(|&j| !(phi.column(j).sum() > 0.0)) {
        return Err(Error::InvalidData(format!("column {j} of the forward operator sums to zero")));
    }
    if z.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidData("observations must be finite and nonnegative".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be positive")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in (0, 1)")));
    }
    let n = n_u + m;
    let mut a = DMatrix::zeros(m, n);
    a.view_mut((0, 0), (m, n_u)).copy_from(&phi);
    for i in 0..m {
        a[(i, n_u + i)] = -1.0;
    }
    let u0 = DVector::from_element(n_u, 1.0);
    let v0 = &phi * &u0;
    if v0.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidData("every row of the forward operator needs a positive entry".into()));
    }
    let mut x_start = DVector::zeros(n);
    x_start.rows_mut(0, n_u).copy_from(&u0);
    x_start.rows_mut(n_u, m).copy_from(&v0);
    Ok(Problem {
        name: "poisson".into(),
        objective: Arc::new(PoissonInverse { phi, z, alpha, p }),
        barrier: Arc::new(make_log_orthant(n)?),
        constraint: AffineConstraint::new(a, DVector::zeros(m))?,
        x_start,
        has_center: false,
    })
}

/// Random instance: `Phi` uniform on `[0, 1]`, `z ~ Poisson(Phi u_true)` with a
/// sparse nonnegative `u_true`.
pub fn poisson_instance(m: usize, n_u: usize, alpha: f64, p: f64, seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = DMatrix::from_fn(m, n_u, |_, _| rng.random_range(0.05..1.0));
    let u_true = DVector::from_iterator(n_u, (0..n_u).map(|_| if rng.random::<f64>() < 0.4 { rng.random_range(1.0..3.0) } else { 0.0 }));
    let rate = &phi * u_true;
    let z = DVector::from_iterator(
        m,
        rate.iter().map(|&r| if r > 0.0 { Poisson::new(r).map(|d| d.sample(&mut rng)).unwrap_or(0.0) } else { 0.0 }),
    );
    build_poisson(phi, z, alpha, p)
}
