//! Global minimization of the reduced cubic model
//! `<g,u> + 1/2 <J u, u> + (L/6) ||u||_H^3`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_with_jitter, sorted_symmetric_eigen, symmetrize};

const MAX_EXPAND: usize = 200;
const MAX_ROOT_ITERS: usize = 500;

/// Reduced cubic subproblem data. `h` must be positive definite and `l > 0`.
#[derive(Debug, Clone)]
pub struct CubicInstance {
    pub g: DVector<f64>,
    pub j: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub l: f64,
}

impl CubicInstance {
    pub fn new(g: DVector<f64>, j: DMatrix<f64>, h: DMatrix<f64>, l: f64) -> Result<Self> {
        let p = g.len();
        check_dim(p, j.nrows())?;
        check_dim(p, j.ncols())?;
        check_dim(p, h.nrows())?;
        check_dim(p, h.ncols())?;
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParameter(format!("cubic regularization {l} must be positive")));
        }
        Ok(Self { g, j, h, l })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }
}

#[derive(Debug, Clone)]
pub struct CubicSolution {
    pub u: DVector<f64>,
    /// `||u||_H`.
    pub r: f64,
    /// `||g + J u + (L r / 2) H u||`.
    pub stationarity_residual: f64,
    /// Smallest eigenvalue of `J + (L r / 2) H` relative to `H`.
    pub min_eig_certificate: f64,
    pub hard_case: bool,
}

/// Model value without the constant term.
pub fn model_value(inst: &CubicInstance, u: &DVector<f64>) -> Result<f64> {
    check_dim(inst.dim(), u.len())?;
    let r = (&inst.h * u).dot(u).max(0.0).sqrt();
    Ok(inst.g.dot(u) + 0.5 * (&inst.j * u).dot(u) + inst.l / 6.0 * r.powi(3))
}

/// Eigen-coordinates of the transformed problem `g_hat = C^{-1} g`,
/// `J_hat = C^{-1} J C^{-T}` with `H = C C^T`.
struct Secular {
    lambda: DVector<f64>,
    gamma: DVector<f64>,
    l: f64,
}

impl Secular {
    fn w(&self, sigma: f64, skip: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.lambda.len(),
            (0..self.lambda.len()).map(|i| {
                if i < skip || self.gamma[i] == 0.0 {
                    0.0
                } else {
                    -self.gamma[i] / (self.lambda[i] + sigma)
                }
            }),
        )
    }

    /// `||w(sigma)|| - 2 sigma / L` and its derivative.
    fn phi(&self, sigma: f64) -> (f64, f64) {
        let mut norm2 = 0.0;
        let mut cube = 0.0;
        for i in 0..self.lambda.len() {
            if self.gamma[i] == 0.0 {
                continue;
            }
            let d = self.lambda[i] + sigma;
            norm2 += (self.gamma[i] / d).powi(2);
            cube += self.gamma[i].powi(2) / d.powi(3);
        }
        let norm = norm2.sqrt();
        let dphi = if norm > 0.0 { -cube / norm } else { 0.0 } - 2.0 / self.l;
        (norm - 2.0 * sigma / self.l, dphi)
    }

    fn model(&self, w: &DVector<f64>) -> f64 {
        let n = w.norm();
        self.gamma.dot(w) + 0.5 * w.iter().zip(self.lambda.iter()).map(|(wi, li)| li * wi * wi).sum::<f64>()
            + self.l / 6.0 * n.powi(3)
    }

    /// Adds `tau e_0` with `||w + tau e_0|| = 2 sigma / L`, choosing the sign of lower model value.
    fn close_gap(&self, mut w: DVector<f64>, sigma: f64) -> DVector<f64> {
        let gap = (2.0 * sigma / self.l).powi(2) - w.norm_squared();
        if gap <= 0.0 {
            return w;
        }
        let tau = gap.sqrt();
        let mut plus = w.clone();
        plus[0] += tau;
        w[0] -= tau;
        if self.model(&w) < self.model(&plus) {
            w
        } else {
            plus
        }
    }
}

/// Solves the cubic subproblem globally through a secular equation in
/// `sigma = L r / 2` on the eigenbasis of the `H`-transformed `J`.
pub fn solve_cubic(inst: &CubicInstance) -> Result<CubicSolution> {
    let p = inst.dim();
    if p == 0 {
        return Ok(CubicSolution {
            u: DVector::zeros(0),
            r: 0.0,
            stationarity_residual: 0.0,
            min_eig_certificate: f64::INFINITY,
            hard_case: false,
        });
    }
    if !inst.g.iter().chain(inst.j.iter()).all(|v| v.is_finite()) {
        return Err(Error::NoConvergence("non-finite cubic subproblem data".into()));
    }
    let chol = cholesky_with_jitter(&symmetrize(&inst.h)).ok_or(Error::FactorizationFailure)?;
    let c = chol.l();
    let g_hat = c.solve_lower_triangular(&inst.g).ok_or(Error::FactorizationFailure)?;
    let cj = c.solve_lower_triangular(&symmetrize(&inst.j)).ok_or(Error::FactorizationFailure)?;
    let j_hat = symmetrize(&c.solve_lower_triangular(&cj.transpose()).ok_or(Error::FactorizationFailure)?);
    let (lambda, q) = sorted_symmetric_eigen(&j_hat);
    let gamma = q.transpose() * &g_hat;
    let sec = Secular { lambda, gamma, l: inst.l };

    let lam_min = sec.lambda[0];
    let scale = sec.lambda.amax().max(1.0);
    let bottom = sec.lambda.iter().take_while(|&&v| v <= lam_min + 1e-12 * scale).count();
    let gnorm = sec.gamma.norm();
    let bottom_norm = sec.gamma.rows(0, bottom).norm();
    let sigma_lo = (-lam_min).max(0.0);

    let (w, hard_case) = if gnorm == 0.0 {
        if sigma_lo > 0.0 {
            (sec.close_gap(DVector::zeros(p), sigma_lo), true)
        } else {
            (DVector::zeros(p), false)
        }
    } else if bottom_norm <= 1e-12 * gnorm && sigma_lo > 0.0 && sec.w(sigma_lo, bottom).norm() <= 2.0 * sigma_lo / sec.l {
        (sec.close_gap(sec.w(sigma_lo, bottom), sigma_lo), true)
    } else {
        let (sigma, converged) = secular_root(&sec, sigma_lo)?;
        let w = sec.w(sigma, 0);
        if converged {
            (w, false)
        } else if sigma_lo > 0.0 {
            (sec.close_gap(w, sigma), true)
        } else {
            return Err(Error::NoConvergence(format!("secular equation stalled at sigma = {sigma:e}")));
        }
    };

    let w_orig = &q * &w;
    let u = c.transpose().solve_upper_triangular(&w_orig).ok_or(Error::FactorizationFailure)?;
    if !u.iter().all(|v| v.is_finite()) {
        return Err(Error::NoConvergence("non-finite cubic step".into()));
    }
    let r = (&inst.h * &u).dot(&u).max(0.0).sqrt();
    let hu = &inst.h * &u;
    let resid = &inst.g + &inst.j * &u + hu * (inst.l * r / 2.0);
    Ok(CubicSolution {
        stationarity_residual: resid.norm(),
        min_eig_certificate: lam_min + inst.l * r / 2.0,
        r,
        u,
        hard_case,
    })
}

/// Safeguarded Newton on the convex decreasing `phi` over `(sigma_lo, inf)`.
/// Returns the root and whether the value tolerance was met; otherwise the
/// returned point is the right end of the collapsed bracket (`phi <= 0`).
fn secular_root(sec: &Secular, sigma_lo: f64) -> Result<(f64, bool)> {
    let tol = |s: f64| 1e-12 * (1.0 + 2.0 * s / sec.l);
    let mut hi = sigma_lo + 1.0f64.max(sigma_lo);
    let mut expansions = 0;
    loop {
        let (f, _) = sec.phi(hi);
        if f.abs() <= tol(hi) {
            return Ok((hi, true));
        }
        if f < 0.0 {
            break;
        }
        expansions += 1;
        if expansions > MAX_EXPAND {
            return Err(Error::NoConvergence(format!("secular root not bracketed after {MAX_EXPAND} doublings")));
        }
        hi = sigma_lo + 2.0 * (hi - sigma_lo);
    }
    let mut lo = sigma_lo;
    let (f_lo, _) = sec.phi(lo);
    let mut lo_state = if sigma_lo == 0.0 && f_lo.is_finite() { Some(sec.phi(lo)) } else { None };
    for _ in 0..MAX_ROOT_ITERS {
        let newton = lo_state.and_then(|(f, df)| {
            let cand = lo - f / df;
            (df < 0.0 && cand > lo && cand < hi).then_some(cand)
        });
        let sigma = newton.unwrap_or(0.5 * (lo + hi));
        if !(sigma > lo && sigma < hi) {
            return Ok((hi, false));
        }
        let (f, df) = sec.phi(sigma);
        if f.abs() <= tol(sigma) {
            return Ok((sigma, true));
        }
        if f > 0.0 {
            lo = sigma;
            lo_state = Some((f, df));
        } else {
            hi = sigma;
        }
    }
    Ok((hi, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, data.len() / rows, data)
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn zero_gradient_convex() {
        let inst = CubicInstance::new(v(&[0.0, 0.0]), m(2, &[2.0, 0.5, 0.5, 1.0]), m(2, &[2.0, 0.0, 0.0, 1.0]), 3.0).unwrap();
        let sol = solve_cubic(&inst).unwrap();
        assert_eq!(sol.u, v(&[0.0, 0.0]));
        assert_eq!(sol.r, 0.0);
        // det(J - t H) = 2 (1 - t)^2 - 1/4
        let oracle = 1.0 - (1.0f64 / 8.0).sqrt();
        assert_relative_eq!(sol.min_eig_certificate, oracle, epsilon = 1e-12);
        assert!(sol.min_eig_certificate >= 0.0);
    }

    #[test]
    fn one_dimensional_example() {
        let inst = CubicInstance::new(v(&[1.0]), m(1, &[-1.0]), m(1, &[1.0]), 6.0).unwrap();
        let sol = solve_cubic(&inst).unwrap();
        // 1 - u + 3|u|u = 0; branches u<0: -3u^2 - u + 1 = 0, u>0: 3u^2 - u + 1 = 0 (no real roots)
        let exact = (-1.0 - 13.0f64.sqrt()) / 6.0;
        assert_relative_eq!(sol.u[0], exact, epsilon = 1e-12);
        assert_relative_eq!(model_value(&inst, &sol.u).unwrap(), exact + 0.5 * -exact * exact + exact.abs().powi(3), epsilon = 1e-12);
        assert!((model_value(&inst, &sol.u).unwrap() - -0.60991).abs() < 1e-4);
        assert_relative_eq!(sol.min_eig_certificate, -1.0 + 3.0 * exact.abs(), epsilon = 1e-12);
        assert!(sol.stationarity_residual <= 1e-12);
    }

    #[test]
    fn zero_step_value() {
        let inst = CubicInstance::new(v(&[1.0]), m(1, &[-1.0]), m(1, &[1.0]), 6.0).unwrap();
        assert_eq!(model_value(&inst, &v(&[0.0])).unwrap(), 0.0);
        assert!(matches!(model_value(&inst, &v(&[0.0, 1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_instance() {
        let inst = CubicInstance::new(DVector::zeros(0), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), 1.0).unwrap();
        let sol = solve_cubic(&inst).unwrap();
        assert_eq!(sol.u.len(), 0);
        assert_eq!(sol.r, 0.0);
        assert_eq!(sol.min_eig_certificate, f64::INFINITY);
    }

    #[test]
    fn hard_case_orthogonal_gradient() {
        let inst = CubicInstance::new(v(&[0.0, 0.1]), m(2, &[-1.0, 0.0, 0.0, 1.0]), DMatrix::identity(2, 2), 1.0).unwrap();
        let sol = solve_cubic(&inst).unwrap();
        assert!(sol.hard_case);
        // sigma = 1, second component -0.1/2, first closes ||w|| = 2; tie broken towards +
        assert_relative_eq!(sol.u[1], -0.05, epsilon = 1e-14);
        assert_relative_eq!(sol.u[0], (4.0f64 - 0.0025).sqrt(), epsilon = 1e-14);
        assert!(sol.min_eig_certificate.abs() <= 1e-12);
        assert!(sol.stationarity_residual <= 1e-12);
    }

    #[test]
    fn zero_gradient_indefinite() {
        let inst = CubicInstance::new(v(&[0.0, 0.0]), m(2, &[1.0, 0.0, 0.0, -2.0]), DMatrix::identity(2, 2), 2.0).unwrap();
        let sol = solve_cubic(&inst).unwrap();
        // minimizer along e_2 with |u| = 2 sigma / L = 2
        assert_relative_eq!(sol.r, 2.0, epsilon = 1e-14);
        assert_relative_eq!(model_value(&inst, &sol.u).unwrap(), -4.0 + 8.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_metric_rejected() {
        let inst = CubicInstance::new(v(&[1.0]), m(1, &[1.0]), m(1, &[-1.0]), 1.0).unwrap();
        assert!(matches!(solve_cubic(&inst), Err(Error::FactorizationFailure)));
    }

    #[test]
    fn invalid_regularization() {
        assert!(CubicInstance::new(v(&[1.0]), m(1, &[1.0]), m(1, &[1.0]), 0.0).is_err());
    }

    #[test]
    fn minimum_value_decreases_with_gradient_scale() {
        let j = m(2, &[-0.5, 0.3, 0.3, 0.8]);
        let h = m(2, &[1.5, 0.2, 0.2, 0.7]);
        let g = v(&[0.4, -0.9]);
        let mut last = f64::INFINITY;
        for c in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let inst = CubicInstance::new(&g * c, j.clone(), h.clone(), 2.0).unwrap();
            let val = model_value(&inst, &solve_cubic(&inst).unwrap().u).unwrap();
            assert!(val <= last);
            last = val;
        }
    }

    fn instance_strategy() -> impl Strategy<Value = CubicInstance> {
        (1usize..=6).prop_flat_map(|p| {
            (
                prop::collection::vec(-2.0f64..2.0, p),
                prop::collection::vec(-2.0f64..2.0, p * p),
                prop::collection::vec(-1.0f64..1.0, p * p),
                0.05f64..10.0,
            )
                .prop_map(move |(g, j, b, l)| {
                    let j = DMatrix::from_row_slice(p, p, &j);
                    let b = DMatrix::from_row_slice(p, p, &b);
                    let h = &b * b.transpose() + DMatrix::identity(p, p) * 0.1;
                    CubicInstance::new(DVector::from_vec(g), symmetrize(&j), h, l).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn certified_solutions_beat_random_points(inst in instance_strategy(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let sol = solve_cubic(&inst).unwrap();
            let tol = 1e-9 * (1.0 + inst.g.norm());
            prop_assert!(sol.stationarity_residual <= tol, "residual {}", sol.stationarity_residual);
            prop_assert!(sol.min_eig_certificate >= -1e-8);
            let best = model_value(&inst, &sol.u).unwrap();
            let c = inst.h.clone().cholesky().unwrap().l();
            let radius = 2.0 * sol.r + 1.0;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = inst.dim();
            for _ in 0..1000 {
                let dir = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-1.0..1.0)));
                let w = dir.normalize() * (radius * rng.random::<f64>());
                let u = c.transpose().solve_upper_triangular(&w).unwrap();
                prop_assert!(best <= model_value(&inst, &u).unwrap() + 1e-12);
            }
        }

        #[test]
        fn hard_case_instances_are_certified(p in 2usize..=5, l in 0.1f64..5.0, shift in 0.1f64..3.0, gs in prop::collection::vec(-0.01f64..0.01, 5)) {
            // J = diag(-shift, positive...), g orthogonal to e_0 and small
            let mut j = DMatrix::zeros(p, p);
            j[(0, 0)] = -shift;
            for i in 1..p {
                j[(i, i)] = i as f64;
            }
            let mut g = DVector::zeros(p);
            for i in 1..p {
                g[i] = gs[i - 1];
            }
            let inst = CubicInstance::new(g, j, DMatrix::identity(p, p), l).unwrap();
            let sol = solve_cubic(&inst).unwrap();
            prop_assert!(sol.min_eig_certificate >= -1e-8);
            prop_assert!(sol.stationarity_residual <= 1e-9 * (1.0 + inst.g.norm()));
        }
    }
}
