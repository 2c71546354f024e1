//! Linear equality constraints `A x = b`, an orthonormal basis of `ker(A)`
//! and the reduced solvers built on it.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_with_jitter, congruence, max_abs};

/// Dense equality constraint `A x = b` with `A` of size `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    a: DMatrix<f64>,
    b: DVector<f64>,
    rank_tol: f64,
}

impl AffineConstraint {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        let rank_tol = 1e-10 * a.nrows().max(a.ncols()) as f64 * max_abs(&a);
        Ok(Self { a, b, rank_tol })
    }

    /// No equality constraints in dimension `n` (`m = 0`).
    pub fn unconstrained(n: usize) -> Self {
        Self { a: DMatrix::zeros(0, n), b: DVector::zeros(0), rank_tol: 0.0 }
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// `||A x - b||`.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        if self.a.nrows() == 0 {
            return 0.0;
        }
        (&self.a * x - &self.b).norm()
    }

    /// Feasibility within `tol * (1 + ||b||)`.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.residual(x) <= tol * (1.0 + self.b.norm())
    }
}

/// Orthonormal basis `Z` of `ker(A)` plus the complementary range factorization
/// `A^T P = Q1 R` used to recover multipliers.
#[derive(Debug, Clone)]
pub struct NullBasis {
    constraint: AffineConstraint,
    z: DMatrix<f64>,
    range_q: DMatrix<f64>,
    range_r: DMatrix<f64>,
    perm: Vec<usize>,
}

impl NullBasis {
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn constraint(&self) -> &AffineConstraint {
        &self.constraint
    }

    /// Kernel dimension `p = n - m`.
    pub fn kernel_dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// Least-squares solution of `A^T y = r`; exact when `r` lies in range(A^T).
    pub fn multiplier(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), r.len())?;
        let m = self.range_r.nrows();
        if m == 0 {
            return Ok(DVector::zeros(0));
        }
        let rhs = self.range_q.transpose() * r;
        let t = self
            .range_r
            .solve_upper_triangular(&rhs)
            .ok_or(Error::IllConditionedKkt)?;
        let mut y = DVector::zeros(m);
        for (j, &p) in self.perm.iter().enumerate() {
            y[p] = t[j];
        }
        Ok(y)
    }
}

/// Householder QR of `A^T` with column pivoting; the trailing `n - m` columns of
/// the full orthogonal factor span `ker(A)`.
pub fn build_null_basis(c: &AffineConstraint) -> Result<NullBasis> {
    let m = c.rows();
    let n = c.dim();
    if m > n {
        return Err(Error::RankDeficient { rank: n, rows: m });
    }
    let mut work = c.a.transpose(); // n x m
    let mut perm: Vec<usize> = (0..m).collect();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut taus: Vec<f64> = Vec::with_capacity(m);

    for j in 0..m {
        // pivot: remaining column of largest norm below row j
        let mut best = j;
        let mut best_norm = -1.0;
        for col in j..m {
            let norm = work.view((j, col), (n - j, 1)).norm();
            if norm > best_norm {
                best_norm = norm;
                best = col;
            }
        }
        if best != j {
            work.swap_columns(j, best);
            perm.swap(j, best);
        }
        if !(best_norm > c.rank_tol) {
            return Err(Error::RankDeficient { rank: j, rows: m });
        }
        let x = DVector::from_iterator(n - j, (j..n).map(|i| work[(i, j)]));
        let alpha = if x[0] >= 0.0 { -best_norm } else { best_norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        let tau = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        // apply I - tau v v^T to trailing block
        for col in j..m {
            reflect_column(&mut work, j, col, &v, tau);
        }
        reflectors.push(v);
        taus.push(tau);
    }

    // Full orthogonal factor Q = H_0 H_1 ... H_{m-1}
    let mut q = DMatrix::<f64>::identity(n, n);
    for j in (0..m).rev() {
        let v = &reflectors[j];
        let tau = taus[j];
        for col in 0..n {
            reflect_column(&mut q, j, col, v, tau);
        }
    }
    let range_r = work.view((0, 0), (m, m)).upper_triangle();
    let range_q = q.columns(0, m).into_owned();
    let z = q.columns(m, n - m).into_owned();
    Ok(NullBasis { constraint: c.clone(), z, range_q, range_r, perm })
}

/// Applies `I - tau v v^T` to rows `start..` of one column.
fn reflect_column(m: &mut DMatrix<f64>, start: usize, col: usize, v: &DVector<f64>, tau: f64) {
    let s: f64 = tau * (0..v.len()).map(|i| v[i] * m[(start + i, col)]).sum::<f64>();
    for i in 0..v.len() {
        m[(start + i, col)] -= s * v[i];
    }
}

/// Solves `g + H v - A^T y = 0`, `A v = 0` through the reduced system
/// `(Z^T H Z) u = -Z^T g`, `v = Z u`, then recovers `y` from `A^T y = g + H v`.
pub fn solve_first_order_kkt(
    h: &DMatrix<f64>,
    basis: &NullBasis,
    g: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = basis.dim();
    check_dim(n, g.len())?;
    check_dim(n, h.nrows())?;
    let z = basis.z();
    let v = if z.ncols() == 0 {
        DVector::zeros(n)
    } else {
        let hr = congruence(z, h);
        let gr = z.transpose() * g;
        let chol = cholesky_with_jitter(&hr).ok_or(Error::IllConditionedKkt)?;
        let u = chol.solve(&(-gr));
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::IllConditionedKkt);
        }
        z * u
    };
    let y = basis.multiplier(&(g + h * &v))?;
    Ok((v, y))
}

/// Reduced data `(Z^T grad, Z^T hess_f Z, Z^T H Z)`.
pub fn project_reduced_data(
    basis: &NullBasis,
    grad: &DVector<f64>,
    hess_f: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = basis.dim();
    check_dim(n, grad.len())?;
    check_dim(n, hess_f.nrows())?;
    check_dim(n, hess_f.ncols())?;
    check_dim(n, h.nrows())?;
    check_dim(n, h.ncols())?;
    let z = basis.z();
    Ok((z.transpose() * grad, congruence(z, hess_f), congruence(z, h)))
}
