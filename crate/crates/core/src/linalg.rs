//! Small dense linear-algebra helpers shared by the solver modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Cholesky factorization with one retry after adding diagonal jitter
/// `1e-12 * trace / n`. Returns `None` if both attempts fail.
pub(crate) fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let n = m.nrows().max(1);
    let jitter = 1e-12 * m.trace().abs() / n as f64;
    if jitter <= 0.0 || !jitter.is_finite() {
        return None;
    }
    let mut shifted = m.clone();
    for i in 0..m.nrows() {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted)
}

/// Symmetric eigendecomposition with eigenvalues in ascending order and each
/// eigenvector oriented so that its largest-magnitude entry is positive.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col
            .iter()
            .copied()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() + 1e-14 { (i, v) } else { best })
            .0;
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Z^T M Z for a symmetric M.
pub(crate) fn congruence(z: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(z.transpose() * m * z))
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

