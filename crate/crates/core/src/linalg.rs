//! Small dense linear-algebra helpers shared by the structure and law code.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Default tolerance for rank decisions on unit-scale matrices.
pub const RANK_TOL: f64 = 1e-10;

/// Singular values of `m`, empty for degenerate shapes.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank: singular values above `tol * max(1, sigma_max)`.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let scale = sv.iter().copied().fold(1.0_f64, f64::max);
    sv.iter().filter(|&&s| s > tol * scale).count()
}

/// Orthonormal basis (standard inner product) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested u");
    let scale = svd.singular_values.iter().copied().fold(1.0_f64, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol * scale)
        .map(|(i, _)| i)
        .collect();
    select_columns(&u, &keep)
}

/// Orthonormal basis of the orthogonal complement of the span of `basis`
/// (columns assumed orthonormal) inside R^n.
pub fn complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    if basis.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    let sym = (&proj + proj.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let keep: Vec<usize> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(i, _)| i)
        .collect();
    select_columns(&eig.eigenvectors, &keep)
}

/// Orthonormal basis of the kernel of `m` (a `ncols x k` matrix).
pub fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let rows = column_space(&m.transpose(), tol);
    complement(&rows, m.ncols())
}

pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Largest absolute entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cholesky factor of a symmetric positive-definite matrix; `None` otherwise.
/// The zero-size matrix is its own factor.
pub fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    Cholesky::new(m.clone()).map(|c| c.l())
}

/// log det of an SPD matrix through its Cholesky factor (0 for the empty matrix).
pub fn logdet_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    l.clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("cholesky factor has a positive diagonal")
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Least-squares solution for a full-column-rank system.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let normal = a.transpose() * a;
    let rhs = a.transpose() * b;
    match Cholesky::new(normal.clone()) {
        Some(c) => c.solve(&rhs),
        None => normal.pseudo_inverse(1e-14).expect("finite matrix") * rhs,
    }
}
