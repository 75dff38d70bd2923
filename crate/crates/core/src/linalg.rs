//! Dense linear-algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dimension, Result};
use crate::scalar::Real;

/// Rescales every row to unit Euclidean norm.
///
/// Rows with norm below `T::eps()` are left untouched; their indices are returned.
pub fn normalize_rows<T: Real>(m: &mut DMatrix<T>) -> Vec<usize> {
    let mut degenerate = Vec::new();
    for i in 0..m.nrows() {
        let norm = m.row(i).norm();
        if norm > T::eps() {
            let inv = T::one() / norm;
            m.row_mut(i).scale_mut(inv);
        } else {
            degenerate.push(i);
        }
    }
    degenerate
}

/// Largest deviation of any row norm from one.
pub fn max_row_norm_deviation<T: Real>(m: &DMatrix<T>) -> T {
    (0..m.nrows())
        .map(|i| (m.row(i).norm() - T::one()).abs())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Largest absolute asymmetry `|A_ij - A_ji|`.
pub fn max_asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(G + G^T) / 2`.
pub fn symmetrize<T: Real>(g: &DMatrix<T>) -> DMatrix<T> {
    (g + g.transpose()) * T::lit(0.5)
}

/// Row dot product `<a_i, b_j>` between rows of two matrices.
#[inline]
pub fn row_dot<T: Real>(a: &DMatrix<T>, i: usize, b: &DMatrix<T>, j: usize) -> T {
    let mut s = T::zero();
    for c in 0..a.ncols() {
        s += a[(i, c)] * b[(j, c)];
    }
    s
}

/// Truncated SVD: the leading `rank` left singular vectors, singular values and
/// right singular vectors, sorted by decreasing singular value.
pub struct TruncatedSvd<T: Real> {
    pub left: DMatrix<T>,
    pub values: DVector<T>,
    pub right: DMatrix<T>,
}

pub fn truncated_svd<T: Real>(m: &DMatrix<T>, rank: usize) -> TruncatedSvd<T> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let rank = rank.min(s.len());
    let mut left = DMatrix::zeros(m.nrows(), rank);
    let mut right = DMatrix::zeros(m.ncols(), rank);
    let mut values = DVector::zeros(rank);
    for (c, &o) in order.iter().take(rank).enumerate() {
        left.set_column(c, &u.column(o));
        right.set_column(c, &vt.row(o).transpose());
        values[c] = s[o];
    }
    TruncatedSvd {
        left,
        values,
        right,
    }
}

/// Solution of the orthogonal Procrustes problem `min ||s A Q - B||_F` over
/// `Q` with orthonormal rows (`Q Q^T = I`) and an isotropic scale `s >= 0`.
#[derive(Debug, Clone)]
pub struct Procrustes<T: Real> {
    /// `cols(A) x cols(B)` map with orthonormal rows.
    pub map: DMatrix<T>,
    pub scale: T,
}

pub fn orthogonal_procrustes<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<Procrustes<T>> {
    if a.nrows() != b.nrows() {
        return dimension(format!(
            "procrustes needs matching rows, got {} and {}",
            a.nrows(),
            b.nrows()
        ));
    }
    if a.ncols() > b.ncols() {
        return dimension(format!(
            "procrustes map {}x{} cannot have orthonormal rows",
            a.ncols(),
            b.ncols()
        ));
    }
    let cross = a.transpose() * b;
    let svd = cross.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let map = &u * &vt;
    let trace: T = svd.singular_values.iter().copied().sum();
    let denom = a.norm_squared();
    let scale = if denom > T::zero() { trace / denom } else { T::one() };
    Ok(Procrustes { map, scale })
}

/// Symmetric square root of the positive-semidefinite part of a symmetric
/// matrix. Also returns the clipped mass (sum of |negative eigenvalues|).
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, T) {
    let eig = symmetrize(m).symmetric_eigen();
    let mut clipped = T::zero();
    let mut root = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= T::zero() {
            clipped += lambda.abs();
            continue;
        }
        let q = eig.eigenvectors.column(k);
        root += (&q * q.transpose()) * lambda.sqrt();
    }
    (root, clipped)
}

/// Solves `A x = b` for a symmetric positive-definite `A`, falling back to the
/// pseudo-inverse when Cholesky fails.
pub fn spd_solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    match a.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => {
            let pinv = a
                .clone()
                .pseudo_inverse(T::eps() * T::lit(1e3))
                .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()));
            pinv * b
        }
    }
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// sign correction).
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<T> {
    random_orthonormal_columns(dim, dim, rng)
}

/// Random `rows x cols` matrix with orthonormal columns (`rows >= cols`).
pub fn random_orthonormal_columns<T: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<T> {
    assert!(rows >= cols, "need rows >= cols for orthonormal columns");
    let g = DMatrix::<T>::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..cols {
        if r[(c, c)] < T::zero() {
            q.column_mut(c).neg_mut();
        }
    }
    q
}
