//! Alignment of estimates to ground truth up to rotation and relabeling.

use nalgebra::DMatrix;

use crate::assignment::max_score_assignment;
use crate::error::{dimension, Result};
use crate::scalar::Real;

/// Rotation-invariant subspace accuracy `1 / (1 + RelErr)`, where
/// `RelErr = |A A^T - B B^T|_F / |B B^T|_F`.
///
/// Both Gram matrices are reduced through a thin QR of `[A B]`, which keeps
/// the difference small when the two subspaces agree.
pub fn rel_acc<T: Real>(est: &DMatrix<T>, truth: &DMatrix<T>) -> Result<f64> {
    Ok(1.0 / (1.0 + rel_err(est, truth)?))
}

pub fn rel_err<T: Real>(est: &DMatrix<T>, truth: &DMatrix<T>) -> Result<f64> {
    if est.shape() != truth.shape() {
        return dimension(format!("estimate is {:?}, truth is {:?}", est.shape(), truth.shape()));
    }
    let a = est.map(|x| x.as_f64());
    let b = truth.map(|x| x.as_f64());
    let r = a.ncols();
    let stacked = DMatrix::from_fn(a.nrows(), 2 * r, |i, j| if j < r { a[(i, j)] } else { b[(i, j - r)] });
    let tri = if stacked.nrows() >= stacked.ncols() {
        stacked.qr().r()
    } else {
        // wide: the Gram matrices are already small enough to use directly
        stacked
    };
    let ra = tri.columns(0, r);
    let rb = tri.columns(r, r);
    let diff = &ra * ra.transpose() - &rb * rb.transpose();
    let base = (&rb * rb.transpose()).norm();
    if base == 0.0 {
        return crate::error::domain("truth has a zero Gram matrix");
    }
    Ok(diff.norm() / base)
}

/// Orthogonal alignment of an estimate onto the truth.
#[derive(Debug, Clone)]
pub struct RotationAlignment<T: Real> {
    /// `r x r` orthogonal `O` minimizing `|est O - truth|_F`.
    pub map: DMatrix<T>,
    pub aligned: DMatrix<T>,
    /// `|est_i O - truth_i|` per row.
    pub row_errors: Vec<T>,
    /// Mean of the squared row errors.
    pub mean_square: T,
}

pub fn procrustes_align<T: Real>(est: &DMatrix<T>, truth: &DMatrix<T>) -> Result<RotationAlignment<T>> {
    if est.shape() != truth.shape() {
        return dimension(format!("estimate is {:?}, truth is {:?}", est.shape(), truth.shape()));
    }
    let svd = (est.transpose() * truth).svd(true, true);
    let map = svd.u.expect("requested") * svd.v_t.expect("requested");
    let aligned = est * &map;
    let row_errors: Vec<T> = (0..est.nrows()).map(|i| (aligned.row(i) - truth.row(i)).norm()).collect();
    let mean_square = if row_errors.is_empty() {
        T::zero()
    } else {
        row_errors.iter().map(|e| *e * *e).sum::<T>() / T::count(row_errors.len())
    };
    Ok(RotationAlignment {
        map,
        aligned,
        row_errors,
        mean_square,
    })
}

/// Matching of estimated cluster means to true ones.
#[derive(Debug, Clone)]
pub struct PermutationAlignment<T: Real> {
    /// `perm[k]` is the estimated cluster matched to true cluster `k`.
    pub perm: Vec<usize>,
    /// Estimated means reordered (and rotated, when a map was given).
    pub aligned: DMatrix<T>,
    /// `(1/K) sum_k |aligned_k - truth_k|^2`.
    pub mean_square: T,
}

/// Hungarian matching maximizing `sum_k <est_perm(k), truth_k>` after
/// applying `rotation` (if any) to the estimates.
pub fn permutation_align<T: Real>(
    est_mu: &DMatrix<T>,
    true_mu: &DMatrix<T>,
    rotation: Option<&DMatrix<T>>,
) -> Result<PermutationAlignment<T>> {
    if est_mu.shape() != true_mu.shape() {
        return dimension(format!("estimate is {:?}, truth is {:?}", est_mu.shape(), true_mu.shape()));
    }
    let rotated = match rotation {
        Some(o) => est_mu * o,
        None => est_mu.clone(),
    };
    let k = true_mu.nrows();
    let score = DMatrix::from_fn(k, k, |t, e| true_mu.row(t).dot(&rotated.row(e)).as_f64());
    let perm = max_score_assignment(&score)?;
    let aligned = DMatrix::from_fn(k, true_mu.ncols(), |t, c| rotated[(perm[t], c)]);
    let mean_square = if k == 0 {
        T::zero()
    } else {
        (&aligned - true_mu).norm_squared() / T::count(k)
    };
    Ok(PermutationAlignment {
        perm,
        aligned,
        mean_square,
    })
}
