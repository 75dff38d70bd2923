//! Spherical k-means: Lloyd iterations maximizing total cosine similarity.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{dimension, domain, Result};
use crate::linalg::row_dot;
use crate::rng::{substream, tag};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct SphericalKMeans<T: Real> {
    /// `K x r`, unit-norm rows.
    pub centers: DMatrix<T>,
    pub labels: Vec<usize>,
    /// Total cosine similarity after seeding and after every iteration.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> SphericalKMeans<T> {
    pub fn objective(&self) -> T {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Clusters the unit-norm rows of `points` into `k` groups.
///
/// Seeding is k-means++ on the cosine distance `1 - <x, c>`. A cluster that
/// becomes empty is re-seeded at the point, among clusters of size > 1, with
/// the worst similarity to its own center (lowest index on ties).
pub fn spherical_kmeans<T: Real>(
    points: &DMatrix<T>,
    k: usize,
    rng_seed: u64,
    max_iter: usize,
) -> Result<SphericalKMeans<T>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return domain(format!("need 1 <= K <= n, got K={k}, n={n}"));
    }
    if points.ncols() < 2 {
        return dimension("points must have dimension >= 2");
    }
    let mut centers = seed_centers(points, k, rng_seed);
    let mut labels = assign(points, &centers);
    let mut trace = vec![objective(points, &centers, &labels)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        update_centers(points, &mut centers, &mut labels);
        let next = assign(points, &centers);
        let changed = next != labels;
        labels = next;
        trace.push(objective(points, &centers, &labels));
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(SphericalKMeans {
        centers,
        labels,
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn seed_centers<T: Real>(points: &DMatrix<T>, k: usize, seed: u64) -> DMatrix<T> {
    let n = points.nrows();
    let mut rng = substream(seed, tag::KMEANS, 0);
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut best = vec![f64::NEG_INFINITY; n];
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.max(row_dot(points, i, points, last).as_f64());
        }
        let weights: Vec<f64> = best.iter().map(|&s| (1.0 - s).max(0.0).powi(2)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > u {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave u at the very top of the range
            pick.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // every point coincides with a center: take the lowest unused index
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(pick);
    }
    DMatrix::from_fn(k, points.ncols(), |c, j| points[(chosen[c], j)])
}

/// Nearest center by cosine similarity, lowest index on ties.
fn assign<T: Real>(points: &DMatrix<T>, centers: &DMatrix<T>) -> Vec<usize> {
    let sims = points * centers.transpose();
    (0..points.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..centers.nrows() {
                if sims[(i, c)] > sims[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn objective<T: Real>(points: &DMatrix<T>, centers: &DMatrix<T>, labels: &[usize]) -> T {
    labels.iter().enumerate().map(|(i, &c)| row_dot(points, i, centers, c)).sum()
}

fn update_centers<T: Real>(points: &DMatrix<T>, centers: &mut DMatrix<T>, labels: &mut [usize]) {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut worst: Option<(usize, T)> = None;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] <= 1 {
                continue;
            }
            let s = row_dot(points, i, centers, l);
            if worst.is_none_or(|(_, w)| s < w) {
                worst = Some((i, s));
            }
        }
        if let Some((i, _)) = worst {
            sizes[labels[i]] -= 1;
            labels[i] = c;
            sizes[c] = 1;
        }
    }
    let mut sums = DMatrix::<T>::zeros(k, points.ncols());
    for (i, &l) in labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += points.row(i);
    }
    for c in 0..k {
        let norm = sums.row(c).norm();
        if norm > T::eps() {
            centers.set_row(c, &(sums.row(c) / norm));
        }
    }
}
