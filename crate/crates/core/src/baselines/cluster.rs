//! Euclidean k-means, average-linkage agglomerative clustering and cluster
//! centers.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{domain, Result};
use crate::rng::{substream, tag};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct KMeansFit<T: Real> {
    pub labels: Vec<usize>,
    pub centers: DMatrix<T>,
    /// Within-cluster sum of squared distances.
    pub inertia: T,
}

fn sq_dist<T: Real>(a: &DMatrix<T>, i: usize, b: &DMatrix<T>, j: usize) -> T {
    (a.row(i) - b.row(j)).norm_squared()
}

/// Lloyd's algorithm with k-means++ seeding, best of `n_init` seeded restarts.
pub fn kmeans_euclidean<T: Real>(points: &DMatrix<T>, k: usize, seed: u64, n_init: usize) -> Result<KMeansFit<T>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return domain(format!("need 1 <= K <= n, got K={k}, n={n}"));
    }
    let mut best: Option<KMeansFit<T>> = None;
    for run in 0..n_init.max(1) {
        let fit = lloyd(points, k, &mut substream(seed, tag::KMEANS, run as u64), 300);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}

fn lloyd<T: Real, R: Rng>(points: &DMatrix<T>, k: usize, rng: &mut R, max_iter: usize) -> KMeansFit<T> {
    let (n, d) = points.shape();
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut nearest: Vec<T> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().map(|x| x.as_f64()).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, x) in nearest.iter().enumerate() {
                target -= x.as_f64();
                if target < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(points, i, &centers, c));
        }
    }
    let assign = |centers: &DMatrix<T>| -> (Vec<usize>, Vec<T>) {
        (0..n)
            .map(|i| {
                let mut best = (0, sq_dist(points, i, centers, 0));
                for c in 1..k {
                    let dd = sq_dist(points, i, centers, c);
                    if dd < best.1 {
                        best = (c, dd);
                    }
                }
                best
            })
            .unzip()
    };
    let (mut labels, mut dists) = assign(&centers);
    for _ in 0..max_iter {
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(labels[i]);
            row += points.row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.set_row(c, &(sums.row(c) / T::count(counts[c])));
            } else {
                // empty cluster: move it to the point farthest from its center
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .fold(None, |acc: Option<usize>, i| match acc {
                        Some(j) if dists[j] >= dists[i] => Some(j),
                        _ => Some(i),
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    dists[i] = T::zero();
                    centers.set_row(c, &points.row(i));
                }
            }
        }
        let (next, next_d) = assign(&centers);
        let changed = next != labels;
        labels = next;
        dists = next_d;
        if !changed {
            break;
        }
    }
    let inertia = dists.iter().copied().sum();
    KMeansFit {
        labels,
        centers,
        inertia,
    }
}

/// Average-linkage agglomerative clustering on cosine distance, cut at `k`
/// clusters. Labels are numbered by first appearance.
///
/// Uses the nearest-neighbor chain; merges are replayed in order of height
/// (ties by the order found) to cut the tree.
pub fn hclust<T: Real>(points: &DMatrix<T>, k: usize) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return domain(format!("need 1 <= K <= n, got K={k}, n={n}"));
    }
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = points.row(i).iter().map(|x| x.as_f64()).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|x| x / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
            dist[i * n + j] = 1.0 - c;
            dist[j * n + i] = 1.0 - c;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges: Vec<(f64, usize, usize)> = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        let a = *chain.last().unwrap();
        let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
        let mut best = prev.map(|p| (p, dist[a * n + p]));
        for b in 0..n {
            if !active[b] || b == a {
                continue;
            }
            let d = dist[a * n + b];
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((b, d));
            }
        }
        let (b, d) = best.expect("another active cluster");
        if Some(b) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = (a.min(b), a.max(b));
            merges.push((d, keep, gone));
            let (sa, sb) = (size[keep] as f64, size[gone] as f64);
            for c in 0..n {
                if active[c] && c != keep && c != gone {
                    let nd = (sa * dist[keep * n + c] + sb * dist[gone * n + c]) / (sa + sb);
                    dist[keep * n + c] = nd;
                    dist[c * n + keep] = nd;
                }
            }
            size[keep] += size[gone];
            active[gone] = false;
            remaining -= 1;
        } else {
            chain.push(b);
        }
    }
    let mut order: Vec<usize> = (0..merges.len()).collect();
    order.sort_by(|&x, &y| merges[x].0.total_cmp(&merges[y].0).then(x.cmp(&y)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // merges refer to cluster representatives; replaying by height keeps them valid
    // because average linkage has no inversions
    for &m in order.iter().take(n - k) {
        let (_, a, b) = merges[m];
        let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
        parent[ra.max(rb)] = ra.min(rb);
    }
    let mut names = std::collections::HashMap::new();
    Ok((0..n)
        .map(|i| {
            let r = root(&mut parent, i);
            let next = names.len();
            *names.entry(r).or_insert(next)
        })
        .collect())
}

/// Normalized within-cluster means.
#[derive(Debug, Clone)]
pub struct ClusterCenters<T: Real> {
    /// `K x r`; rows of empty clusters are zero.
    pub centers: DMatrix<T>,
    pub empty: Vec<usize>,
    /// Clusters whose mean had norm below `1e-8` and use their first member.
    pub degenerate: Vec<usize>,
}

pub fn cluster_centers<T: Real>(points: &DMatrix<T>, labels: &[usize], k: usize) -> Result<ClusterCenters<T>> {
    if labels.len() != points.nrows() {
        return domain(format!("{} labels for {} points", labels.len(), points.nrows()));
    }
    if let Some(&c) = labels.iter().find(|&&c| c >= k) {
        return domain(format!("label {c} outside 0..{k}"));
    }
    let mut sums = DMatrix::zeros(k, points.ncols());
    let mut first = vec![None; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += points.row(i);
        counts[c] += 1;
        first[c].get_or_insert(i);
    }
    let mut empty = Vec::new();
    let mut degenerate = Vec::new();
    for c in 0..k {
        let Some(f) = first[c] else {
            log::warn!("cluster {c} is empty and has no center");
            empty.push(c);
            continue;
        };
        let mean = sums.row(c) / T::count(counts[c]);
        let norm = mean.norm();
        if norm < T::lit(1e-8) {
            degenerate.push(c);
            let p = points.row(f);
            sums.set_row(c, &(p / p.norm()));
        } else {
            sums.set_row(c, &(mean / norm));
        }
    }
    Ok(ClusterCenters {
        centers: sums,
        empty,
        degenerate,
    })
}
