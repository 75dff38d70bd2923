//! Small random problems with every block populated, for derivative and
//! invariance checks.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::normalize_rows;
use crate::model::{FeatureUniverse, LabeledPair, ModelState, PriorMatrix, RelationalPairSet, SourceSet};
use crate::rng::{substream, tag};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct RandomProblem<T: Real> {
    pub universe: FeatureUniverse<T>,
    pub state: ModelState<T>,
    pub priors: PriorMatrix<T>,
    pub pairs: RelationalPairSet,
}

fn gaussian<T: Real, R: Rng>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> DMatrix<T> {
    DMatrix::from_fn(rows, cols, |_, _| T::lit(sd * rng.sample::<f64, _>(StandardNormal)))
}

/// Random instance: source 0 covers every feature, later sources a random
/// subset; priors mix one-hot, sparse and dense rows; `3n` pairs per channel
/// with random labels.
pub fn random_problem<T: Real>(n: usize, k: usize, r: usize, source_dims: &[usize], seed: u64) -> Result<RandomProblem<T>> {
    let mut rng = substream(seed, tag::REPLICATION, 0);
    let mut v = gaussian::<T, _>(n, r, 1.0, &mut rng);
    normalize_rows(&mut v);
    let mut mu = gaussian::<T, _>(k, r, 1.0, &mut rng);
    normalize_rows(&mut mu);
    let w: Vec<DMatrix<T>> = source_dims.iter().map(|&d| gaussian(d, r, 1.0, &mut rng)).collect();

    let mut sources = Vec::with_capacity(source_dims.len());
    for (l, wl) in w.iter().enumerate() {
        let ids: Vec<usize> = if l == 0 {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            let mut keep = all[..n.div_ceil(2).max(1)].to_vec();
            keep.sort_unstable();
            keep
        };
        let mut u = DMatrix::from_fn(ids.len(), wl.nrows(), |_, _| T::zero());
        for (row, &id) in ids.iter().enumerate() {
            let fitted = wl * v.row(id).transpose();
            for c in 0..wl.nrows() {
                u[(row, c)] = fitted[c] + T::lit(0.3 * rng.sample::<f64, _>(StandardNormal));
            }
        }
        normalize_rows(&mut u);
        sources.push(SourceSet::new(l, ids, u)?);
    }
    let universe = FeatureUniverse::new(n, sources)?;

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut clusters: Vec<usize> = (0..k).collect();
        clusters.shuffle(&mut rng);
        let size = match i % 3 {
            0 => 1,
            1 => k.min(2 + rng.random_range(0..2)),
            _ => k,
        };
        let raw: Vec<f64> = (0..size).map(|_| 0.2 + rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        rows.push(clusters[..size].iter().zip(&raw).map(|(&c, &p)| (c, T::lit(p / total))).collect());
    }
    let priors = PriorMatrix::new(k, rows)?;

    let mut draw_pairs = |count: usize| {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(count);
        while out.len() < count.min(n * (n - 1) / 2) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j && seen.insert((i.min(j), i.max(j))) {
                out.push(LabeledPair::new(i, j, rng.random::<bool>()));
            }
        }
        out
    };
    let sim = draw_pairs(3 * n);
    let rel = draw_pairs(3 * n);
    let pairs = RelationalPairSet::new(n, sim, rel)?;

    let mut rng = substream(seed, tag::REPLICATION, 1);
    let a = gaussian::<T, _>(r, r, 0.5, &mut rng);
    let state = ModelState {
        v,
        w,
        mu,
        kappa: T::lit(1.0 + 19.0 * rng.random::<f64>()),
        beta1: T::lit(rng.sample::<f64, _>(StandardNormal)),
        beta2: T::lit(1.0 + rng.random::<f64>() * 2.0),
        beta3: T::lit(rng.sample::<f64, _>(StandardNormal)),
        rel: &a + a.transpose(),
        z: (0..n).map(|i| priors.support(i)[0].0).collect(),
    };
    Ok(RandomProblem {
        universe,
        state,
        priors,
        pairs,
    })
}
