use std::collections::HashSet;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Error, Result};
use crate::linalg::{max_asymmetry, max_row_norm_deviation};
use crate::scalar::Real;

/// Row-norm tolerance for observed source embeddings.
pub const SOURCE_NORM_TOL: f64 = 1e-6;
/// Row-norm tolerance for latent embeddings and mean directions.
pub const STATE_NORM_TOL: f64 = 1e-8;
/// Symmetry tolerance for the relatedness matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Row-sum tolerance for priors.
pub const PRIOR_SUM_TOL: f64 = 1e-10;

/// One embedding source: a subset of features with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet<T: Real> {
    pub source_id: usize,
    feature_ids: Vec<usize>,
    embeddings: DMatrix<T>,
}

impl<T: Real> SourceSet<T> {
    pub fn new(source_id: usize, feature_ids: Vec<usize>, embeddings: DMatrix<T>) -> Result<Self> {
        if feature_ids.len() != embeddings.nrows() {
            return dimension(format!(
                "source {source_id}: {} feature ids but {} embedding rows",
                feature_ids.len(),
                embeddings.nrows()
            ));
        }
        if feature_ids.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("source {source_id}: feature ids must be strictly increasing"));
        }
        if embeddings.nrows() > 0 {
            let dev = max_row_norm_deviation(&embeddings);
            if !(dev <= T::lit(SOURCE_NORM_TOL)) {
                return domain(format!("source {source_id}: row norms deviate from 1 by {dev}"));
            }
        }
        Ok(Self {
            source_id,
            feature_ids,
            embeddings,
        })
    }

    pub fn feature_ids(&self) -> &[usize] {
        &self.feature_ids
    }

    /// `|S_l| x r_l` embedding matrix.
    pub fn embeddings(&self) -> &DMatrix<T> {
        &self.embeddings
    }

    /// Number of features observed in this source.
    pub fn len(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_ids.is_empty()
    }

    /// Embedding dimension `r_l`.
    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    /// Row of feature `id`, if observed.
    pub fn row_of(&self, id: usize) -> Option<usize> {
        self.feature_ids.binary_search(&id).ok()
    }
}

/// All sources together with the feature coverage bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureUniverse<T: Real> {
    n: usize,
    sources: Vec<SourceSet<T>>,
    /// Per feature: `(source index, row)` for every source observing it.
    memberships: Vec<Vec<(usize, usize)>>,
}

impl<T: Real> FeatureUniverse<T> {
    /// Fails if some feature in `0..n` is observed by no source.
    pub fn new(n: usize, sources: Vec<SourceSet<T>>) -> Result<Self> {
        if sources.is_empty() {
            return domain("at least one source is required");
        }
        let mut memberships = vec![Vec::new(); n];
        for (l, s) in sources.iter().enumerate() {
            for (row, &id) in s.feature_ids().iter().enumerate() {
                if id >= n {
                    return domain(format!("source {}: feature id {id} outside 0..{n}", s.source_id));
                }
                memberships[id].push((l, row));
            }
        }
        if let Some(i) = memberships.iter().position(|m| m.is_empty()) {
            return domain(format!("feature {i} is observed by no source"));
        }
        Ok(Self {
            n,
            sources,
            memberships,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of sources `L`.
    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[SourceSet<T>] {
        &self.sources
    }

    /// Total number of observations `N = sum_l |S_l|`.
    pub fn total_observations(&self) -> usize {
        self.sources.iter().map(|s| s.len()).sum()
    }

    /// `D_i`, the number of sources observing feature `i`.
    pub fn coverage(&self, i: usize) -> usize {
        self.memberships[i].len()
    }

    /// `D_0 = min_i D_i`.
    pub fn min_coverage(&self) -> usize {
        self.memberships.iter().map(|m| m.len()).min().unwrap_or(0)
    }

    /// `(source index, row)` pairs observing feature `i`.
    pub fn memberships(&self, i: usize) -> &[(usize, usize)] {
        &self.memberships[i]
    }
}

/// Sparse row-stochastic prior `pi_ik = P(z_i = k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMatrix<T: Real> {
    k: usize,
    /// Per row, the support `(cluster, prob)` sorted by cluster, probabilities > 0.
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> PriorMatrix<T> {
    /// Zero entries are dropped from the support.
    pub fn new(k: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let mut clean = Vec::with_capacity(rows.len());
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, p)| p != T::zero());
            row.sort_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return domain(format!("prior row {i} lists a cluster twice"));
            }
            let mut sum = T::zero();
            for &(c, p) in &row {
                if c >= k {
                    return domain(format!("prior row {i}: cluster {c} outside 0..{k}"));
                }
                if !(p > T::zero()) || !p.is_finite() {
                    return domain(format!("prior row {i}: invalid probability {p}"));
                }
                sum += p;
            }
            if row.is_empty() {
                return domain(format!("prior row {i} has empty support"));
            }
            if !((sum - T::one()).abs() <= T::lit(PRIOR_SUM_TOL).max(T::eps() * T::count(4 * row.len()))) {
                return domain(format!("prior row {i} sums to {sum}"));
            }
            clean.push(row);
        }
        Ok(Self { k, rows: clean })
    }

    pub fn from_dense(dense: &DMatrix<T>) -> Result<Self> {
        let rows = (0..dense.nrows())
            .map(|i| (0..dense.ncols()).map(|c| (c, dense[(i, c)])).collect())
            .collect();
        Self::new(dense.ncols(), rows)
    }

    pub fn one_hot(k: usize, labels: &[usize]) -> Result<Self> {
        Self::new(k, labels.iter().map(|&c| vec![(c, T::one())]).collect())
    }

    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        let p = T::one() / T::count(k);
        Self::new(k, (0..n).map(|_| (0..k).map(|c| (c, p)).collect()).collect())
    }

    /// Number of features.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of clusters.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn support(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn prob(&self, i: usize, c: usize) -> T {
        self.rows[i]
            .binary_search_by_key(&c, |&(k, _)| k)
            .map(|pos| self.rows[i][pos].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn is_one_hot(&self, i: usize) -> bool {
        self.rows[i].len() == 1
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n(), self.k);
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, p) in row {
                m[(i, c)] = p;
            }
        }
        m
    }

    /// True when `pi_{i, tau(k)} = pi_ik` for every entry.
    pub fn is_preserved_by(&self, tau: &[usize]) -> bool {
        tau.len() == self.k
            && self
                .rows
                .iter()
                .enumerate()
                .all(|(i, row)| row.iter().all(|&(c, p)| self.prob(i, tau[c]) == p))
    }
}

/// Relational channel: similarity (synonymy) or relatedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Similarity,
    Relatedness,
}

impl Channel {
    pub fn code(self) -> char {
        match self {
            Channel::Similarity => 'S',
            Channel::Relatedness => 'R',
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" => Ok(Channel::Similarity),
            "R" => Ok(Channel::Relatedness),
            other => domain(format!("unknown channel {other:?}, expected S or R")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub label: bool,
}

impl LabeledPair {
    pub fn new(i: usize, j: usize, label: bool) -> Self {
        Self { i, j, label }
    }

    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

/// Observed labeled pairs for both channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelationalPairSet {
    sim: Vec<LabeledPair>,
    rel: Vec<LabeledPair>,
}

impl RelationalPairSet {
    /// Rejects self-pairs, ids `>= n` and duplicate unordered pairs within a channel.
    pub fn new(n: usize, sim: Vec<LabeledPair>, rel: Vec<LabeledPair>) -> Result<Self> {
        for (name, pairs) in [("similarity", &sim), ("relatedness", &rel)] {
            let mut seen = HashSet::with_capacity(pairs.len());
            for p in pairs {
                if p.i == p.j {
                    return domain(format!("{name} pair ({}, {}) is a self-pair", p.i, p.j));
                }
                if p.i >= n || p.j >= n {
                    return domain(format!("{name} pair ({}, {}) references a feature outside 0..{n}", p.i, p.j));
                }
                if !seen.insert(p.key()) {
                    return domain(format!("duplicate {name} pair ({}, {})", p.i, p.j));
                }
            }
        }
        Ok(Self { sim, rel })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn sim(&self) -> &[LabeledPair] {
        &self.sim
    }

    pub fn rel(&self) -> &[LabeledPair] {
        &self.rel
    }

    pub fn channel(&self, c: Channel) -> &[LabeledPair] {
        match c {
            Channel::Similarity => &self.sim,
            Channel::Relatedness => &self.rel,
        }
    }

    pub fn n_sim(&self) -> usize {
        self.sim.len()
    }

    pub fn n_rel(&self) -> usize {
        self.rel.len()
    }
}

/// Non-negative weights of the vMF, similarity and relatedness losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub w_vmf: f64,
    pub w_sim: f64,
    pub w_rel: f64,
}

impl CompositeWeights {
    pub fn new(w_vmf: f64, w_sim: f64, w_rel: f64) -> Result<Self> {
        let w = Self { w_vmf, w_sim, w_rel };
        w.validate()?;
        Ok(w)
    }

    pub fn zero() -> Self {
        Self {
            w_vmf: 0.0,
            w_sim: 0.0,
            w_rel: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_vmf", self.w_vmf), ("w_sim", self.w_sim), ("w_rel", self.w_rel)] {
            if !(v >= 0.0) || !v.is_finite() {
                return domain(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            w_vmf: 1.0,
            w_sim: 1.0,
            w_rel: 1.0,
        }
    }
}

/// Every estimable parameter of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T: Real> {
    /// `n x r` latent embeddings, unit-norm rows.
    pub v: DMatrix<T>,
    /// One `r_l x r` loading matrix per source.
    pub w: Vec<DMatrix<T>>,
    /// `K x r` mean directions, unit-norm rows.
    pub mu: DMatrix<T>,
    pub kappa: T,
    pub beta1: T,
    pub beta2: T,
    pub beta3: T,
    /// `r x r` symmetric relatedness matrix.
    pub rel: DMatrix<T>,
    pub z: Vec<usize>,
}

impl<T: Real> ModelState<T> {
    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// Latent dimension `r`.
    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn k(&self) -> usize {
        self.mu.nrows()
    }

    /// Checks the geometric constraints and shape consistency.
    pub fn validate(&self) -> Result<()> {
        let r = self.rank();
        if self.mu.ncols() != r || self.rel.nrows() != r || self.rel.ncols() != r {
            return dimension("V, mu and R disagree on the latent dimension");
        }
        if let Some(l) = self.w.iter().position(|w| w.ncols() != r) {
            return dimension(format!("W_{l} has {} columns, expected {r}", self.w[l].ncols()));
        }
        if self.z.len() != self.n() {
            return dimension(format!("{} labels for {} features", self.z.len(), self.n()));
        }
        if self.z.iter().any(|&c| c >= self.k()) {
            return domain("labels must lie in 0..K");
        }
        let tol = T::lit(STATE_NORM_TOL);
        if self.n() > 0 && !(max_row_norm_deviation(&self.v) <= tol) {
            return domain("rows of V are not unit norm");
        }
        if self.k() > 0 && !(max_row_norm_deviation(&self.mu) <= tol) {
            return domain("rows of mu are not unit norm");
        }
        if !(max_asymmetry(&self.rel) <= T::lit(SYMMETRY_TOL)) {
            return domain("R is not symmetric");
        }
        if !(self.kappa >= T::zero()) || !self.kappa.is_finite() {
            return domain(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        Ok(())
    }

    /// Image under a rotation `o` of the latent space and a relabeling `tau`:
    /// `V_i -> O V_i`, `mu_k -> O mu_{tau(k)}`, `W_l -> W_l O^T`,
    /// `R -> O R O^T`, `z_i -> tau^{-1}(z_i)`.
    pub fn transformed(&self, o: &DMatrix<T>, tau: &[usize]) -> Result<Self> {
        let r = self.rank();
        if o.nrows() != r || o.ncols() != r {
            return dimension(format!("rotation must be {r}x{r}"));
        }
        if tau.len() != self.k() {
            return dimension(format!("permutation has length {}, expected {}", tau.len(), self.k()));
        }
        let mut inv = vec![usize::MAX; tau.len()];
        for (k, &t) in tau.iter().enumerate() {
            if t >= tau.len() || inv[t] != usize::MAX {
                return domain("tau is not a permutation");
            }
            inv[t] = k;
        }
        let ot = o.transpose();
        let rotated_mu = &self.mu * &ot;
        let mu = DMatrix::from_fn(self.k(), r, |k, c| rotated_mu[(tau[k], c)]);
        Ok(Self {
            v: &self.v * &ot,
            w: self.w.iter().map(|w| w * &ot).collect(),
            mu,
            kappa: self.kappa,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            rel: o * &self.rel * &ot,
            z: self.z.iter().map(|&c| inv[c]).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_rejects_bad_rows_and_order() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(SourceSet::new(0, vec![0, 1], m.clone()).is_ok());
        assert!(SourceSet::new(0, vec![1, 0], m.clone()).is_err());
        assert!(SourceSet::new(0, vec![0], m.clone()).is_err());
        let bad = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(SourceSet::new(0, vec![0], bad).is_err());
    }

    #[test]
    fn universe_requires_full_coverage() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = SourceSet::new(0, vec![0, 2], m).unwrap();
        assert!(FeatureUniverse::new(3, vec![s.clone()]).is_err());
        let u = FeatureUniverse::<f64>::new(2, vec![SourceSet::new(0, vec![0, 1], DMatrix::identity(2, 2)).unwrap()]).unwrap();
        assert_eq!(u.total_observations(), 2);
        assert_eq!(u.min_coverage(), 1);
    }

    #[test]
    fn prior_validation() {
        assert!(PriorMatrix::<f64>::new(2, vec![vec![(0, 0.5), (1, 0.5)]]).is_ok());
        assert!(PriorMatrix::<f64>::new(2, vec![vec![(0, 0.5)]]).is_err());
        assert!(PriorMatrix::<f64>::new(2, vec![vec![]]).is_err());
        assert!(PriorMatrix::<f64>::new(2, vec![vec![(2, 1.0)]]).is_err());
        let p = PriorMatrix::<f64>::new(3, vec![vec![(2, 0.25), (0, 0.75), (1, 0.0)]]).unwrap();
        assert_eq!(p.support(0), &[(0, 0.75), (2, 0.25)]);
        assert_eq!(p.prob(0, 1), 0.0);
    }

    #[test]
    fn pair_set_rejects_duplicates_and_self_pairs() {
        let ok = RelationalPairSet::new(3, vec![LabeledPair::new(0, 1, true)], vec![LabeledPair::new(1, 0, false)]);
        assert!(ok.is_ok());
        let dup = RelationalPairSet::new(3, vec![LabeledPair::new(0, 1, true), LabeledPair::new(1, 0, false)], vec![]);
        assert!(dup.is_err());
        assert!(RelationalPairSet::new(3, vec![LabeledPair::new(2, 2, true)], vec![]).is_err());
        assert!(RelationalPairSet::new(3, vec![], vec![LabeledPair::new(0, 3, true)]).is_err());
    }

    #[test]
    fn channel_codes_round_trip() {
        for c in [Channel::Similarity, Channel::Relatedness] {
            assert_eq!(c.code().to_string().parse::<Channel>().unwrap(), c);
        }
        assert!("X".parse::<Channel>().is_err());
    }
}
