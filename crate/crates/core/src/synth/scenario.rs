//! Simulation scenarios: cluster structure, latent embeddings, partially
//! overlapping sources, labeled pairs and anchor priors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::directional::spherical_kmeans;
use crate::directional::vmf::WoodSampler;
use crate::error::{domain, Result};
use crate::linalg::{normalize_rows, random_orthonormal_columns, row_dot};
use crate::model::{FeatureUniverse, LabeledPair, ModelState, PriorMatrix, RelationalPairSet, SourceSet};
use crate::rng::{substream, tag};
use crate::scalar::sigmoid;

/// Rows `[start * n, end * n)` of the feature index range, rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub dim: usize,
    pub start: f64,
    pub end: f64,
}

impl SourceSpec {
    pub fn range(&self, n: usize) -> std::ops::Range<usize> {
        let lo = (self.start * n as f64).round() as usize;
        let hi = (self.end * n as f64).round() as usize;
        lo.min(n)..hi.min(n)
    }
}

/// Default coverage of up to four sources: all, first half, middle half,
/// second half.
pub fn default_sources(count: usize, dim: usize) -> Vec<SourceSpec> {
    [(0.0, 1.0), (0.0, 0.5), (0.3, 0.8), (0.5, 1.0)]
        .iter()
        .take(count)
        .map(|&(start, end)| SourceSpec { dim, start, end })
        .collect()
}

/// How observed embeddings are generated from `W_l V_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationModel {
    /// `U_i ~ vMF(W_l V_i / |W_l V_i|, source_kappa)`.
    Vmf,
    /// `U_i = normalize(W_l V_i + noise)` with `W_l` orthonormal columns and
    /// Gaussian noise of the given standard deviation.
    Additive { noise_sd: f64 },
}

/// Observed share of all unordered pairs, by label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFractions {
    pub positive: f64,
    pub negative: f64,
}

impl PairFractions {
    /// Standard splits for 4%, 6% and 8% of all pairs.
    pub fn preset(total: f64) -> Option<Self> {
        let (positive, negative) = match (total * 100.0).round() as i64 {
            4 => (0.015, 0.025),
            6 => (0.025, 0.035),
            8 => (0.035, 0.045),
            _ => return None,
        };
        Some(Self { positive, negative })
    }

    pub fn total(&self) -> f64 {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub clusters: usize,
    pub rank: usize,
    /// Concentration of latent embeddings around their cluster mean.
    pub kappa: f64,
    pub sources: Vec<SourceSpec>,
    /// Concentration of observed embeddings around `W_l V_i`.
    pub source_kappa: f64,
    pub observation: ObservationModel,
    pub w_mean: f64,
    pub w_sd: f64,
    pub mu_mean: f64,
    pub mu_sd: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Diagonal of the true relatedness matrix, used for every entry unless
    /// `rel_diag_values` is given.
    pub rel_diag: f64,
    pub rel_diag_values: Option<Vec<f64>>,
    pub sim: PairFractions,
    pub rel: PairFractions,
    /// Held-out pairs per channel, as a fraction of the observed counts.
    pub heldout_fraction: f64,
    pub anchor_fraction: f64,
    /// Soft priors from a spectral embedding of the similarity graph instead
    /// of uniform rows.
    pub spectral_priors: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let pairs = PairFractions::preset(0.06).expect("preset exists");
        Self {
            n: 1000,
            clusters: 50,
            rank: 6,
            kappa: 150.0,
            sources: default_sources(4, 200),
            source_kappa: 60.0,
            observation: ObservationModel::Vmf,
            w_mean: 0.6,
            w_sd: 1.0,
            mu_mean: 1.0 / 6f64.sqrt(),
            mu_sd: 1.0,
            beta1: -0.125,
            beta2: 5.0,
            beta3: -0.125,
            rel_diag: 5.0,
            rel_diag_values: None,
            sim: pairs,
            rel: pairs,
            heldout_fraction: 0.2,
            anchor_fraction: 0.7,
            spectral_priors: false,
            rng_seed: 0,
        }
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("{name} must lie in [0, 1], got {x}"));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank < 2 {
            return domain(format!("rank must be >= 2, got {}", self.rank));
        }
        if self.clusters < 1 || self.clusters > self.n {
            return domain(format!("clusters must lie in 1..={}, got {}", self.n, self.clusters));
        }
        if self.sources.is_empty() {
            return domain("at least one source is required");
        }
        for (name, x) in [("kappa", self.kappa), ("source_kappa", self.source_kappa)] {
            if !(x >= 0.0) || !x.is_finite() {
                return domain(format!("{name} must be finite and >= 0, got {x}"));
            }
        }
        for (l, s) in self.sources.iter().enumerate() {
            if s.dim < self.rank {
                return domain(format!("source {l}: dimension {} below rank {}", s.dim, self.rank));
            }
            if !(0.0 <= s.start && s.start <= s.end && s.end <= 1.0) {
                return domain(format!("source {l}: range [{}, {}) must satisfy 0 <= start <= end <= 1", s.start, s.end));
            }
        }
        let mut covered = vec![false; self.n];
        for s in &self.sources {
            for i in s.range(self.n) {
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|&c| !c) {
            return domain(format!("feature {i} is covered by no source"));
        }
        if let ObservationModel::Additive { noise_sd } = self.observation {
            if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
                return domain(format!("noise_sd must be finite and >= 0, got {noise_sd}"));
            }
        }
        for (name, f) in [("sim", self.sim), ("rel", self.rel)] {
            check_fraction(&format!("{name}.positive"), f.positive)?;
            check_fraction(&format!("{name}.negative"), f.negative)?;
            check_fraction(&format!("{name} total"), f.total())?;
        }
        check_fraction("heldout_fraction", self.heldout_fraction)?;
        if !(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0) {
            return domain(format!("anchor_fraction must lie in (0, 1], got {}", self.anchor_fraction));
        }
        if let Some(d) = &self.rel_diag_values {
            if d.len() != self.rank {
                return domain(format!("rel_diag_values has {} entries for rank {}", d.len(), self.rank));
            }
        }
        if !(self.w_sd >= 0.0 && self.mu_sd >= 0.0) {
            return domain("standard deviations must be >= 0");
        }
        Ok(())
    }

    /// True relatedness matrix (diagonal).
    pub fn true_rel(&self) -> DMatrix<f64> {
        match &self.rel_diag_values {
            Some(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            None => DMatrix::identity(self.rank, self.rank) * self.rel_diag,
        }
    }
}

/// Generated scenario with every true quantity.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub v: DMatrix<f64>,
    pub mu: DMatrix<f64>,
    pub z: Vec<usize>,
    pub w: Vec<DMatrix<f64>>,
    pub kappa: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rel: DMatrix<f64>,
    pub universe: FeatureUniverse<f64>,
    pub pairs: RelationalPairSet,
    /// Labeled pairs not in `pairs`, built the same way, for scoring.
    pub heldout: RelationalPairSet,
    pub priors: PriorMatrix<f64>,
    pub anchors: Vec<usize>,
    /// Features of non-anchor clusters.
    pub eval_ids: Vec<usize>,
    /// Observed-embedding means that had to be perturbed away from zero.
    pub degenerate_means: usize,
}

impl ScenarioTruth {
    /// The true parameters as a model state.
    pub fn state(&self) -> ModelState<f64> {
        ModelState {
            v: self.v.clone(),
            w: self.w.clone(),
            mu: self.mu.clone(),
            kappa: self.kappa,
            beta1: self.beta1,
            beta2: self.beta2,
            beta3: self.beta3,
            rel: self.rel.clone(),
            z: self.z.clone(),
        }
    }
}

fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, mean: f64, sd: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| mean + sd * rng.sample::<f64, _>(StandardNormal))
}

/// Generates a full scenario, deterministic in `config.rng_seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<ScenarioTruth> {
    config.validate()?;
    let (n, k, r, seed) = (config.n, config.clusters, config.rank, config.rng_seed);

    let mut rng = substream(seed, tag::LABELS, 0);
    let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

    let mut mu = gaussian_matrix(k, r, config.mu_mean, config.mu_sd, &mut substream(seed, tag::CENTERS, 0));
    let mut redraw = 1;
    loop {
        let bad = normalize_rows(&mut mu);
        if bad.is_empty() {
            break;
        }
        let mut rng = substream(seed, tag::CENTERS, redraw);
        for c in bad {
            for j in 0..r {
                mu[(c, j)] = config.mu_mean + config.mu_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        redraw += 1;
    }

    let latent = WoodSampler::new(r, config.kappa);
    let mut v = DMatrix::zeros(n, r);
    for i in 0..n {
        let mean: Vec<f64> = mu.row(z[i]).iter().copied().collect();
        let x = latent.sample_around(&mean, &mut substream(seed, tag::LATENT, i as u64));
        v.set_row(i, &DVector::from_vec(x).transpose());
    }

    let mut w = Vec::with_capacity(config.sources.len());
    let mut sources = Vec::with_capacity(config.sources.len());
    let mut degenerate_means = 0;
    for (l, spec) in config.sources.iter().enumerate() {
        let mut rng = substream(seed, tag::LOADINGS, l as u64);
        let wl = match config.observation {
            ObservationModel::Vmf => gaussian_matrix(spec.dim, r, config.w_mean, config.w_sd, &mut rng),
            ObservationModel::Additive { .. } => random_orthonormal_columns(spec.dim, r, &mut rng),
        };
        let ids: Vec<usize> = spec.range(n).collect();
        let observed = WoodSampler::new(spec.dim, config.source_kappa);
        let mut u = DMatrix::zeros(ids.len(), spec.dim);
        for (row, &i) in ids.iter().enumerate() {
            let index = ((l as u64) << 32) | i as u64;
            let mut rng = substream(seed, tag::OBSERVED, index);
            let mut mean = &wl * v.row(i).transpose();
            let x = match config.observation {
                ObservationModel::Vmf => {
                    let norm = mean.norm();
                    if norm < 1e-12 {
                        degenerate_means += 1;
                        log::warn!("source {l}, feature {i}: W V has zero norm; perturbing");
                        let mut noise = substream(seed, tag::NOISE, index);
                        mean.iter_mut().for_each(|m| *m += 1e-6 * noise.sample::<f64, _>(StandardNormal));
                    }
                    mean.unscale_mut(mean.norm());
                    DVector::from_vec(observed.sample_around(mean.as_slice(), &mut rng))
                }
                ObservationModel::Additive { noise_sd } => {
                    let mut x = mean.map(|m| m + noise_sd * rng.sample::<f64, _>(StandardNormal));
                    x.unscale_mut(x.norm());
                    x
                }
            };
            u.set_row(row, &x.transpose());
        }
        w.push(wl);
        sources.push(SourceSet::new(l, ids, u)?);
    }
    let universe = FeatureUniverse::new(n, sources)?;

    let rel = config.true_rel();
    let mut truth = ScenarioTruth {
        v,
        mu,
        z,
        w,
        kappa: config.kappa,
        beta1: config.beta1,
        beta2: config.beta2,
        beta3: config.beta3,
        rel,
        universe,
        pairs: RelationalPairSet::empty(),
        heldout: RelationalPairSet::empty(),
        priors: PriorMatrix::uniform(n, k)?,
        anchors: Vec::new(),
        eval_ids: Vec::new(),
        degenerate_means,
    };
    let pairs = generate_relational_pairs(&truth, config)?;
    truth.pairs = pairs.observed;
    truth.heldout = pairs.heldout;
    let spectral = config.spectral_priors.then(|| truth.pairs.sim());
    let anchor = build_anchor_priors(&truth.z, k, config.anchor_fraction, seed, spectral)?;
    truth.priors = anchor.priors;
    truth.anchors = anchor.anchors;
    truth.eval_ids = anchor.eval_ids;
    Ok(truth)
}

/// Observed and held-out pairs of both channels.
#[derive(Debug, Clone)]
pub struct GeneratedPairs {
    pub observed: RelationalPairSet,
    pub heldout: RelationalPairSet,
}

/// Labels every unordered pair by the true logistic models, then keeps a
/// random subset of positives and the negatives with the largest cosine
/// similarity in the first source ("hard negatives").
///
/// Positives are kept as a prefix of one seeded shuffle and negatives as a
/// prefix of the cosine ranking, so the observed sets are nested across
/// fractions for a fixed seed. Held-out pairs continue both prefixes.
pub fn generate_relational_pairs(truth: &ScenarioTruth, config: &ScenarioConfig) -> Result<GeneratedPairs> {
    let n = truth.v.nrows();
    let first = &truth.universe.sources()[0];
    let rows: Vec<Option<usize>> = (0..n).map(|i| first.row_of(i)).collect();
    let cosine = |i: usize, j: usize| match (rows[i], rows[j]) {
        (Some(a), Some(b)) => Some(row_dot(first.embeddings(), a, first.embeddings(), b)),
        _ => None,
    };
    let gram_mu = &truth.mu * truth.mu.transpose();
    let vr = &truth.v * &truth.rel;
    let sim = channel_pairs(
        n,
        |i, j| truth.beta1 + truth.beta2 * gram_mu[(truth.z[i], truth.z[j])],
        &cosine,
        config.sim,
        config.heldout_fraction,
        (config.rng_seed, tag::SIM_LABELS, tag::SIM_KEEP),
        "similarity",
    );
    let rel = channel_pairs(
        n,
        |i, j| truth.beta3 + row_dot(&vr, i, &truth.v, j),
        &cosine,
        config.rel,
        config.heldout_fraction,
        (config.rng_seed, tag::REL_LABELS, tag::REL_KEEP),
        "relatedness",
    );
    Ok(GeneratedPairs {
        observed: RelationalPairSet::new(n, sim.0, rel.0)?,
        heldout: RelationalPairSet::new(n, sim.1, rel.1)?,
    })
}

fn channel_pairs(
    n: usize,
    logit: impl Fn(usize, usize) -> f64,
    cosine: &impl Fn(usize, usize) -> Option<f64>,
    fractions: PairFractions,
    heldout_fraction: f64,
    (seed, label_tag, keep_tag): (u64, u64, u64),
    name: &str,
) -> (Vec<LabeledPair>, Vec<LabeledPair>) {
    let total = n * n.saturating_sub(1) / 2;
    let mut rng = substream(seed, label_tag, 0);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < sigmoid(logit(i, j)) {
                positives.push((i, j));
            } else if let Some(c) = cosine(i, j) {
                negatives.push((c, i, j));
            }
        }
    }
    positives.shuffle(&mut substream(seed, keep_tag, 0));
    // stable sort keeps pair order among equal cosines
    negatives.sort_by(|a, b| b.0.total_cmp(&a.0));

    let take = |want: usize, have: usize, what: &str| {
        if want > have {
            log::warn!("{name}: {want} {what} requested, only {have} available");
        }
        want.min(have)
    };
    let n_pos = take((fractions.positive * total as f64).round() as usize, positives.len(), "positives");
    let n_neg = take((fractions.negative * total as f64).round() as usize, negatives.len(), "negatives");
    let h_pos = ((heldout_fraction * n_pos as f64).round() as usize).min(positives.len() - n_pos);
    let h_neg = ((heldout_fraction * n_neg as f64).round() as usize).min(negatives.len() - n_neg);

    let assemble = |pos: &[(usize, usize)], neg: &[(f64, usize, usize)]| {
        let mut out: Vec<LabeledPair> = pos
            .iter()
            .map(|&(i, j)| LabeledPair::new(i, j, true))
            .chain(neg.iter().map(|&(_, i, j)| LabeledPair::new(i, j, false)))
            .collect();
        out.sort_by_key(|p| (p.i, p.j));
        out
    };
    (
        assemble(&positives[..n_pos], &negatives[..n_neg]),
        assemble(&positives[n_pos..n_pos + h_pos], &negatives[n_neg..n_neg + h_neg]),
    )
}

/// Priors with a random share of clusters as anchors.
#[derive(Debug, Clone)]
pub struct AnchorPriors {
    pub priors: PriorMatrix<f64>,
    /// Anchor cluster ids, increasing.
    pub anchors: Vec<usize>,
    /// Features outside anchor clusters, increasing.
    pub eval_ids: Vec<usize>,
}

/// Marks `round(anchor_fraction * K)` random clusters as anchors. Their
/// members get one-hot priors at the true cluster; all other features get
/// soft rows over the non-anchor clusters, uniform by default or from a
/// spectral embedding of the positive pairs in `graph`.
pub fn build_anchor_priors(
    z: &[usize],
    k: usize,
    anchor_fraction: f64,
    rng_seed: u64,
    graph: Option<&[LabeledPair]>,
) -> Result<AnchorPriors> {
    if !(anchor_fraction > 0.0 && anchor_fraction <= 1.0) {
        return domain(format!("anchor_fraction must lie in (0, 1], got {anchor_fraction}"));
    }
    if let Some(&c) = z.iter().find(|&&c| c >= k) {
        return domain(format!("label {c} outside 0..{k}"));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut substream(rng_seed, tag::ANCHORS, 0));
    let count = ((anchor_fraction * k as f64).round() as usize).clamp(1, k);
    let mut anchors = order[..count].to_vec();
    anchors.sort_unstable();
    let mut is_anchor = vec![false; k];
    anchors.iter().for_each(|&c| is_anchor[c] = true);
    let free: Vec<usize> = (0..k).filter(|&c| !is_anchor[c]).collect();
    let eval_ids: Vec<usize> = (0..z.len()).filter(|&i| !is_anchor[z[i]]).collect();
    if free.is_empty() {
        log::warn!("every cluster is an anchor; the evaluation set is empty");
    }

    let soft: Vec<Vec<(usize, f64)>> = match graph {
        Some(pairs) if !free.is_empty() && !eval_ids.is_empty() => {
            spectral_rows(&eval_ids, &free, pairs, rng_seed)?
        }
        _ => {
            let p = 1.0 / free.len().max(1) as f64;
            vec![free.iter().map(|&c| (c, p)).collect(); eval_ids.len()]
        }
    };
    let mut rows: Vec<Vec<(usize, f64)>> = z.iter().map(|&c| vec![(c, 1.0)]).collect();
    for (row, &i) in soft.into_iter().zip(&eval_ids) {
        rows[i] = row;
    }
    Ok(AnchorPriors {
        priors: PriorMatrix::new(k, rows)?,
        anchors,
        eval_ids,
    })
}

/// Softmax of cosine similarity to spherical k-means centers of the leading
/// eigenvectors of the normalized positive-pair graph on `nodes`.
fn spectral_rows(nodes: &[usize], free: &[usize], pairs: &[LabeledPair], seed: u64) -> Result<Vec<Vec<(usize, f64)>>> {
    let m = nodes.len();
    let kf = free.len();
    if m < kf {
        log::warn!("{m} non-anchor features for {kf} clusters; using uniform priors");
        let p = 1.0 / kf as f64;
        return Ok(vec![free.iter().map(|&c| (c, p)).collect(); m]);
    }
    let mut local = std::collections::HashMap::with_capacity(m);
    for (a, &i) in nodes.iter().enumerate() {
        local.insert(i, a);
    }
    let mut adj = DMatrix::<f64>::identity(m, m);
    for p in pairs.iter().filter(|p| p.label) {
        if let (Some(&a), Some(&b)) = (local.get(&p.i), local.get(&p.j)) {
            adj[(a, b)] = 1.0;
            adj[(b, a)] = 1.0;
        }
    }
    let deg: Vec<f64> = adj.row_iter().map(|r| r.sum().sqrt()).collect();
    let norm = DMatrix::from_fn(m, m, |a, b| adj[(a, b)] / (deg[a] * deg[b]));
    let eig = SymmetricEigen::new(norm);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let dims = kf.max(2).min(m);
    let mut emb = DMatrix::from_fn(m, dims, |a, c| eig.eigenvectors[(a, idx[c])]);
    for a in normalize_rows(&mut emb) {
        emb[(a, 0)] = 1.0;
    }
    let km = spherical_kmeans(&emb, kf, crate::rng::derive_seed(seed, tag::SPECTRAL), 100)?;
    Ok((0..m)
        .map(|a| {
            let s: Vec<f64> = (0..kf).map(|c| row_dot(&emb, a, &km.centers, c)).collect();
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - top).exp()).collect();
            let total: f64 = e.iter().sum();
            free.iter().zip(&e).map(|(&c, &x)| (c, x / total)).collect()
        })
        .collect())
}
