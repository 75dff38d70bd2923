//! The four loss components and their weighted sum.

use nalgebra::DMatrix;

use super::types::{CompositeWeights, FeatureUniverse, LabeledPair, ModelState, PriorMatrix, RelationalPairSet};
use crate::directional::log_normalizer;
use crate::error::{dimension, domain, Error, Result};
use crate::linalg::row_dot;
use crate::scalar::{log_sum_exp, softplus, sigmoid, Real};

/// Probabilities inside logarithms are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-12;

/// `log P(label | logit s)` with clamping, and its derivative in `s`
/// (zero where the clamp is active).
pub fn log_bernoulli<T: Real>(s: T, label: bool) -> (T, T) {
    let floor = T::lit(PROB_FLOOR.ln());
    let ceil = T::lit((-PROB_FLOOR).ln_1p());
    let (lp, d) = if label {
        (-softplus(-s), T::one() - sigmoid(s))
    } else {
        (-softplus(s), -sigmoid(s))
    };
    if lp < floor {
        (floor, T::zero())
    } else if lp > ceil {
        (ceil, T::zero())
    } else {
        (lp, d)
    }
}

fn check_latent<T: Real>(v: &DMatrix<T>, mu: &DMatrix<T>, priors: &PriorMatrix<T>) -> Result<()> {
    if v.ncols() != mu.ncols() {
        return dimension(format!("V has {} columns, mu has {}", v.ncols(), mu.ncols()));
    }
    if priors.n() != v.nrows() || priors.k() != mu.nrows() {
        return dimension(format!(
            "priors are {}x{}, expected {}x{}",
            priors.n(),
            priors.k(),
            v.nrows(),
            mu.nrows()
        ));
    }
    Ok(())
}

/// `(1/N) sum_l sum_{i in S_l} (1/r_l) ||U_i^(l) - W_l V_i||^2`.
pub fn loss_lr<T: Real>(universe: &FeatureUniverse<T>, v: &DMatrix<T>, w: &[DMatrix<T>]) -> Result<T> {
    check_factor_dims(universe, v, w)?;
    let mut total = T::zero();
    for (s, wl) in universe.sources().iter().zip(w) {
        let u = s.embeddings();
        let inv_rl = T::one() / T::count(s.dim());
        let mut acc = T::zero();
        for (row, &id) in s.feature_ids().iter().enumerate() {
            let fitted = wl * v.row(id).transpose();
            acc += (u.row(row).transpose() - fitted).norm_squared();
        }
        total += acc * inv_rl;
    }
    Ok(total / T::count(universe.total_observations()))
}

pub(crate) fn check_factor_dims<T: Real>(universe: &FeatureUniverse<T>, v: &DMatrix<T>, w: &[DMatrix<T>]) -> Result<()> {
    if v.nrows() != universe.n() {
        return dimension(format!("V has {} rows for {} features", v.nrows(), universe.n()));
    }
    if w.len() != universe.num_sources() {
        return dimension(format!("{} loading matrices for {} sources", w.len(), universe.num_sources()));
    }
    for (l, (s, wl)) in universe.sources().iter().zip(w).enumerate() {
        if wl.nrows() != s.dim() || wl.ncols() != v.ncols() {
            return dimension(format!(
                "W_{l} is {}x{}, expected {}x{}",
                wl.nrows(),
                wl.ncols(),
                s.dim(),
                v.ncols()
            ));
        }
    }
    Ok(())
}

/// Per-feature mixture log-likelihood and responsibilities of the vMF mixture.
#[derive(Debug, Clone)]
pub struct VmfPosterior<T: Real> {
    /// `log sum_k pi_ik f_r(V_i; mu_k, kappa)` per feature.
    pub log_lik: Vec<T>,
    /// `gamma_ik` over the prior support of each row.
    pub gamma: Vec<Vec<(usize, T)>>,
}

impl<T: Real> VmfPosterior<T> {
    pub fn total_log_lik(&self) -> T {
        self.log_lik.iter().copied().sum()
    }
}

/// E-step quantities; valid for `kappa >= 0`.
pub fn vmf_posterior<T: Real>(v: &DMatrix<T>, mu: &DMatrix<T>, kappa: T, priors: &PriorMatrix<T>) -> Result<VmfPosterior<T>> {
    check_latent(v, mu, priors)?;
    let log_c = log_normalizer(v.ncols(), kappa);
    let mut log_lik = Vec::with_capacity(v.nrows());
    let mut gamma = Vec::with_capacity(v.nrows());
    let mut terms = Vec::new();
    for i in 0..v.nrows() {
        let support = priors.support(i);
        terms.clear();
        terms.extend(support.iter().map(|&(k, p)| log_c + kappa * row_dot(v, i, mu, k) + p.ln()));
        let lse = log_sum_exp(&terms);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!("vMF mixture log-likelihood of feature {i}")));
        }
        gamma.push(support.iter().zip(&terms).map(|(&(k, _), &t)| (k, (t - lse).exp())).collect());
        log_lik.push(lse);
    }
    Ok(VmfPosterior { log_lik, gamma })
}

/// `-(1/(n kappa)) sum_i log sum_k f_r(V_i; mu_k, kappa) pi_ik`.
pub fn loss_vmf<T: Real>(v: &DMatrix<T>, mu: &DMatrix<T>, kappa: T, priors: &PriorMatrix<T>) -> Result<T> {
    if !(kappa > T::zero()) || !kappa.is_finite() {
        return domain(format!("the vMF loss needs finite kappa > 0, got {kappa}"));
    }
    let post = vmf_posterior(v, mu, kappa, priors)?;
    Ok(-post.total_log_lik() / (T::count(v.nrows()) * kappa))
}

/// Per-pair mixture terms of the similarity likelihood.
pub(crate) struct SimPairTerms<T: Real> {
    pub log_lik: T,
    /// `(k1, k2, rho, dlogP/ds)` over the cross product of supports.
    pub parts: Vec<(usize, usize, T, T)>,
}

pub(crate) fn sim_pair_terms<T: Real>(
    gram: &DMatrix<T>,
    beta1: T,
    beta2: T,
    priors: &PriorMatrix<T>,
    pair: &LabeledPair,
) -> SimPairTerms<T> {
    let si = priors.support(pair.i);
    let sj = priors.support(pair.j);
    let mut logs = Vec::with_capacity(si.len() * sj.len());
    let mut parts = Vec::with_capacity(si.len() * sj.len());
    for &(k1, p1) in si {
        for &(k2, p2) in sj {
            let (lp, d) = log_bernoulli(beta1 + beta2 * gram[(k1, k2)], pair.label);
            logs.push(p1.ln() + p2.ln() + lp);
            parts.push((k1, k2, T::zero(), d));
        }
    }
    let lse = log_sum_exp(&logs);
    for (part, &l) in parts.iter_mut().zip(&logs) {
        part.2 = (l - lse).exp();
    }
    SimPairTerms { log_lik: lse, parts }
}

fn check_sim<T: Real>(mu: &DMatrix<T>, priors: &PriorMatrix<T>, pairs: &RelationalPairSet) -> Result<()> {
    if pairs.n_sim() == 0 {
        return domain("the similarity loss needs at least one similarity pair");
    }
    if priors.k() != mu.nrows() {
        return dimension(format!("priors have {} clusters, mu has {}", priors.k(), mu.nrows()));
    }
    if let Some(p) = pairs.sim().iter().find(|p| p.i.max(p.j) >= priors.n()) {
        return domain(format!("similarity pair ({}, {}) outside the prior rows", p.i, p.j));
    }
    Ok(())
}

/// `-(1/n_S) sum_pairs log sum_{k1,k2} P(delta | mu_k1, mu_k2) pi_ik1 pi_jk2`.
pub fn loss_sim<T: Real>(
    mu: &DMatrix<T>,
    beta1: T,
    beta2: T,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
) -> Result<T> {
    check_sim(mu, priors, pairs)?;
    let gram = mu * mu.transpose();
    let total: T = pairs
        .sim()
        .iter()
        .map(|p| sim_pair_terms(&gram, beta1, beta2, priors, p).log_lik)
        .sum();
    Ok(-total / T::count(pairs.n_sim()))
}

fn check_rel<T: Real>(v: &DMatrix<T>, rel: &DMatrix<T>, pairs: &RelationalPairSet) -> Result<()> {
    if pairs.n_rel() == 0 {
        return domain("the relatedness loss needs at least one relatedness pair");
    }
    if rel.nrows() != v.ncols() || rel.ncols() != v.ncols() {
        return dimension(format!("R must be {0}x{0}", v.ncols()));
    }
    if let Some(p) = pairs.rel().iter().find(|p| p.i.max(p.j) >= v.nrows()) {
        return domain(format!("relatedness pair ({}, {}) outside V", p.i, p.j));
    }
    Ok(())
}

/// Relatedness logit `beta3 + V_i^T R V_j`.
pub fn rel_logit<T: Real>(v: &DMatrix<T>, beta3: T, rel: &DMatrix<T>, i: usize, j: usize) -> T {
    let rv = rel * v.row(j).transpose();
    beta3 + v.row(i).dot(&rv.transpose())
}

/// `-(1/n_R) sum_pairs log P(delta | V_i, V_j, beta3, R)`.
pub fn loss_rel<T: Real>(v: &DMatrix<T>, beta3: T, rel: &DMatrix<T>, pairs: &RelationalPairSet) -> Result<T> {
    check_rel(v, rel, pairs)?;
    let vr = v * rel;
    let total: T = pairs
        .rel()
        .iter()
        .map(|p| log_bernoulli(beta3 + row_dot(&vr, p.i, v, p.j), p.label).0)
        .sum();
    Ok(-total / T::count(pairs.n_rel()))
}

/// Component values of the composite loss; zero-weight terms are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T: Real> {
    pub lr: T,
    pub vmf: Option<T>,
    pub sim: Option<T>,
    pub rel: Option<T>,
    pub total: T,
}

/// `l_lr + w_vmf l_vmf + w_sim l_sim + w_rel l_rel`, skipping zero-weight terms.
pub fn composite_breakdown<T: Real>(
    universe: &FeatureUniverse<T>,
    state: &ModelState<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    weights: &CompositeWeights,
) -> Result<LossBreakdown<T>> {
    weights.validate()?;
    let lr = loss_lr(universe, &state.v, &state.w)?;
    let vmf = if weights.w_vmf > 0.0 {
        Some(loss_vmf(&state.v, &state.mu, state.kappa, priors)?)
    } else {
        None
    };
    let sim = if weights.w_sim > 0.0 {
        Some(loss_sim(&state.mu, state.beta1, state.beta2, priors, pairs)?)
    } else {
        None
    };
    let rel = if weights.w_rel > 0.0 {
        Some(loss_rel(&state.v, state.beta3, &state.rel, pairs)?)
    } else {
        None
    };
    let mut total = lr;
    for (w, value) in [(weights.w_vmf, vmf), (weights.w_sim, sim), (weights.w_rel, rel)] {
        if let Some(x) = value {
            total += T::lit(w) * x;
        }
    }
    Ok(LossBreakdown {
        lr,
        vmf,
        sim,
        rel,
        total,
    })
}

pub fn composite_loss<T: Real>(
    universe: &FeatureUniverse<T>,
    state: &ModelState<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    weights: &CompositeWeights,
) -> Result<T> {
    Ok(composite_breakdown(universe, state, priors, pairs, weights)?.total)
}
