//! Concept-level block: mean directions, concentration and similarity
//! coefficients by EM with `V` fixed.
//!
//! The objective is `w_vmf * (-LL / (n kappa0)) + w_sim * l_sim`, where `LL` is
//! the mixture log-likelihood and `kappa0` the concentration on entry; freezing
//! the prefactor makes the concentration step an ordinary M-step. Every update
//! is accepted only if this objective does not increase.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::config::FitConfig;
use crate::directional::{concentration_from_resultant, spherical_kmeans};
use crate::error::{domain, Error, Result};
use crate::linalg::{normalize_rows, row_dot};
use crate::model::grad::sim_grads;
use crate::model::loss::{loss_sim, sim_pair_terms, vmf_posterior};
use crate::model::{PriorMatrix, RelationalPairSet};
use crate::scalar::{sigmoid, Real};

/// Smallest concentration the optimizer will produce.
pub const KAPPA_FLOOR: f64 = 1e-8;
/// Largest mean resultant length passed to the inversion.
const RBAR_CEIL: f64 = 1.0 - 1e-12;

/// Output of the concept-level block.
#[derive(Debug, Clone)]
pub struct ConceptUpdate<T: Real> {
    pub mu: DMatrix<T>,
    pub kappa: T,
    pub beta1: T,
    pub beta2: T,
    /// `argmax_k gamma_ik`, lowest cluster index on ties.
    pub z: Vec<usize>,
    /// Responsibilities at the final parameters, over each prior support.
    pub responsibilities: Vec<Vec<(usize, T)>>,
    /// Objective at entry and after every iteration.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting concept-level parameters.
#[derive(Debug, Clone)]
pub struct ConceptStart<T: Real> {
    pub mu: DMatrix<T>,
    pub kappa: T,
    pub beta1: T,
    pub beta2: T,
}

struct EmObjective<'a, T: Real> {
    v: &'a DMatrix<T>,
    priors: &'a PriorMatrix<T>,
    pairs: &'a RelationalPairSet,
    /// `w_vmf / (n kappa0)`.
    vmf_scale: T,
    w_sim: T,
}

impl<T: Real> EmObjective<'_, T> {
    fn uses_sim(&self) -> bool {
        self.w_sim > T::zero()
    }

    fn value(&self, mu: &DMatrix<T>, kappa: T, beta1: T, beta2: T) -> Result<T> {
        let mut f = T::zero();
        if self.vmf_scale > T::zero() {
            f -= self.vmf_scale * vmf_posterior(self.v, mu, kappa, self.priors)?.total_log_lik();
        }
        if self.uses_sim() {
            f += self.w_sim * loss_sim(mu, beta1, beta2, self.priors, self.pairs)?;
        }
        if !f.is_finite() {
            return Err(Error::NonFinite("concept-level objective".into()));
        }
        Ok(f)
    }

    fn accepts(&self, candidate: T, current: T) -> bool {
        candidate <= current + T::lit(1e-12) * current.abs().max(T::one())
    }
}

/// Effective vMF weight of the concept block: with every weight zero the
/// block still clusters, with unit vMF weight.
pub(crate) fn concept_weights(config: &FitConfig) -> (f64, f64) {
    let w = &config.weights;
    if w.w_vmf == 0.0 && w.w_sim == 0.0 {
        (1.0, 0.0)
    } else {
        (w.w_vmf, w.w_sim)
    }
}

/// Runs EM on the concept-level objective from `start`, with `V` fixed.
pub fn em_concept_update<T: Real>(
    v: &DMatrix<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    start: &ConceptStart<T>,
    config: &FitConfig,
) -> Result<ConceptUpdate<T>> {
    config.validate()?;
    let (w_vmf, w_sim) = concept_weights(config);
    if w_sim > 0.0 && pairs.n_sim() == 0 {
        return domain("w_sim > 0 needs at least one similarity pair");
    }
    let n = v.nrows();
    let kappa0 = start.kappa.max(T::lit(KAPPA_FLOOR));
    let obj = EmObjective {
        v,
        priors,
        pairs,
        vmf_scale: T::lit(w_vmf) / (T::count(n) * kappa0),
        w_sim: T::lit(w_sim),
    };
    let mut mu = start.mu.clone();
    let mut kappa = kappa0;
    let (mut beta1, mut beta2) = (start.beta1, start.beta2);
    let mut current = obj.value(&mu, kappa, beta1, beta2)?;
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.em_max_iter {
        iterations += 1;
        let before = current;
        let post = vmf_posterior(v, &mu, kappa, priors)?;
        let resultants = weighted_resultants(v, &post.gamma, mu.nrows());

        // closed-form M-step for (mu, kappa); on rejection, guarded partial updates
        let mut closed = resultants.clone();
        for k in 0..mu.nrows() {
            let norm = closed.row(k).norm();
            if norm > T::eps() {
                closed.row_mut(k).unscale_mut(norm);
            } else {
                closed.set_row(k, &mu.row(k));
            }
        }
        let kappa_closed = concentration_update(&closed, &resultants, n)?;
        let f = obj.value(&closed, kappa_closed, beta1, beta2)?;
        if obj.accepts(f, current) {
            mu = closed;
            kappa = kappa_closed;
            current = f;
        } else {
            let mut t = T::one();
            for _ in 0..=config.max_halvings {
                let mut cand = &mu * (T::one() - t) + &closed * t;
                keep_unit_rows(&mut cand, &mu);
                let f = obj.value(&cand, kappa, beta1, beta2)?;
                if obj.accepts(f, current) {
                    mu = cand;
                    current = f;
                    break;
                }
                t *= T::lit(0.5);
            }
            let kappa_new = concentration_update(&mu, &resultants, n)?;
            let f = obj.value(&mu, kappa_new, beta1, beta2)?;
            if obj.accepts(f, current) {
                kappa = kappa_new;
                current = f;
            }
        }

        if obj.uses_sim() {
            if let Some((m, f)) = mean_direction_correction(&obj, &mu, kappa, beta1, beta2, current, config)? {
                mu = m;
                current = f;
            }
            if let Some((b1, b2, f)) = similarity_newton(&obj, &mu, kappa, beta1, beta2, current, config)? {
                beta1 = b1;
                beta2 = b2;
                current = f;
            }
        }

        trace.push(current);
        if (before - current).abs() <= T::lit(config.em_tol) * before.abs().max(T::one()) {
            converged = true;
            break;
        }
    }

    let post = vmf_posterior(v, &mu, kappa, priors)?;
    let z = post.gamma.iter().map(|row| argmax_support(row)).collect();
    Ok(ConceptUpdate {
        mu,
        kappa,
        beta1,
        beta2,
        z,
        responsibilities: post.gamma,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// `A_r^{-1}` of the mixture resultant `(1/n) sum_k mu_k^T S_k`.
fn concentration_update<T: Real>(mu: &DMatrix<T>, resultants: &DMatrix<T>, n: usize) -> Result<T> {
    let rbar = (0..mu.nrows()).map(|k| row_dot(mu, k, resultants, k)).sum::<T>() / T::count(n);
    let rbar = rbar.max(T::zero()).min(T::lit(RBAR_CEIL));
    Ok(concentration_from_resultant(mu.ncols(), rbar)?.max(T::lit(KAPPA_FLOOR)))
}

/// `sum_i gamma_ik V_i` for every cluster.
fn weighted_resultants<T: Real>(v: &DMatrix<T>, gamma: &[Vec<(usize, T)>], k: usize) -> DMatrix<T> {
    let mut s = DMatrix::zeros(k, v.ncols());
    for (i, row) in gamma.iter().enumerate() {
        for &(c, g) in row {
            let mut sc = s.row_mut(c);
            sc += v.row(i) * g;
        }
    }
    s
}

/// Normalizes rows; a row that cancels out keeps its previous value.
fn keep_unit_rows<T: Real>(m: &mut DMatrix<T>, fallback: &DMatrix<T>) {
    for i in normalize_rows(m) {
        m.set_row(i, &fallback.row(i));
    }
}

fn argmax_support<T: Real>(row: &[(usize, T)]) -> usize {
    let mut best = row[0];
    for &(c, g) in &row[1..] {
        if g > best.1 {
            best = (c, g);
        }
    }
    best.0
}

/// Projected gradient step on the mean directions for the full concept
/// objective, with backtracking.
fn mean_direction_correction<T: Real>(
    obj: &EmObjective<'_, T>,
    mu: &DMatrix<T>,
    kappa: T,
    beta1: T,
    beta2: T,
    current: T,
    config: &FitConfig,
) -> Result<Option<(DMatrix<T>, T)>> {
    let mut grad = sim_grads(mu, beta1, beta2, obj.priors, obj.pairs)?.0 * obj.w_sim;
    if obj.vmf_scale > T::zero() {
        let post = vmf_posterior(obj.v, mu, kappa, obj.priors)?;
        grad -= weighted_resultants(obj.v, &post.gamma, mu.nrows()) * (obj.vmf_scale * kappa);
    }
    let mut largest = T::zero();
    for k in 0..mu.nrows() {
        let m = mu.row(k).transpose();
        let g = grad.row(k).transpose();
        let gt = &g - &m * m.dot(&g);
        largest = largest.max(gt.norm());
        grad.set_row(k, &gt.transpose());
    }
    if largest == T::zero() {
        return Ok(None);
    }
    let mut t = T::lit(config.step_mu) / largest;
    for _ in 0..=config.max_halvings {
        let mut cand = mu - &grad * t;
        keep_unit_rows(&mut cand, mu);
        let f = obj.value(&cand, kappa, beta1, beta2)?;
        if f < current {
            return Ok(Some((cand, f)));
        }
        t *= T::lit(0.5);
    }
    Ok(None)
}

/// Damped Newton step on `(beta1, beta2)` using the responsibility-weighted
/// logistic information as Hessian.
fn similarity_newton<T: Real>(
    obj: &EmObjective<'_, T>,
    mu: &DMatrix<T>,
    kappa: T,
    beta1: T,
    beta2: T,
    current: T,
    config: &FitConfig,
) -> Result<Option<(T, T, T)>> {
    let (_, g1, g2) = sim_grads(mu, beta1, beta2, obj.priors, obj.pairs)?;
    let gram = mu * mu.transpose();
    let inv_n = T::one() / T::count(obj.pairs.n_sim());
    let mut h = Matrix2::<T>::zeros();
    for p in obj.pairs.sim() {
        for (k1, k2, rho, _) in sim_pair_terms(&gram, beta1, beta2, obj.priors, p).parts {
            let c = gram[(k1, k2)];
            let q = sigmoid(beta1 + beta2 * c);
            let x = Vector2::new(T::one(), c);
            h += x * x.transpose() * (rho * q * (T::one() - q) * inv_n);
        }
    }
    let ridge = T::lit(1e-8) * (T::one() + h[(0, 0)].max(h[(1, 1)]));
    h[(0, 0)] += ridge;
    h[(1, 1)] += ridge;
    let Some(step) = h.cholesky().map(|c| c.solve(&Vector2::new(g1, g2))) else {
        return Ok(None);
    };
    let mut t = T::lit(config.step_beta);
    for _ in 0..=config.max_halvings {
        let (b1, b2) = (beta1 - step[0] * t, beta2 - step[1] * t);
        let f = obj.value(mu, kappa, b1, b2)?;
        if f < current {
            return Ok(Some((b1, b2, f)));
        }
        t *= T::lit(0.5);
    }
    Ok(None)
}

/// Starting mean directions and concentration from fixed `V`.
///
/// Clusters with one-hot prior members start at the normalized mean of those
/// members. The remaining clusters take spherical k-means centers of the other
/// features, matched to cluster ids by maximal prior-weighted similarity. The
/// concentration inverts the mean best-cosine over each prior support.
pub fn init_concept_level<T: Real>(v: &DMatrix<T>, priors: &PriorMatrix<T>, config: &FitConfig) -> Result<ConceptStart<T>> {
    let k = priors.k();
    let n = v.nrows();
    let r = v.ncols();
    let mut sums = DMatrix::<T>::zeros(k, r);
    let mut hard = vec![false; k];
    let mut hard_feature = vec![false; n];
    for i in 0..n {
        if priors.is_one_hot(i) {
            let c = priors.support(i)[0].0;
            hard[c] = true;
            hard_feature[i] = true;
            let mut row = sums.row_mut(c);
            row += v.row(i);
        }
    }
    let mut mu = DMatrix::<T>::zeros(k, r);
    let mut free: Vec<usize> = Vec::new();
    for c in 0..k {
        let norm = sums.row(c).norm();
        if hard[c] && norm > T::eps() {
            mu.set_row(c, &(sums.row(c) / norm));
        } else {
            free.push(c);
        }
    }
    if !free.is_empty() {
        let soft: Vec<usize> = (0..n).filter(|&i| !hard_feature[i]).collect();
        let pool: Vec<usize> = if soft.len() >= free.len() { soft } else { (0..n).collect() };
        if pool.len() < free.len() {
            return domain(format!("{} clusters need initial centers but only {} features exist", free.len(), n));
        }
        let points = DMatrix::from_fn(pool.len(), r, |row, c| v[(pool[row], c)]);
        let km = spherical_kmeans(&points, free.len(), config.rng_seed, config.kmeans_max_iter)?;
        // score[a][b]: prior-weighted similarity of k-means center a to free cluster b
        let mut score = DMatrix::<f64>::zeros(free.len(), free.len());
        let slot: std::collections::HashMap<usize, usize> = free.iter().enumerate().map(|(b, &c)| (c, b)).collect();
        for &i in &pool {
            for &(c, p) in priors.support(i) {
                if let Some(&b) = slot.get(&c) {
                    for a in 0..free.len() {
                        score[(a, b)] += (p * row_dot(&km.centers, a, v, i)).as_f64();
                    }
                }
            }
        }
        let matching = crate::assignment::max_score_assignment(&score)?;
        for (a, &b) in matching.iter().enumerate() {
            mu.set_row(free[b], &km.centers.row(a));
        }
    }
    let mut total = T::zero();
    for i in 0..n {
        let best = priors
            .support(i)
            .iter()
            .map(|&(c, _)| row_dot(v, i, &mu, c))
            .fold(T::neg_infinity(), |a, b| a.max(b));
        total += best;
    }
    let rbar = (total / T::count(n)).max(T::zero()).min(T::lit(RBAR_CEIL));
    let kappa = concentration_from_resultant(r, rbar)?.max(T::lit(KAPPA_FLOOR));
    Ok(ConceptStart {
        mu,
        kappa,
        beta1: T::zero(),
        beta2: T::zero(),
    })
}
