//! Alternating fit of the full model.

use std::time::Instant;

use nalgebra::DMatrix;

use super::config::{FitConfig, FitTrace, OuterRecord, StopReason};
use super::em::{em_concept_update, init_concept_level, ConceptStart, ConceptUpdate};
use super::feature::{check_source_dims, feature_refine, init_feature_level, FeatureFit};
use crate::error::{dimension, domain, Result};
use crate::model::{composite_breakdown, vmf_posterior, FeatureUniverse, LossBreakdown, ModelState, PriorMatrix, RelationalPairSet};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub state: ModelState<T>,
    pub trace: FitTrace,
    /// Posterior cluster probabilities at the final state, over each prior support.
    pub responsibilities: Vec<Vec<(usize, T)>>,
}

/// Hard labels with their score margins.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    /// Best minus second-best score; infinite when the support has one cluster.
    pub margins: Vec<f64>,
}

fn check_inputs<T: Real>(
    universe: &FeatureUniverse<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    config: &FitConfig,
) -> Result<()> {
    config.validate()?;
    if priors.n() != universe.n() {
        return dimension(format!("prior has {} rows for {} features", priors.n(), universe.n()));
    }
    if priors.k() != config.clusters {
        return dimension(format!("prior has {} clusters, config asks for {}", priors.k(), config.clusters));
    }
    if universe.n() < config.clusters {
        return domain(format!("{} features cannot fill {} clusters", universe.n(), config.clusters));
    }
    check_source_dims(universe, config.rank)?;
    if config.weights.w_sim > 0.0 && pairs.n_sim() == 0 {
        return domain("w_sim > 0 needs at least one similarity pair");
    }
    if config.weights.w_rel > 0.0 && pairs.n_rel() == 0 {
        return domain("w_rel > 0 needs at least one relatedness pair");
    }
    Ok(())
}

fn assemble<T: Real>(feature: &FeatureFit<T>, concept: &ConceptUpdate<T>) -> ModelState<T> {
    ModelState {
        v: feature.v.clone(),
        w: feature.w.clone(),
        mu: concept.mu.clone(),
        kappa: concept.kappa,
        beta1: concept.beta1,
        beta2: concept.beta2,
        beta3: feature.beta3,
        rel: feature.rel.clone(),
        z: concept.z.clone(),
    }
}

fn to_f64<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(|x| x.as_f64()).collect()
}

fn record<T: Real>(iteration: usize, b: &LossBreakdown<T>, em: usize, refine: usize, started: Instant) -> OuterRecord {
    OuterRecord {
        iteration,
        composite: b.total.as_f64(),
        lr: b.lr.as_f64(),
        vmf: b.vmf.map(|x| x.as_f64()),
        sim: b.sim.map(|x| x.as_f64()),
        rel: b.rel.map(|x| x.as_f64()),
        em_iterations: em,
        refine_steps: refine,
        accepted: true,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Fits `(V, W, mu, kappa, beta, R, z)` by block-coordinate descent on the
/// composite loss.
///
/// The feature level is initialized once. Each outer iteration then runs the
/// concept-level EM, refines the feature level with labels fixed, and
/// evaluates the composite loss. An iteration after the first that raises the
/// composite loss is rolled back and ends the fit.
pub fn fit<T: Real>(
    universe: &FeatureUniverse<T>,
    priors: &PriorMatrix<T>,
    pairs: &RelationalPairSet,
    config: &FitConfig,
) -> Result<FitResult<T>> {
    check_inputs(universe, priors, pairs, config)?;
    let weights = &config.weights;
    let init = init_feature_level(universe, pairs, config)?;
    let start = init_concept_level(&init.v, priors, config)?;
    let mut trace = FitTrace {
        init_objective: to_f64(&init.objective_trace),
        outer: Vec::new(),
        em_objectives: Vec::new(),
        refine_objectives: Vec::new(),
        stop: StopReason::MaxOuter,
    };

    if weights.w_vmf == 0.0 && weights.w_sim == 0.0 && weights.w_rel == 0.0 {
        let started = Instant::now();
        let concept = em_concept_update(&init.v, priors, pairs, &start, config)?;
        let state = assemble(&init, &concept);
        let b = composite_breakdown(universe, &state, priors, pairs, weights)?;
        trace.em_objectives.push(to_f64(&concept.objective_trace));
        trace.refine_objectives.push(Vec::new());
        trace.outer.push(record(1, &b, concept.iterations, 0, started));
        trace.stop = StopReason::ZeroWeights;
        return finish(state, trace, priors);
    }

    let mut state = ModelState {
        v: init.v.clone(),
        w: init.w.clone(),
        mu: start.mu.clone(),
        kappa: start.kappa,
        beta1: start.beta1,
        beta2: start.beta2,
        beta3: init.beta3,
        rel: init.rel.clone(),
        z: vec![0; universe.n()],
    };
    let mut previous: Option<T> = None;
    for iteration in 1..=config.max_outer {
        let started = Instant::now();
        let concept_start = ConceptStart {
            mu: state.mu.clone(),
            kappa: state.kappa,
            beta1: state.beta1,
            beta2: state.beta2,
        };
        let concept = em_concept_update(&state.v, priors, pairs, &concept_start, config)?;
        let mut candidate = state.clone();
        candidate.mu = concept.mu.clone();
        candidate.kappa = concept.kappa;
        candidate.beta1 = concept.beta1;
        candidate.beta2 = concept.beta2;
        candidate.z = concept.z.clone();
        let refined = feature_refine(&candidate, universe, pairs, config)?;
        candidate.v = refined.v.clone();
        candidate.w = refined.w.clone();
        candidate.beta3 = refined.beta3;
        candidate.rel = refined.rel.clone();

        let b = composite_breakdown(universe, &candidate, priors, pairs, weights)?;
        let mut rec = record(iteration, &b, concept.iterations, refined.objective_trace.len() - 1, started);
        trace.em_objectives.push(to_f64(&concept.objective_trace));
        trace.refine_objectives.push(to_f64(&refined.objective_trace));
        if let Some(prev) = previous {
            if b.total > prev {
                rec.accepted = false;
                trace.outer.push(rec);
                trace.stop = StopReason::Stalled;
                log::debug!("outer iteration {iteration} raised the composite loss; rolled back");
                return finish(state, trace, priors);
            }
        }
        state = candidate;
        trace.outer.push(rec);
        log::debug!("outer iteration {iteration}: composite {}", b.total);
        if let Some(prev) = previous {
            if (prev - b.total).abs() <= T::lit(config.tol_rel) * prev.abs().max(T::one()) {
                trace.stop = StopReason::Converged;
                break;
            }
        }
        previous = Some(b.total);
    }
    finish(state, trace, priors)
}

/// Final labels and responsibilities from the posterior at the final state.
fn finish<T: Real>(mut state: ModelState<T>, trace: FitTrace, priors: &PriorMatrix<T>) -> Result<FitResult<T>> {
    let post = vmf_posterior(&state.v, &state.mu, state.kappa, priors)?;
    state.z = post
        .gamma
        .iter()
        .map(|row| {
            let mut best = row[0];
            for &(c, g) in &row[1..] {
                if g > best.1 {
                    best = (c, g);
                }
            }
            best.0
        })
        .collect();
    Ok(FitResult {
        state,
        trace,
        responsibilities: post.gamma,
    })
}

/// Labels maximizing `ln pi_ik + kappa mu_k^T V_i` over each prior support.
pub fn assign_clusters<T: Real>(state: &ModelState<T>, priors: &PriorMatrix<T>) -> Result<Assignment> {
    if priors.n() != state.n() || priors.k() != state.k() {
        return dimension("prior shape does not match the state");
    }
    let scores: DMatrix<T> = &state.v * state.mu.transpose() * state.kappa;
    let mut labels = Vec::with_capacity(state.n());
    let mut margins = Vec::with_capacity(state.n());
    for i in 0..state.n() {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        let mut second = f64::NEG_INFINITY;
        for &(c, p) in priors.support(i) {
            let s = (p.ln() + scores[(i, c)]).as_f64();
            if s > best.1 {
                second = best.1;
                best = (c, s);
            } else if s > second {
                second = s;
            }
        }
        labels.push(best.0);
        margins.push(if priors.support(i).len() == 1 { f64::INFINITY } else { best.1 - second });
    }
    Ok(Assignment { labels, margins })
}
