use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::CompositeWeights;

/// Control parameters of the alternating fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub weights: CompositeWeights,
    /// Latent dimension `r`.
    pub rank: usize,
    /// Number of clusters `K`.
    pub clusters: usize,
    pub max_outer: usize,
    /// Sweeps of the feature-level block per call (initialization and refinement).
    pub max_inner: usize,
    /// Relative objective change that ends the outer loop.
    pub tol_rel: f64,
    /// Relative objective change that ends a feature-level block.
    pub inner_tol: f64,
    /// Initial step of the preconditioned V update (1 is a full Newton-like step).
    pub step_v: f64,
    /// Initial step of the mean-direction correction, relative to the gradient scale.
    pub step_mu: f64,
    /// Initial damping of the Newton steps on the logistic coefficients.
    pub step_beta: f64,
    /// Step halvings allowed in every backtracking search.
    pub max_halvings: usize,
    pub rng_seed: u64,
    pub em_max_iter: usize,
    pub em_tol: f64,
    pub kmeans_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            weights: CompositeWeights::default(),
            rank: 6,
            clusters: 50,
            max_outer: 50,
            max_inner: 50,
            tol_rel: 1e-6,
            inner_tol: 1e-9,
            step_v: 1.0,
            step_mu: 1.0,
            step_beta: 1.0,
            max_halvings: 30,
            rng_seed: 0,
            em_max_iter: 200,
            em_tol: 1e-10,
            kmeans_max_iter: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.rank < 2 {
            return domain(format!("rank must be >= 2, got {}", self.rank));
        }
        if self.clusters < 1 {
            return domain("clusters must be >= 1");
        }
        for (name, v) in [
            ("max_outer", self.max_outer),
            ("max_inner", self.max_inner),
            ("em_max_iter", self.em_max_iter),
            ("kmeans_max_iter", self.kmeans_max_iter),
        ] {
            if v < 1 {
                return domain(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("tol_rel", self.tol_rel),
            ("inner_tol", self.inner_tol),
            ("em_tol", self.em_tol),
            ("step_v", self.step_v),
            ("step_mu", self.step_mu),
            ("step_beta", self.step_beta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return domain(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxOuter,
    /// An outer iteration raised the composite loss and was rolled back.
    Stalled,
    /// All weights are zero: one feature-level fit and one concept update.
    ZeroWeights,
}

/// One outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    pub composite: f64,
    pub lr: f64,
    pub vmf: Option<f64>,
    pub sim: Option<f64>,
    pub rel: Option<f64>,
    pub em_iterations: usize,
    pub refine_steps: usize,
    /// False for the final iteration when it was rolled back.
    pub accepted: bool,
    pub seconds: f64,
}

impl PartialEq for OuterRecord {
    /// Wall time is excluded so that traces of identical runs compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.iteration == other.iteration
            && self.composite.to_bits() == other.composite.to_bits()
            && self.lr.to_bits() == other.lr.to_bits()
            && self.vmf.map(f64::to_bits) == other.vmf.map(f64::to_bits)
            && self.sim.map(f64::to_bits) == other.sim.map(f64::to_bits)
            && self.rel.map(f64::to_bits) == other.rel.map(f64::to_bits)
            && self.em_iterations == other.em_iterations
            && self.refine_steps == other.refine_steps
            && self.accepted == other.accepted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Objective after every accepted step of the initial feature-level fit.
    pub init_objective: Vec<f64>,
    pub outer: Vec<OuterRecord>,
    /// Concept-level objective per EM iteration, one list per outer iteration.
    pub em_objectives: Vec<Vec<f64>>,
    /// Refinement objective per accepted step, one list per outer iteration.
    pub refine_objectives: Vec<Vec<f64>>,
    pub stop: StopReason,
}

impl FitTrace {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::Converged | StopReason::ZeroWeights)
    }

    /// Composite loss of every accepted outer iteration.
    pub fn accepted_composite(&self) -> Vec<f64> {
        self.outer.iter().filter(|r| r.accepted).map(|r| r.composite).collect()
    }
}
