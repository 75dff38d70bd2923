//! Per-method evaluation against a generated truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::alignment::{permutation_align, procrustes_align, rel_acc};
use super::metrics::{ami, auc, margin_stats, score_pairs};
use crate::error::Result;
use crate::model::{Channel, PriorMatrix, RelationalPairSet};

/// What a method produced, in the shared evaluation format.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub v: DMatrix<f64>,
    /// Unit-norm cluster centers, one per cluster id.
    pub mu: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Relatedness matrix; plain cosine scores are used without one.
    pub rel: Option<DMatrix<f64>>,
    pub kappa: Option<f64>,
}

/// Ground truth needed for evaluation; embedding fields are optional.
#[derive(Debug, Clone, Copy)]
pub struct EvalTruth<'a> {
    pub v: Option<&'a DMatrix<f64>>,
    pub mu: Option<&'a DMatrix<f64>>,
    pub z: &'a [usize],
    /// Features scored for clustering.
    pub eval_ids: &'a [usize],
    pub heldout: Option<&'a RelationalPairSet>,
    pub priors: Option<&'a PriorMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub replication: usize,
    pub rel_acc_v: Option<f64>,
    pub rel_acc_mu: Option<f64>,
    /// AMI on the evaluation features.
    pub ami: f64,
    /// AMI on every feature.
    pub ami_all: f64,
    pub auc_sim: Option<f64>,
    pub auc_rel: Option<f64>,
    /// Minimum, quartiles and maximum of the true-cluster margins.
    pub margin_quantiles: Option<[f64; 5]>,
    pub margin_below_zero: Option<f64>,
}

impl EvalReport {
    /// `(name, value)` for every metric that was computed.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut push = |name, v: Option<f64>| {
            if let Some(x) = v {
                out.push((name, x));
            }
        };
        push("rel_acc_v", self.rel_acc_v);
        push("rel_acc_mu", self.rel_acc_mu);
        push("ami", Some(self.ami));
        push("ami_all", Some(self.ami_all));
        push("auc_sim", self.auc_sim);
        push("auc_rel", self.auc_rel);
        if let Some(q) = self.margin_quantiles {
            push("margin_median", Some(q[2]));
        }
        push("margin_below_zero", self.margin_below_zero);
        out
    }
}

pub fn evaluate(method: &str, replication: usize, out: &MethodOutput, truth: &EvalTruth<'_>) -> Result<EvalReport> {
    let pick = |x: &[usize]| -> Vec<usize> { truth.eval_ids.iter().map(|&i| x[i]).collect() };
    let ami_eval = if truth.eval_ids.is_empty() {
        f64::NAN
    } else {
        ami(&pick(&out.labels), &pick(truth.z))?
    };
    let ami_all = ami(&out.labels, truth.z)?;

    let mut rel_acc_v = None;
    let mut rel_acc_mu = None;
    if let Some(v0) = truth.v {
        rel_acc_v = Some(rel_acc(&out.v, v0)?);
        if let Some(mu0) = truth.mu {
            if out.mu.shape() == mu0.shape() {
                let rot = procrustes_align(&out.v, v0)?;
                let perm = permutation_align(&out.mu, mu0, Some(&rot.map))?;
                rel_acc_mu = Some(rel_acc(&perm.aligned, mu0)?);
            }
        }
    }

    let mut auc_sim = None;
    let mut auc_rel = None;
    if let Some(h) = truth.heldout {
        let identity = DMatrix::identity(out.v.ncols(), out.v.ncols());
        let rel = out.rel.as_ref().unwrap_or(&identity);
        for (channel, pairs, slot) in [
            (Channel::Similarity, h.sim(), &mut auc_sim),
            (Channel::Relatedness, h.rel(), &mut auc_rel),
        ] {
            let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
            if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                *slot = Some(auc(&score_pairs(&out.v, rel, pairs, channel), &labels)?);
            }
        }
    }

    let (mut margin_quantiles, mut margin_below_zero) = (None, None);
    if let (Some(kappa), Some(priors), Some(v0)) = (out.kappa, truth.priors, truth.v) {
        if out.mu.nrows() == priors.k() {
            // margins of the fitted state, with clusters matched to the truth
            let rot = procrustes_align(&out.v, v0)?;
            if let Some(mu0) = truth.mu {
                let perm = permutation_align(&out.mu, mu0, Some(&rot.map))?;
                let mu_true_order = DMatrix::from_fn(out.mu.nrows(), out.mu.ncols(), |t, c| out.mu[(perm.perm[t], c)]);
                let stats = margin_stats(&out.v, &mu_true_order, kappa, priors, truth.z, 0.0)?;
                margin_quantiles = Some(stats.quantiles);
                margin_below_zero = Some(stats.below_threshold);
            }
        }
    }

    Ok(EvalReport {
        method: method.to_string(),
        replication,
        rel_acc_v,
        rel_acc_mu,
        ami: ami_eval,
        ami_all,
        auc_sim,
        auc_rel,
        margin_quantiles,
        margin_below_zero,
    })
}
