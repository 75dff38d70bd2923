//! Weight selection over {0.1, 1, 10}^3 scored on held-back pairs.

use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use sphalign::eval::{auc, score_pairs};
use sphalign::model::{Channel, CompositeWeights, FeatureUniverse, LabeledPair, PriorMatrix, RelationalPairSet};
use sphalign::optim::{fit, FitConfig};
use sphalign::rng::{substream, tag};

use crate::error::CliResult;
use crate::io::{fmt_f64, write_rows};

pub const GRID_LEVELS: [f64; 3] = [0.1, 1.0, 10.0];
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Every candidate in order: `w_vmf` slowest, `w_rel` fastest.
pub fn candidates() -> Vec<CompositeWeights> {
    let mut out = Vec::new();
    for &a in &GRID_LEVELS {
        for &b in &GRID_LEVELS {
            for &c in &GRID_LEVELS {
                out.push(CompositeWeights { w_vmf: a, w_sim: b, w_rel: c });
            }
        }
    }
    out
}

/// Training and validation pairs.
#[derive(Debug, Clone)]
pub struct PairSplit {
    pub train: RelationalPairSet,
    pub validation: RelationalPairSet,
}

/// Holds back a seeded fraction of each channel, rounded to the nearest
/// count.
pub fn split_pairs(n: usize, pairs: &RelationalPairSet, fraction: f64, seed: u64) -> sphalign::Result<PairSplit> {
    let mut parts: Vec<(Vec<LabeledPair>, Vec<LabeledPair>)> = Vec::new();
    for (index, channel) in [Channel::Similarity, Channel::Relatedness].into_iter().enumerate() {
        let all = pairs.channel(channel);
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.shuffle(&mut substream(seed, tag::SPLIT, index as u64));
        let held = (fraction * all.len() as f64).round() as usize;
        let mut is_held = vec![false; all.len()];
        for &k in &order[..held] {
            is_held[k] = true;
        }
        let (mut train, mut validation) = (Vec::new(), Vec::new());
        for (k, p) in all.iter().enumerate() {
            if is_held[k] {
                validation.push(*p);
            } else {
                train.push(*p);
            }
        }
        parts.push((train, validation));
    }
    let (sim, rel) = (parts.remove(0), parts.remove(0));
    Ok(PairSplit {
        train: RelationalPairSet::new(n, sim.0, rel.0)?,
        validation: RelationalPairSet::new(n, sim.1, rel.1)?,
    })
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Candidate weights with their validation score; `None` when the fit
    /// failed or no channel could be scored.
    pub scores: Vec<(CompositeWeights, Option<f64>)>,
    pub chosen: CompositeWeights,
}

impl GridOutcome {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let header: Vec<String> = ["w_vmf", "w_sim", "w_rel", "score"].iter().map(|s| s.to_string()).collect();
        let rows = self.scores.iter().map(|(w, s)| {
            vec![
                fmt_f64(w.w_vmf),
                fmt_f64(w.w_sim),
                fmt_f64(w.w_rel),
                s.map(fmt_f64).unwrap_or_default(),
            ]
        });
        write_rows(path, &header, rows)
    }
}

/// Mean AUC over the channels whose validation pairs carry both labels.
pub fn validation_score(v: &nalgebra::DMatrix<f64>, rel: &nalgebra::DMatrix<f64>, validation: &RelationalPairSet) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for channel in [Channel::Similarity, Channel::Relatedness] {
        let pairs = validation.channel(channel);
        let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
        if !(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l)) {
            continue;
        }
        if let Ok(a) = auc(&score_pairs(v, rel, pairs, channel), &labels) {
            total += a;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Fits every candidate on the training pairs and picks the best validation
/// score; ties keep the earlier candidate. The caller refits on all pairs.
pub fn grid_search(
    universe: &FeatureUniverse<f64>,
    priors: &PriorMatrix<f64>,
    pairs: &RelationalPairSet,
    config: &FitConfig,
) -> CliResult<GridOutcome> {
    let split = split_pairs(universe.n(), pairs, VALIDATION_FRACTION, config.rng_seed)?;
    let mut scores = Vec::new();
    let mut best: Option<(CompositeWeights, f64)> = None;
    for w in candidates() {
        let cfg = FitConfig { weights: w, ..config.clone() };
        let score = match fit(universe, priors, &split.train, &cfg) {
            Ok(r) => validation_score(&r.state.v, &r.state.rel, &split.validation),
            Err(e) => {
                debug!("grid candidate {w:?} failed: {e}");
                None
            }
        };
        if let Some(s) = score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((w, s));
            }
        }
        scores.push((w, score));
    }
    let chosen = match best {
        Some((w, _)) => w,
        None => return Err(crate::error::CliError::input("grid search: no candidate could be scored on the validation pairs")),
    };
    Ok(GridOutcome { scores, chosen })
}
