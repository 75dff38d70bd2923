//! Directory layouts for datasets, ground truth and fitted models.
//!
//! A dataset directory holds `dataset.json`, one `source_<l>.csv` per source
//! and optionally `pairs.csv`, `heldout_pairs.csv` and `priors.csv`. The
//! simulator adds a `truth/` subdirectory. A model directory holds the fitted
//! matrices, labels, responsibilities, scalar parameters and the fit trace.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sphalign::model::{FeatureUniverse, ModelState, PriorMatrix, RelationalPairSet, SourceSet};
use sphalign::optim::{FitResult, FitTrace};
use sphalign::synth::ScenarioTruth;

use crate::error::{read_failed, CliResult};
use crate::io::{
    create_dir, prior_rows, read_dense, read_json, read_labels, read_matrix, read_pairs, read_priors, read_triplets, write_json,
    write_labels, write_matrix, write_pairs, write_priors, write_rows,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub id: usize,
    pub file: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    /// Number of clusters the priors refer to, when known.
    pub clusters: Option<usize>,
    pub sources: Vec<SourceEntry>,
    pub pairs: Option<String>,
    pub heldout_pairs: Option<String>,
    pub priors: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub universe: FeatureUniverse<f64>,
    pub pairs: RelationalPairSet,
    pub heldout: Option<RelationalPairSet>,
    pub priors: Option<PriorMatrix<f64>>,
}

pub fn write_dataset(dir: &Path, universe: &FeatureUniverse<f64>, pairs: &RelationalPairSet, heldout: Option<&RelationalPairSet>, priors: Option<&PriorMatrix<f64>>) -> CliResult<DatasetMeta> {
    create_dir(dir)?;
    let mut sources = Vec::new();
    for s in universe.sources() {
        let file = format!("source_{}.csv", s.source_id);
        write_matrix(&dir.join(&file), "feature_id", s.feature_ids(), s.embeddings())?;
        sources.push(SourceEntry {
            id: s.source_id,
            file,
            dim: s.dim(),
        });
    }
    write_pairs(&dir.join("pairs.csv"), pairs)?;
    if let Some(h) = heldout {
        write_pairs(&dir.join("heldout_pairs.csv"), h)?;
    }
    if let Some(p) = priors {
        write_priors(&dir.join("priors.csv"), &prior_rows(p))?;
    }
    let meta = DatasetMeta {
        n: universe.n(),
        clusters: priors.map(|p| p.k()),
        sources,
        pairs: Some("pairs.csv".into()),
        heldout_pairs: heldout.map(|_| "heldout_pairs.csv".into()),
        priors: priors.map(|_| "priors.csv".into()),
    };
    write_json(&dir.join("dataset.json"), &meta)?;
    Ok(meta)
}

pub fn read_dataset(dir: &Path) -> CliResult<Dataset> {
    let meta: DatasetMeta = read_json(&dir.join("dataset.json"))?;
    let mut sources = Vec::new();
    for entry in &meta.sources {
        let path = dir.join(&entry.file);
        let (ids, m) = read_matrix(&path, "feature_id")?;
        if m.ncols() != entry.dim {
            return Err(read_failed(&path, format!("has {} columns, dataset.json says {}", m.ncols(), entry.dim)));
        }
        sources.push(SourceSet::new(entry.id, ids, m).map_err(|e| read_failed(&path, e))?);
    }
    let universe = FeatureUniverse::new(meta.n, sources).map_err(|e| read_failed(&dir.join("dataset.json"), e))?;
    let pairs = match &meta.pairs {
        Some(f) => read_pairs(&dir.join(f), meta.n)?,
        None => RelationalPairSet::empty(),
    };
    let heldout = match &meta.heldout_pairs {
        Some(f) => Some(read_pairs(&dir.join(f), meta.n)?),
        None => None,
    };
    let priors = match (&meta.priors, meta.clusters) {
        (Some(f), Some(k)) => Some(read_priors(&dir.join(f), meta.n, k)?),
        (Some(_), None) => return Err(read_failed(&dir.join("dataset.json"), "priors given without clusters")),
        _ => None,
    };
    Ok(Dataset {
        meta,
        universe,
        pairs,
        heldout,
        priors,
    })
}

/// Scalar truth parameters and bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthParams {
    pub kappa: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub anchors: Vec<usize>,
    pub eval_ids: Vec<usize>,
    pub degenerate_means: usize,
}

/// Ground truth read back from disk. Only `z` is required; a labels-only
/// truth directory gates the embedding metrics off.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFiles {
    pub v: Option<DMatrix<f64>>,
    pub mu: Option<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
    pub rel: Option<DMatrix<f64>>,
    pub z: Vec<usize>,
    pub params: Option<TruthParams>,
}

fn range(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn write_truth(dir: &Path, truth: &ScenarioTruth) -> CliResult<()> {
    create_dir(dir)?;
    write_matrix(&dir.join("v.csv"), "feature_id", &range(truth.v.nrows()), &truth.v)?;
    write_matrix(&dir.join("mu.csv"), "cluster_id", &range(truth.mu.nrows()), &truth.mu)?;
    write_matrix(&dir.join("rel.csv"), "row", &range(truth.rel.nrows()), &truth.rel)?;
    for (l, w) in truth.w.iter().enumerate() {
        write_matrix(&dir.join(format!("w_{l}.csv")), "row", &range(w.nrows()), w)?;
    }
    write_labels(&dir.join("labels.csv"), &truth.z)?;
    write_json(
        &dir.join("truth.json"),
        &TruthParams {
            kappa: truth.kappa,
            beta1: truth.beta1,
            beta2: truth.beta2,
            beta3: truth.beta3,
            anchors: truth.anchors.clone(),
            eval_ids: truth.eval_ids.clone(),
            degenerate_means: truth.degenerate_means,
        },
    )
}

fn optional<T>(path: &Path, read: impl FnOnce(&Path) -> CliResult<T>) -> CliResult<Option<T>> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn read_truth(dir: &Path) -> CliResult<TruthFiles> {
    let z = read_labels(&dir.join("labels.csv"))?;
    let v = optional(&dir.join("v.csv"), |p| read_dense(p, "feature_id"))?;
    let mu = optional(&dir.join("mu.csv"), |p| read_dense(p, "cluster_id"))?;
    let rel = optional(&dir.join("rel.csv"), |p| read_dense(p, "row"))?;
    let mut w = Vec::new();
    while let Some(m) = optional(&dir.join(format!("w_{}.csv", w.len())), |p| read_dense(p, "row"))? {
        w.push(m);
    }
    let params = optional(&dir.join("truth.json"), read_json)?;
    Ok(TruthFiles { v, mu, w, rel, z, params })
}

/// Scalar parameters of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kappa: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Source id of each loading matrix `w_<l>.csv`, in order.
    pub source_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFiles {
    pub state: ModelState<f64>,
    pub responsibilities: Vec<Vec<(usize, f64)>>,
    pub source_ids: Vec<usize>,
}

const TRACE_HEADER: &[&str] = &[
    "iteration",
    "composite",
    "lr",
    "vmf",
    "sim",
    "rel",
    "em_iterations",
    "refine_steps",
    "accepted",
];

fn opt(x: Option<f64>) -> String {
    x.map(crate::io::fmt_f64).unwrap_or_default()
}

/// Writes the outer-iteration table of a trace (wall time is left to the JSON
/// copy so the table is reproducible).
pub fn write_trace_table(path: &Path, trace: &FitTrace) -> CliResult<()> {
    let rows = trace.outer.iter().map(|o| {
        vec![
            o.iteration.to_string(),
            crate::io::fmt_f64(o.composite),
            crate::io::fmt_f64(o.lr),
            opt(o.vmf),
            opt(o.sim),
            opt(o.rel),
            o.em_iterations.to_string(),
            o.refine_steps.to_string(),
            u8::from(o.accepted).to_string(),
        ]
    });
    write_rows(path, &TRACE_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>(), rows)
}

pub fn write_model(dir: &Path, result: &FitResult<f64>, source_ids: &[usize]) -> CliResult<()> {
    create_dir(dir)?;
    let s = &result.state;
    write_matrix(&dir.join("v.csv"), "feature_id", &range(s.v.nrows()), &s.v)?;
    write_matrix(&dir.join("mu.csv"), "cluster_id", &range(s.mu.nrows()), &s.mu)?;
    write_matrix(&dir.join("rel.csv"), "row", &range(s.rel.nrows()), &s.rel)?;
    for (l, w) in s.w.iter().enumerate() {
        write_matrix(&dir.join(format!("w_{l}.csv")), "row", &range(w.nrows()), w)?;
    }
    write_labels(&dir.join("labels.csv"), &s.z)?;
    // exact zeros (underflowed posteriors) are not listed
    let nonzero: Vec<Vec<(usize, f64)>> = result
        .responsibilities
        .iter()
        .map(|row| row.iter().copied().filter(|x| x.1 != 0.0).collect())
        .collect();
    write_priors(&dir.join("responsibilities.csv"), &nonzero)?;
    write_json(
        &dir.join("params.json"),
        &ModelParams {
            kappa: s.kappa,
            beta1: s.beta1,
            beta2: s.beta2,
            beta3: s.beta3,
            source_ids: source_ids.to_vec(),
        },
    )?;
    write_trace_table(&dir.join("trace.csv"), &result.trace)?;
    write_json(&dir.join("trace.json"), &result.trace)
}

pub fn read_model(dir: &Path) -> CliResult<ModelFiles> {
    let params: ModelParams = read_json(&dir.join("params.json"))?;
    let v = read_dense(&dir.join("v.csv"), "feature_id")?;
    let mu = read_dense(&dir.join("mu.csv"), "cluster_id")?;
    let rel = read_dense(&dir.join("rel.csv"), "row")?;
    let z = read_labels(&dir.join("labels.csv"))?;
    let w = (0..params.source_ids.len())
        .map(|l| read_dense(&dir.join(format!("w_{l}.csv")), "row"))
        .collect::<CliResult<Vec<_>>>()?;
    let responsibilities = read_triplets(&dir.join("responsibilities.csv"), v.nrows(), mu.nrows())?;
    let state = ModelState {
        v,
        w,
        mu,
        kappa: params.kappa,
        beta1: params.beta1,
        beta2: params.beta2,
        beta3: params.beta3,
        rel,
        z,
    };
    state.validate().map_err(|e| read_failed(dir, e))?;
    Ok(ModelFiles {
        state,
        responsibilities,
        source_ids: params.source_ids,
    })
}
