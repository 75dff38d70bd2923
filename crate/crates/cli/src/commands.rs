//! The simulate, fit and evaluate commands.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sphalign::eval::{evaluate as evaluate_method, EvalReport, EvalTruth, MethodOutput};
use sphalign::model::{CompositeWeights, PriorMatrix};
use sphalign::optim::{fit as fit_model, FitConfig, FitResult, StopReason};
use sphalign::synth::{generate_scenario, ScenarioConfig};

use crate::error::{read_failed, write_failed, CliError, CliResult};
use crate::files::{read_dataset, read_model, read_truth, write_dataset, write_model, write_truth, Dataset};
use crate::grid::{grid_search, GridOutcome};
use crate::io::{fmt_f64, read_json, read_labels, write_json};
use crate::manifest::{ReplicationStatus, RunManifest, RunStatus};

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The fit hit its iteration limit; outputs were still written.
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 3,
        }
    }
}

/// Parses `a,b,c` into composite weights.
pub fn parse_weights(text: &str) -> CliResult<CompositeWeights> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::input(format!("--weights expects w_vmf,w_sim,w_rel, got {text:?}")));
    }
    let mut w = [0.0; 3];
    for (slot, part) in w.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("--weights: cannot parse {part:?} as a number")))?;
    }
    Ok(CompositeWeights::new(w[0], w[1], w[2])?)
}

fn load_config<C: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<C> {
    match path {
        Some(p) => read_json(p),
        None => Ok(C::default()),
    }
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> CliResult<Outcome> {
    let mut cfg: ScenarioConfig = load_config(config)?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    cfg.validate().map_err(|e| CliError::input(format!("invalid scenario config: {e}")))?;
    let truth = generate_scenario(&cfg)?;
    write_dataset(out, &truth.universe, &truth.pairs, Some(&truth.heldout), Some(&truth.priors))?;
    write_truth(&out.join("truth"), &truth)?;
    write_json(&out.join("scenario.json"), &cfg)?;
    let mut manifest = RunManifest::new("simulate", &cfg, vec![cfg.rng_seed])?;
    manifest.replications.push(ReplicationStatus {
        id: "0".into(),
        seed: cfg.rng_seed,
        status: RunStatus::Ok,
        message: None,
    });
    manifest.outputs = vec!["dataset.json".into(), "truth".into()];
    write_json(&out.join("manifest.json"), &manifest)?;
    info!("simulated n = {}, {} sources into {}", cfg.n, cfg.sources.len(), out.display());
    Ok(Outcome::Success)
}

/// Options of the fit command beyond the config file.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub weights: Option<CompositeWeights>,
    pub grid_search: bool,
    pub seed: Option<u64>,
}

/// Fit configuration as resolved from the file, flags and dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitRun {
    config: FitConfig,
    grid_search: bool,
}

fn priors_for(data: &Dataset, config: &FitConfig) -> CliResult<PriorMatrix<f64>> {
    match &data.priors {
        Some(p) => Ok(p.clone()),
        None => Ok(PriorMatrix::uniform(data.meta.n, config.clusters)?),
    }
}

pub fn fit(data_dir: &Path, config: Option<&Path>, out: &Path, opts: &FitOptions) -> CliResult<Outcome> {
    let data = read_dataset(data_dir)?;
    let mut cfg: FitConfig = match config {
        Some(p) => read_json(p)?,
        None => FitConfig {
            clusters: data.meta.clusters.unwrap_or(FitConfig::default().clusters),
            ..FitConfig::default()
        },
    };
    if let Some(w) = opts.weights {
        cfg.weights = w;
    }
    if let Some(s) = opts.seed {
        cfg.rng_seed = s;
    }
    cfg.validate().map_err(|e| CliError::input(format!("invalid fit config: {e}")))?;
    let priors = priors_for(&data, &cfg)?;

    let mut grid: Option<GridOutcome> = None;
    if opts.grid_search {
        let g = grid_search(&data.universe, &priors, &data.pairs, &cfg)?;
        info!("grid search chose weights {:?}", g.chosen);
        cfg.weights = g.chosen;
        grid = Some(g);
    }
    let result = fit_model(&data.universe, &priors, &data.pairs, &cfg)?;
    let source_ids: Vec<usize> = data.universe.sources().iter().map(|s| s.source_id).collect();
    write_model(out, &result, &source_ids)?;
    if let Some(g) = &grid {
        g.write(&out.join("grid_search.csv"))?;
    }

    let outcome = fit_outcome(&result);
    let run = FitRun {
        config: cfg.clone(),
        grid_search: opts.grid_search,
    };
    write_json(&out.join("fit_config.json"), &cfg)?;
    let mut manifest = RunManifest::new("fit", &run, vec![cfg.rng_seed])?;
    manifest.replications.push(ReplicationStatus {
        id: "0".into(),
        seed: cfg.rng_seed,
        status: match outcome {
            Outcome::Success => RunStatus::Ok,
            Outcome::NotConverged => RunStatus::NotConverged,
        },
        message: Some(format!("{:?}", result.trace.stop)),
    });
    manifest.outputs = ["params.json", "v.csv", "mu.csv", "rel.csv", "labels.csv", "responsibilities.csv", "trace.csv"]
        .iter()
        .map(|f| f.to_string())
        .collect();
    if grid.is_some() {
        manifest.outputs.push("grid_search.csv".into());
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    info!(
        "fit stopped ({:?}) after {} outer iterations",
        result.trace.stop,
        result.trace.outer.len()
    );
    Ok(outcome)
}

/// Only hitting the outer iteration limit counts as non-convergence.
pub fn fit_outcome(result: &FitResult<f64>) -> Outcome {
    if result.trace.stop == StopReason::MaxOuter {
        Outcome::NotConverged
    } else {
        Outcome::Success
    }
}

/// Options of the evaluate command.
#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    /// Dataset directory supplying held-out pairs and priors.
    pub data: Option<PathBuf>,
    pub method: String,
    pub replication: usize,
}

pub const RESULT_HEADER: &[&str] = &["method", "replication", "metric", "value"];

/// Tidy rows `method, replication, metric, value` of a report.
pub fn report_rows(report: &EvalReport) -> Vec<Vec<String>> {
    report
        .metrics()
        .into_iter()
        .map(|(name, v)| {
            vec![
                report.method.clone(),
                report.replication.to_string(),
                name.to_string(),
                fmt_f64(v),
            ]
        })
        .collect()
}

fn append_rows(path: &Path, rows: &[Vec<String>]) -> CliResult<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| write_failed(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    if fresh {
        w.write_record(RESULT_HEADER).map_err(|e| write_failed(path, e))?;
    }
    for row in rows {
        w.write_record(row).map_err(|e| write_failed(path, e))?;
    }
    w.flush().map_err(|e| write_failed(path, e))
}

/// Renders metric rows as an aligned text table.
pub fn summary_table(report: &EvalReport) -> String {
    let mut s = format!("{:<20} {}\n", "metric", report.method);
    for (name, v) in report.metrics() {
        s.push_str(&format!("{name:<20} {v:.6}\n"));
    }
    s
}

pub fn evaluate(model_dir: &Path, truth: Option<&Path>, labels: Option<&Path>, out: &Path, opts: &EvaluateOptions) -> CliResult<EvalReport> {
    let model = read_model(model_dir)?;
    let truth_files = match (truth, labels) {
        (Some(dir), _) => read_truth(dir)?,
        (None, Some(file)) => crate::files::TruthFiles {
            v: None,
            mu: None,
            w: Vec::new(),
            rel: None,
            z: read_labels(file)?,
            params: None,
        },
        (None, None) => return Err(CliError::input("evaluate needs --truth or --labels")),
    };
    let n = model.state.n();
    if truth_files.z.len() != n {
        return Err(CliError::input(format!(
            "model has {n} features, truth labels have {}",
            truth_files.z.len()
        )));
    }
    if let Some(v) = &truth_files.v {
        if v.nrows() != n {
            return Err(CliError::input(format!("model has {n} features, truth v has {} rows", v.nrows())));
        }
    }
    let data = match &opts.data {
        Some(d) => Some(read_dataset(d)?),
        None => None,
    };
    if let (Some(d), Some(dir)) = (&data, &opts.data) {
        if d.meta.n != n {
            return Err(read_failed(&dir.join("dataset.json"), format!("dataset has {} features, model has {n}", d.meta.n)));
        }
    }
    let eval_ids: Vec<usize> = match truth_files.params.as_ref() {
        Some(p) => p.eval_ids.clone(),
        None => (0..n).collect(),
    };
    let method_output = MethodOutput {
        v: model.state.v.clone(),
        mu: model.state.mu.clone(),
        labels: model.state.z.clone(),
        rel: Some(model.state.rel.clone()),
        kappa: Some(model.state.kappa),
    };
    let eval_truth = EvalTruth {
        v: truth_files.v.as_ref(),
        mu: truth_files.mu.as_ref(),
        z: &truth_files.z,
        eval_ids: &eval_ids,
        heldout: data.as_ref().and_then(|d| d.heldout.as_ref()),
        priors: data.as_ref().and_then(|d| d.priors.as_ref()),
    };
    let report = evaluate_method(&opts.method, opts.replication, &method_output, &eval_truth)?;
    append_rows(out, &report_rows(&report))?;
    print!("{}", summary_table(&report));
    Ok(report)
}
