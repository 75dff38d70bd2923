//! Seeded benchmark sweeps over the four simulation settings.
//!
//! Setting 1 varies the number of sources, setting 2 the latent
//! concentration, setting 3 the number of clusters and setting 4 the share of
//! labeled pairs; everything else stays at kappa = 150, K = 50, L = 3 and 6%
//! pairs, with n = 1000 and K scaled by the scale factor. Replication `r` of
//! every cell uses seed `root + r`, so cells are paired.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sphalign::baselines::{cluster_centers, hclust, impute_missing, kmeans_euclidean, svd_concat_embed};
use sphalign::eval::{evaluate, quantiles, EvalReport, EvalTruth, MethodOutput};
use sphalign::model::{CompositeWeights, FeatureUniverse};
use sphalign::optim::{fit, FitConfig, StopReason};
use sphalign::synth::{default_sources, generate_scenario, PairFractions, ScenarioConfig};

use crate::error::{CliError, CliResult};
use crate::io::{create_dir, fmt_f64, write_json, write_rows};
use crate::manifest::{ReplicationStatus, RunManifest, RunStatus};

pub const METHODS: [&str; 3] = ["sphalign", "svd-kmeans", "svd-hclust"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub setting: u8,
    pub scale: f64,
    pub replications: usize,
    /// Root seed; replication `r` uses `seed + r`.
    pub seed: u64,
    pub weights: CompositeWeights,
    pub rank: usize,
    pub source_dim: usize,
    pub kmeans_restarts: usize,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            setting: 2,
            scale: 1.0,
            replications: 20,
            seed: 0,
            weights: CompositeWeights::default(),
            rank: 6,
            source_dim: 200,
            kmeans_restarts: 10,
            max_outer: fit.max_outer,
            max_inner: fit.max_inner,
        }
    }
}

/// One level of the swept parameter.
#[derive(Debug, Clone)]
pub struct Cell {
    pub parameter: &'static str,
    pub level: f64,
    pub scenario: ScenarioConfig,
}

fn scaled(base: f64, scale: f64) -> usize {
    (base * scale).round() as usize
}

impl BenchmarkConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(1..=4).contains(&self.setting) {
            return Err(CliError::input(format!("setting must be 1, 2, 3 or 4, got {}", self.setting)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(CliError::input(format!("scale must be finite and > 0, got {}", self.scale)));
        }
        if self.replications < 1 {
            return Err(CliError::input("replications must be >= 1"));
        }
        if self.kmeans_restarts < 1 {
            return Err(CliError::input("kmeans_restarts must be >= 1"));
        }
        self.weights.validate()?;
        for cell in self.cells() {
            if cell.scenario.clusters < 2 {
                return Err(CliError::input(format!("scale {} leaves fewer than 2 clusters", self.scale)));
            }
            cell.scenario
                .validate()
                .map_err(|e| CliError::input(format!("{} = {}: {e}", cell.parameter, cell.level)))?;
        }
        self.fit_config(2, 0).validate()?;
        Ok(())
    }

    fn base_scenario(&self) -> ScenarioConfig {
        let pairs = PairFractions::preset(0.06).expect("preset exists");
        ScenarioConfig {
            n: scaled(1000.0, self.scale),
            clusters: scaled(50.0, self.scale),
            rank: self.rank,
            kappa: 150.0,
            sources: default_sources(3, self.source_dim),
            sim: pairs,
            rel: pairs,
            ..ScenarioConfig::default()
        }
    }

    /// The swept cells of the configured setting, in sweep order.
    pub fn cells(&self) -> Vec<Cell> {
        let base = self.base_scenario();
        let cell = |parameter, level, scenario| Cell { parameter, level, scenario };
        match self.setting {
            1 => [2, 3, 4]
                .iter()
                .map(|&l| {
                    let s = ScenarioConfig { sources: default_sources(l, self.source_dim), ..base.clone() };
                    cell("sources", l as f64, s)
                })
                .collect(),
            2 => [100.0, 150.0, 200.0]
                .iter()
                .map(|&kappa| cell("kappa", kappa, ScenarioConfig { kappa, ..base.clone() }))
                .collect(),
            3 => [50.0, 100.0]
                .iter()
                .map(|&k| {
                    let clusters = scaled(k, self.scale);
                    cell("clusters", clusters as f64, ScenarioConfig { clusters, ..base.clone() })
                })
                .collect(),
            _ => [0.04, 0.06, 0.08]
                .iter()
                .map(|&f| {
                    let p = PairFractions::preset(f).expect("preset exists");
                    cell("pair_fraction", f, ScenarioConfig { sim: p, rel: p, ..base.clone() })
                })
                .collect(),
        }
    }

    pub fn fit_config(&self, clusters: usize, seed: u64) -> FitConfig {
        FitConfig {
            weights: self.weights,
            rank: self.rank,
            clusters,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            rng_seed: seed,
            ..FitConfig::default()
        }
    }
}

/// SVD-concatenation embedding of the imputed sources, clustered by
/// Euclidean k-means and by average-linkage hierarchical clustering.
pub fn baseline_outputs(universe: &FeatureUniverse<f64>, rank: usize, k: usize, seed: u64, restarts: usize) -> sphalign::Result<Vec<(&'static str, MethodOutput)>> {
    let n = universe.n();
    let reference = universe
        .sources()
        .iter()
        .position(|s| s.len() == n)
        .ok_or_else(|| sphalign::Error::Domain("no source covers every feature".into()))?;
    let imputed = impute_missing(universe, reference, rank)?;
    let emb = svd_concat_embed(&imputed, rank)?;
    let km = kmeans_euclidean(&emb, k, seed, restarts)?;
    let hc = hclust(&emb, k)?;
    let mut out = Vec::new();
    for (name, labels) in [("svd-kmeans", km.labels), ("svd-hclust", hc)] {
        let centers = cluster_centers(&emb, &labels, k)?.centers;
        out.push((
            name,
            MethodOutput {
                v: emb.clone(),
                mu: centers,
                labels,
                rel: None,
                kappa: None,
            },
        ));
    }
    Ok(out)
}

/// Result of one replication of one cell.
#[derive(Debug, Clone)]
pub struct JobResult {
    pub cell: usize,
    pub replication: usize,
    pub seed: u64,
    pub reports: Vec<EvalReport>,
    pub statuses: Vec<(String, RunStatus, Option<String>)>,
}

fn run_job(config: &BenchmarkConfig, cell_index: usize, cell: &Cell, rep: usize) -> JobResult {
    let seed = config.seed + rep as u64;
    let mut job = JobResult {
        cell: cell_index,
        replication: rep,
        seed,
        reports: Vec::new(),
        statuses: Vec::new(),
    };
    let started = Instant::now();
    let scenario = ScenarioConfig { rng_seed: seed, ..cell.scenario.clone() };
    let truth = match generate_scenario(&scenario) {
        Ok(t) => t,
        Err(e) => {
            for m in METHODS {
                job.statuses.push((m.to_string(), RunStatus::Failed, Some(format!("simulation: {e}"))));
            }
            return job;
        }
    };
    let k = scenario.clusters;
    let eval_truth = EvalTruth {
        v: Some(&truth.v),
        mu: Some(&truth.mu),
        z: &truth.z,
        eval_ids: &truth.eval_ids,
        heldout: Some(&truth.heldout),
        priors: Some(&truth.priors),
    };

    let fit_cfg = config.fit_config(k, seed);
    let ours = fit(&truth.universe, &truth.priors, &truth.pairs, &fit_cfg).and_then(|r| {
        let status = if r.trace.stop == StopReason::MaxOuter {
            RunStatus::NotConverged
        } else {
            RunStatus::Ok
        };
        let out = MethodOutput {
            v: r.state.v,
            mu: r.state.mu,
            labels: r.state.z,
            rel: Some(r.state.rel),
            kappa: Some(r.state.kappa),
        };
        Ok((status, evaluate(METHODS[0], rep, &out, &eval_truth)?))
    });
    match ours {
        Ok((status, report)) => {
            job.reports.push(report);
            job.statuses.push((METHODS[0].to_string(), status, None));
        }
        Err(e) => job.statuses.push((METHODS[0].to_string(), RunStatus::Failed, Some(e.to_string()))),
    }

    match baseline_outputs(&truth.universe, config.rank, k, seed, config.kmeans_restarts) {
        Ok(outputs) => {
            for (name, out) in outputs {
                match evaluate(name, rep, &out, &eval_truth) {
                    Ok(r) => {
                        job.reports.push(r);
                        job.statuses.push((name.to_string(), RunStatus::Ok, None));
                    }
                    Err(e) => job.statuses.push((name.to_string(), RunStatus::Failed, Some(e.to_string()))),
                }
            }
        }
        Err(e) => {
            for name in &METHODS[1..] {
                job.statuses.push((name.to_string(), RunStatus::Failed, Some(e.to_string())));
            }
        }
    }
    info!(
        "{} = {} replication {rep} done in {:.1} s",
        cell.parameter,
        cell.level,
        started.elapsed().as_secs_f64()
    );
    job
}

/// One tidy result row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub setting: u8,
    pub parameter: String,
    pub level: f64,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

pub const RESULTS_HEADER: &[&str] = &["setting", "parameter", "level", "replication", "seed", "method", "metric", "value"];
pub const SUMMARY_HEADER: &[&str] = &["setting", "parameter", "level", "method", "metric", "median", "q1", "q3", "count"];

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
}

/// Runs every (cell, replication) job on a pool of `threads` workers and
/// collects the rows in sweep order.
pub fn run_benchmark(config: &BenchmarkConfig, threads: Option<usize>) -> CliResult<BenchmarkOutput> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.replications).map(move |r| (c, r)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::internal(e.to_string()))?;
    let results: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_job(config, c, &cells[c], r))
            .collect()
    });

    let seeds = (0..config.replications as u64).map(|r| config.seed + r).collect();
    let mut manifest = RunManifest::new("benchmark", config, seeds)?;
    let mut rows = Vec::new();
    for job in &results {
        let cell = &cells[job.cell];
        for (method, status, message) in &job.statuses {
            if *status == RunStatus::Failed {
                warn!("{} = {} replication {} {method} failed: {}", cell.parameter, cell.level, job.replication, message.as_deref().unwrap_or(""));
            }
            manifest.replications.push(ReplicationStatus {
                id: format!("{}={}/rep{}/{method}", cell.parameter, fmt_f64(cell.level), job.replication),
                seed: job.seed,
                status: status.clone(),
                message: message.clone(),
            });
        }
        for report in &job.reports {
            for (metric, value) in report.metrics() {
                rows.push(ResultRow {
                    setting: config.setting,
                    parameter: cell.parameter.to_string(),
                    level: cell.level,
                    replication: job.replication,
                    seed: job.seed,
                    method: report.method.clone(),
                    metric: metric.to_string(),
                    value,
                });
            }
        }
    }
    Ok(BenchmarkOutput { rows, manifest })
}

/// Median and quartiles per (cell, method, metric), ignoring NaN values.
pub fn summarize(rows: &[ResultRow]) -> Vec<Vec<String>> {
    let mut keys: Vec<(u8, String, f64, String, String)> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let key = (r.setting, r.parameter.clone(), r.level, r.method.clone(), r.metric.clone());
        let idx = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                groups.push(Vec::new());
                keys.len() - 1
            }
        };
        if !r.value.is_nan() {
            groups[idx].push(r.value);
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|((setting, parameter, level, method, metric), values)| {
            let q = quantiles(&values);
            vec![
                setting.to_string(),
                parameter,
                fmt_f64(level),
                method,
                metric,
                fmt_f64(q[2]),
                fmt_f64(q[1]),
                fmt_f64(q[3]),
                values.len().to_string(),
            ]
        })
        .collect()
}

fn result_fields(r: &ResultRow) -> Vec<String> {
    vec![
        r.setting.to_string(),
        r.parameter.clone(),
        fmt_f64(r.level),
        r.replication.to_string(),
        r.seed.to_string(),
        r.method.clone(),
        r.metric.clone(),
        fmt_f64(r.value),
    ]
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Runs the sweep and writes `results.csv`, `summary.csv`, `benchmark.json`
/// and `manifest.json` into `out`.
pub fn benchmark(config: &BenchmarkConfig, threads: Option<usize>, out: &Path) -> CliResult<BenchmarkOutput> {
    let mut result = run_benchmark(config, threads)?;
    create_dir(out)?;
    write_rows(&out.join("results.csv"), &header(RESULTS_HEADER), result.rows.iter().map(result_fields))?;
    write_rows(&out.join("summary.csv"), &header(SUMMARY_HEADER), summarize(&result.rows))?;
    write_json(&out.join("benchmark.json"), config)?;
    // relative to the output directory, so reruns elsewhere match
    result.manifest.outputs = ["results.csv", "summary.csv", "benchmark.json"].iter().map(|f| f.to_string()).collect();
    write_json(&out.join("manifest.json"), &result.manifest)?;
    Ok(result)
}
