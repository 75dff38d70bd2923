use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sphalign_cli::benchmark::{benchmark, BenchmarkConfig};
use sphalign_cli::commands::{self, parse_weights, EvaluateOptions, FitOptions, Outcome};
use sphalign_cli::io::read_json;
use sphalign_cli::CliResult;

#[derive(Parser)]
#[command(name = "sphalign", version, about = "Spherical mixture alignment of multi-source embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: sources, pairs, priors and truth.
    Simulate {
        /// Scenario config (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the model to a dataset directory.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Fit config (JSON); defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Composite weights as w_vmf,w_sim,w_rel.
        #[arg(long)]
        weights: Option<String>,
        /// Choose the weights over {0.1, 1, 10}^3 on a validation split.
        #[arg(long)]
        grid_search: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a fitted model against a truth directory or a labels file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, conflicts_with = "truth")]
        labels: Option<PathBuf>,
        /// Dataset directory supplying held-out pairs and priors.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Results CSV; rows are appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "sphalign")]
        method: String,
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Run a simulation sweep with the model and both baselines.
    Benchmark {
        /// Setting 1 (sources), 2 (kappa), 3 (clusters) or 4 (pair share).
        #[arg(long)]
        setting: Option<u8>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weights: Option<String>,
        /// Benchmark config (JSON); flags override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(config.as_deref(), &out, seed),
        Command::Fit {
            data,
            config,
            out,
            weights,
            grid_search,
            seed,
        } => {
            let opts = FitOptions {
                weights: weights.as_deref().map(parse_weights).transpose()?,
                grid_search,
                seed,
            };
            commands::fit(&data, config.as_deref(), &out, &opts)
        }
        Command::Evaluate {
            model,
            truth,
            labels,
            data,
            out,
            method,
            replication,
        } => {
            let opts = EvaluateOptions { data, method, replication };
            commands::evaluate(&model, truth.as_deref(), labels.as_deref(), &out, &opts)?;
            Ok(Outcome::Success)
        }
        Command::Benchmark {
            setting,
            scale,
            reps,
            out,
            threads,
            seed,
            weights,
            config,
        } => {
            let mut cfg: BenchmarkConfig = match config {
                Some(p) => read_json(&p)?,
                None => BenchmarkConfig::default(),
            };
            if let Some(s) = setting {
                cfg.setting = s;
            }
            if let Some(s) = scale {
                cfg.scale = s;
            }
            if let Some(r) = reps {
                cfg.replications = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = weights {
                cfg.weights = parse_weights(&w)?;
            }
            benchmark(&cfg, threads, &out)?;
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            if outcome == Outcome::NotConverged {
                log::warn!("fit reached the outer iteration limit; the model was written");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
