use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use edf_core::artifact::{FitConfig, ModelArtifact};
use edf_core::fairness::{evaluate_labeled, AuxFamily};
use edf_core::harness::{run_experiment, ExperimentConfig, RunOptions};
use edf_core::tabular::{
    dataset_from_table, dataset_with_encoding, rank_proxy_features, ColumnRoles, DataSpec, Table,
};
use edf_core::{EdfError, ErrorClass, Result};

#[derive(Parser, Debug)]
#[command(name = "edf", version, about = "Fairness-utility experiments with explicitly deweighted features")]
struct Cli {
    /// Overrides the seed in the config (master seed for experiments).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps worker threads; output does not depend on it.
    #[arg(long, global = true, env = "EDF_THREADS")]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a replicated holdout experiment over a deweighting grid.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Directory for summary.json, records.jsonl and table.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one model on a full CSV file and save it as JSON.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write predictions for a CSV file as a one-column CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print utility and per-category rho^2 of a saved model on a CSV file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Sensitive columns to report (raw or encoded names); default all.
        #[arg(long, value_delimiter = ',')]
        sensitive: Vec<String>,
        #[arg(long, value_enum, default_value = "knn")]
        aux: AuxChoice,
        /// Neighbors for the knn auxiliary estimate of P(S = 1 | X).
        #[arg(long, default_value_t = 25)]
        aux_k: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank features by squared correlation with a sensitive column.
    RankProxies {
        /// JSON file with `path` and column roles, instead of the flags below.
        #[arg(long, conflicts_with_all = ["data", "outcome"])]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sensitive: Vec<String>,
        #[arg(long, required_unless_present = "config")]
        outcome: Option<String>,
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        ignore: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AuxChoice {
    Knn,
    LinearProbability,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon_global(t) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}

fn rayon_global(threads: usize) -> std::result::Result<(), String> {
    if threads == 0 {
        return Err("--threads must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Experiment { config, out } => cmd_experiment(config, out.as_deref(), cli.seed),
        Command::Fit { config, out } => cmd_fit(config, out.as_deref(), cli.seed),
        Command::Predict { model, data, out } => cmd_predict(model, data, out.as_deref()),
        Command::Evaluate {
            model,
            data,
            sensitive,
            aux,
            aux_k,
            out,
        } => {
            let aux = match aux {
                AuxChoice::Knn => AuxFamily::Knn { k: *aux_k },
                AuxChoice::LinearProbability => AuxFamily::LinearProbability,
            };
            cmd_evaluate(model, data, sensitive, aux, out.as_deref())
        }
        Command::RankProxies {
            config,
            data,
            sensitive,
            outcome,
            categorical,
            ignore,
        } => {
            let spec = match config {
                Some(path) => serde_json::from_str::<DataSpec>(&read_text(path)?)?,
                None => DataSpec {
                    path: data.clone().unwrap_or_default(),
                    roles: ColumnRoles {
                        outcome: outcome.clone().unwrap_or_default(),
                        sensitive: sensitive.clone(),
                        categorical: categorical.clone(),
                        ignore: ignore.clone(),
                        ..Default::default()
                    },
                },
            };
            cmd_rank_proxies(&spec)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| EdfError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| EdfError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn stdout_text(text: &str) -> Result<()> {
    io::stdout().write_all(text.as_bytes()).map_err(|source| EdfError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn cmd_experiment(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut config = ExperimentConfig::from_json(&read_text(config_path)?)?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    info!(
        "running {} x {} units ({})",
        config.deweight_grid.len(),
        config.replications,
        config.model.name()
    );
    let outcome = run_experiment(&config, RunOptions::default())?;
    let text = outcome.table.to_text();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| EdfError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_text(&dir.join("summary.json"), &outcome.table.to_json()?)?;
        write_text(&dir.join("table.txt"), &text)?;
        let mut records = Vec::new();
        outcome.write_records(&mut records)?;
        write_text(&dir.join("records.jsonl"), &String::from_utf8_lossy(&records))?;
        info!("wrote results to {}", dir.display());
    }
    info!("standard errors:\n{}", outcome.table.standard_error_text());
    stdout_text(&text)
}

fn cmd_fit(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut config: FitConfig = serde_json::from_str(&read_text(config_path)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let artifact = ModelArtifact::fit(&config)?;
    match out {
        Some(path) => artifact.save(path),
        None => stdout_text(&(artifact.to_json()? + "\n")),
    }
}

fn cmd_predict(model: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let artifact = ModelArtifact::load(model)?;
    let table = Table::read_path(data)?;
    let pred = artifact.predict_table(&table)?;
    let mut text = String::from("prediction\n");
    for v in pred.iter() {
        text.push_str(&format!("{v}\n"));
    }
    match out {
        Some(path) => write_text(path, &text),
        None => stdout_text(&text),
    }
}

fn cmd_evaluate(model: &Path, data: &Path, sensitive: &[String], aux: AuxFamily, out: Option<&Path>) -> Result<()> {
    let artifact = ModelArtifact::load(model)?;
    let train = artifact.training_data()?;
    let eval = dataset_with_encoding(&Table::read_path(data)?, &train)?;
    let (train, eval) = if sensitive.is_empty() {
        (train, eval)
    } else {
        let mut idx = Vec::new();
        for name in sensitive {
            let found: Vec<usize> = (0..train.n_sensitive())
                .filter(|&j| train.sensitive()[j].name == *name || train.sensitive()[j].source == *name)
                .collect();
            if found.is_empty() {
                return Err(EdfError::MissingColumn(name.clone()));
            }
            idx.extend(found);
        }
        (train.select_sensitive(&idx)?, eval.select_sensitive(&idx)?)
    };
    let report = evaluate_labeled(&artifact.model, &train, &eval, aux, &data.display().to_string())?;
    if let Some(path) = out {
        write_text(path, &serde_json::to_string_pretty(&report)?)?;
    }
    stdout_text(&report.to_table())
}

fn cmd_rank_proxies(spec: &DataSpec) -> Result<()> {
    if spec.roles.sensitive.is_empty() {
        return Err(EdfError::Config("rank-proxies needs a sensitive column".into()));
    }
    let data = dataset_from_table(&Table::read_path(&spec.path)?, &spec.roles)?;
    let mut text = String::new();
    for j in 0..data.n_sensitive() {
        if data.n_sensitive() > 1 {
            text.push_str(&format!("# {}\n", data.sensitive()[j].name));
        }
        let ranked = rank_proxy_features(&data, j)?;
        let width = ranked.iter().map(|r| r.feature.len()).max().unwrap_or(0).max(7);
        text.push_str(&format!("{:<width$} | score\n", "feature"));
        for r in ranked {
            text.push_str(&format!("{:<width$} | {:.4}\n", r.feature, r.score));
        }
    }
    stdout_text(&text)
}
