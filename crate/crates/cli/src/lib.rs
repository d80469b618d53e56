//! The `kgrelex` command line: `stats`, `train`, `evaluate`, `predict` and
//! `explain` over a TOML pipeline configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Query;
use crate::config::{load_config, PipelineConfig, SEED_ENV};
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};
use crate::pipeline::Split;

#[derive(Debug, Parser)]
#[command(name = "kgrelex", version, about = "Document-level relation extraction over a context-enriched knowledge graph")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set train.lr=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for every stochastic component (overridden by KGRELEX_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dataset statistics of document files.
    Stats {
        /// Document files; defaults to the configured splits.
        #[arg(long = "docs")]
        docs: Vec<PathBuf>,
    },
    /// Train the link predictor and reasoning scorer, write a checkpoint.
    Train {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// F1, Ign F1 and link-prediction metrics on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dev")]
        split: Split,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write thresholded relation predictions for a split.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Explain (head, relation, ?) queries with graph paths.
    Explain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "relation", conflicts_with = "queries")]
        head: Option<String>,
        #[arg(long, requires = "head")]
        relation: Option<String>,
        /// JSON Lines `{"h", "r"}` queries.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        top_n: Option<usize>,
    },
}

fn split_override(raw: &str) -> Result<(String, String), CliError> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .ok_or_else(|| CliError::usage(format!("override `{raw}` is not KEY=VALUE")))
}

impl Cli {
    /// Config-file fields first, then `--set`, then the dedicated flags.
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out: Vec<(String, String)> = self.overrides.iter().map(|s| split_override(s)).collect::<Result<_, _>>()?;
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_owned(), v));
            }
        };
        flag("seed", self.seed.map(|s| s.to_string()));
        flag("output_dir", self.output_dir.as_ref().map(|p| toml_string(&p.to_string_lossy())));
        match &self.command {
            Command::Evaluate { threshold, .. } | Command::Predict { threshold, .. } => {
                flag("aggregation.threshold", threshold.map(|t| t.to_string()));
            }
            Command::Explain { beam, max_len, top_n, .. } => {
                flag("explain.beam", beam.map(|v| v.to_string()));
                flag("explain.max_len", max_len.map(|v| v.to_string()));
                flag("explain.top_n", top_n.map(|v| v.to_string()));
            }
            _ => {}
        }
        Ok(out)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

fn checkpoint_path(cfg: &PipelineConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| cfg.output_dir.join(commands::CHECKPOINT_FILE))
}

pub fn execute(cli: &Cli, env_seed: Option<&str>) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides()?, env_seed)?;
    match &cli.command {
        Command::Stats { docs } => commands::cmd_stats(&cfg, docs).map(drop),
        Command::Train { checkpoint } => commands::cmd_train(&cfg, &checkpoint_path(&cfg, checkpoint)).map(drop),
        Command::Evaluate { checkpoint, split, .. } => {
            commands::cmd_evaluate(&cfg, &checkpoint_path(&cfg, checkpoint), *split).map(drop)
        }
        Command::Predict { checkpoint, split, .. } => {
            commands::cmd_predict(&cfg, &checkpoint_path(&cfg, checkpoint), *split).map(drop)
        }
        Command::Explain {
            checkpoint,
            head,
            relation,
            queries,
            ..
        } => {
            let queries = match (head, relation, queries) {
                (Some(h), Some(r), None) => vec![Query { h: h.clone(), r: r.clone() }],
                (None, None, Some(path)) => commands::parse_queries(path)?,
                _ => return Err(CliError::usage("explain needs --head and --relation, or --queries")),
            };
            commands::cmd_explain(&cfg, &checkpoint_path(&cfg, checkpoint), &queries).map(drop)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    match execute(&cli, env_seed.as_deref()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
