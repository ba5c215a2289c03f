//! `revclean` command-line front end.

pub mod annotate;
mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use revclean_core::prediction::ErrorHandling;
use revclean_core::prompting::{InputMode, InstructionVariant};
use revclean_core::Split;

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "revclean", version, about = "Clean and evaluate code review comment datasets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; `${VAR}` is replaced from the environment.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Log request and response bodies (API key redacted).
    #[arg(long, global = true)]
    pub trace: bool,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Use the deterministic mock backend with this rule file.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw corpus and write the normalized dataset with statistics.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Label every comment as valid or noisy with a language model.
    Classify {
        #[arg(long)]
        dataset: PathBuf,
        /// `train`, `validation` or `test`.
        #[arg(long)]
        split: Option<Split>,
        /// `definition` or `auxiliary`.
        #[arg(long, value_parser = parse_enum::<InstructionVariant>)]
        instruction: Option<InstructionVariant>,
        /// `comment-only` or `comment-plus-diff`.
        #[arg(long, value_parser = parse_enum::<InputMode>)]
        input_mode: Option<InputMode>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after this many new completions; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Keep only instances predicted valid.
    Clean {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// `as-noisy`, `as-valid` or `exclude`.
        #[arg(long)]
        error_handling: Option<ErrorHandling>,
    },
    /// Draw a random subset matching the per-split sizes of a cleaned dataset.
    Control {
        #[arg(long)]
        dataset: PathBuf,
        /// `clean_report.json` from a clean run.
        #[arg(long)]
        clean_report: PathBuf,
    },
    /// Score predictions against gold labels.
    EvalClassify {
        #[arg(long)]
        dataset: PathBuf,
        /// One table row per file.
        #[arg(long, required = true)]
        predictions: Vec<PathBuf>,
        /// `as-noisy`, `as-valid` or `exclude`.
        #[arg(long)]
        error_handling: Option<ErrorHandling>,
    },
    /// BLEU-4 of generated comments, optionally against a baseline.
    EvalBleu {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// `{id, label, source}` records defining valid/noisy subsets.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        drop_stopwords: bool,
    },
    /// Cluster generated comments into topics.
    Cluster {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0.67)]
        min_coherence: f64,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Propagate representative ratings to every comment.
    QualityReport {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Label instances by hand: v(alid), n(oisy), s(kip), b(ack), q(uit).
    Annotate {
        #[arg(long)]
        dataset: PathBuf,
        /// Decision file, created or resumed.
        #[arg(long)]
        output: PathBuf,
        /// `train`, `validation` or `test`.
        #[arg(long)]
        split: Option<Split>,
        /// Another annotator's decision file; writes a kappa report.
        #[arg(long)]
        compare_with: Option<PathBuf>,
    },
    /// Uniform random sample of a split.
    Sample {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        size: usize,
        /// `train`, `validation` or `test`.
        #[arg(long)]
        split: Option<Split>,
    },
}

/// Effective settings: config file, then flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(global.config.as_deref())?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &global.out {
        cfg.out = o.clone();
    }
    if let Some(p) = global.parallelism {
        cfg.parallelism = p;
    }
    anyhow::ensure!(cfg.parallelism >= 1, "parallelism must be at least 1");
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    commands::dispatch(cli.command, cfg, cli.global.trace)
}
