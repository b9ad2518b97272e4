//! Command-line experiment harness for `bvmreg`.
//!
//! Every subcommand resolves an [`ExperimentConfig`](config::ExperimentConfig)
//! from defaults, a preset, an optional TOML file and flags, writes the
//! resolved config into the output directory, and emits JSON and CSV only.

pub mod config;
pub mod error;
pub mod harness;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ConfigPatch, ExperimentConfig, Generator, SplitMode};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bvmreg", version, about = "Train and evaluate regression ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its provenance sidecar.
    Generate(CommonArgs),
    /// Repeated split / train / evaluate with a mean ± standard-error summary.
    Benchmark(CommonArgs),
    /// NLL- and BVM-trained ensembles on the same outlier splits.
    OodBenchmark(CommonArgs),
    /// Reliability curves for MSE, NLL and BVM ensembles.
    Calibrate(CommonArgs),
    /// Write the split manifests a benchmark would use.
    Split(CommonArgs),
    /// Predictive envelope on the one-dimensional cubic.
    Toy(CommonArgs),
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_opt<T: std::str::FromStr>(v: &Option<String>) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    v.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(e.to_string())))
        .transpose()
}

impl CommonArgs {
    fn patch(&self) -> Result<ConfigPatch, CliError> {
        Ok(ConfigPatch {
            preset: self.preset.clone(),
            dataset: self.dataset.clone(),
            target: self.target.clone(),
            generator: parse_opt::<Generator>(&self.generator)?,
            rows: self.rows,
            noise_sd: self.noise_sd,
            loss: parse_opt(&self.loss)?,
            epsilon: self.epsilon,
            ensemble_size: self.ensemble_size,
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: parse_opt(&self.optimizer)?,
            weight_decay: self.weight_decay,
            split: parse_opt::<SplitMode>(&self.split)?,
            test_fraction: self.test_fraction,
            repetitions: self.repetitions,
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
            ..Default::default()
        })
    }

    /// Config file (if any) overlaid with the flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(p) => ConfigPatch::read(p)?,
            None => ConfigPatch::default(),
        };
        ExperimentConfig::resolve(&file.merge(self.patch()?))
    }
}

/// Runs one subcommand and returns the line printed on success.
pub fn run(cmd: &Command) -> Result<serde_json::Value, CliError> {
    match cmd {
        Command::Generate(a) => {
            let c = a.resolve()?;
            let path = harness::generate_file(&c)?;
            Ok(json!({ "command": "generate", "file": path }))
        }
        Command::Benchmark(a) => {
            let c = a.resolve()?;
            let s = harness::benchmark(&c)?;
            Ok(json!({
                "command": "benchmark",
                "dataset": s.dataset,
                "loss": s.loss,
                "completed": s.completed,
                "aborted": s.aborted.len(),
                "rmse": s.rmse,
                "nll": s.nll,
                "summary": c.out.join("summary.json"),
            }))
        }
        Command::OodBenchmark(a) => {
            let c = a.resolve()?;
            let s = harness::ood_benchmark(&c)?;
            Ok(json!({
                "command": "ood-benchmark",
                "dataset": s.dataset,
                "completed": s.completed,
                "bvm_wins": s.bvm_wins,
                "nll_ensemble_nll": s.nll_ensemble_nll,
                "bvm_ensemble_nll": s.bvm_ensemble_nll,
                "summary": c.out.join("summary.json"),
            }))
        }
        Command::Calibrate(a) => {
            let c = a.resolve()?;
            let s = harness::calibrate(&c)?;
            Ok(json!({
                "command": "calibrate",
                "dataset": s.dataset,
                "max_abs_deviation": {
                    "mse": s.mse.max_abs_deviation(),
                    "nll": s.nll.max_abs_deviation(),
                    "bvm": s.bvm.max_abs_deviation(),
                },
                "summary": c.out.join("summary.json"),
            }))
        }
        Command::Split(a) => {
            let c = a.resolve()?;
            let records = harness::split(&c)?;
            Ok(json!({ "command": "split", "manifests": records.len(), "summary": c.out.join("splits.json") }))
        }
        Command::Toy(a) => {
            let mut patch = ConfigPatch::default();
            if a.preset.is_none() {
                patch.preset = Some("toy".into());
            }
            let file = match &a.config {
                Some(p) => ConfigPatch::read(p)?,
                None => ConfigPatch::default(),
            };
            let c = ExperimentConfig::resolve(&patch.merge(file).merge(a.patch()?))?;
            let s = harness::toy(&c)?;
            Ok(json!({
                "command": "toy",
                "envelope_grows": s.envelope_grows,
                "repetitions": s.reps.len(),
                "coverage": s.coverage,
                "summary": c.out.join("summary.json"),
            }))
        }
    }
}
