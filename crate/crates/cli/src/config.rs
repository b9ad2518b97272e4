//! Experiment configuration: a flat TOML table layered over a named preset.
//!
//! Resolution order, later wins: built-in defaults, the preset named by the
//! `preset` key (or `--preset`), keys in the config file, command-line flags.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `preset` | `standard` | `standard`, `ood`, `protein` or `toy` |
//! | `dataset` | none | CSV path; header row, target last unless `target` is set |
//! | `target` | none | name of the target column |
//! | `generator` | none | `toy-cubic`, `heteroscedastic` or `blob`, used when `dataset` is unset |
//! | `rows` | 768 | generator sample count |
//! | `noise_sd` | 3.0 | toy-cubic noise standard deviation |
//! | `x_min`, `x_max` | -4, 4 | toy-cubic input range |
//! | `blob_dim` | 2 | blob dimension |
//! | `planted` | none | blob: distance of a planted outlier |
//! | `loss` | `bvm` | `mse`, `nll` or `bvm` |
//! | `epsilon` | 0.01 | agreement half-width, in scaled target units |
//! | `ensemble_size` | 5 | networks per ensemble |
//! | `hidden` | `[50]` | hidden layer widths |
//! | `head` | `sigmoid` | `sigmoid`, `identity` or `mean_softplus` |
//! | `epochs` | 40 | |
//! | `batch_size` | 32 | |
//! | `learning_rate` | 3e-4 | |
//! | `optimizer` | `adamw` | `adamw` or `adam` |
//! | `weight_decay` | 0.01 for adamw, 0 for adam | |
//! | `split` | `random` | `random` or `outlier` |
//! | `test_fraction` | 0.1 | |
//! | `repetitions` | 20 | |
//! | `normalize` | true | standardize features and map targets to [0, 1] |
//! | `seed` | 0 | master seed |
//! | `out` | `out` | output directory (output file for `generate`) |
//! | `threads` | 0 | worker threads, 0 for all cores; never changes results |

use std::path::{Path, PathBuf};
use std::str::FromStr;

use bvmreg::ensemble::TrainSchedule;
use bvmreg::nn::{HeadActivation, OptimizerConfig, OptimizerKind};
use bvmreg::{LossKind, LossSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Random,
    Outlier,
}

impl FromStr for SplitMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "random" => Ok(SplitMode::Random),
            "outlier" => Ok(SplitMode::Outlier),
            other => Err(CliError::Usage(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    ToyCubic,
    Heteroscedastic,
    Blob,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::ToyCubic => "toy-cubic",
            Generator::Heteroscedastic => "heteroscedastic",
            Generator::Blob => "blob",
        }
    }
}

impl FromStr for Generator {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "toy-cubic" => Ok(Generator::ToyCubic),
            "heteroscedastic" => Ok(Generator::Heteroscedastic),
            "blob" => Ok(Generator::Blob),
            other => Err(CliError::Usage(format!("unknown generator `{other}`"))),
        }
    }
}

/// Fully resolved settings of one run. Written next to every output so the
/// run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generator: Option<Generator>,
    pub rows: usize,
    pub noise_sd: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub blob_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub planted: Option<f64>,
    pub loss: LossKind,
    pub epsilon: f64,
    pub ensemble_size: usize,
    pub hidden: Vec<usize>,
    pub head: HeadActivation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub split: SplitMode,
    pub test_fraction: f64,
    pub repetitions: usize,
    pub normalize: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "standard".into(),
            dataset: None,
            target: None,
            generator: None,
            rows: 768,
            noise_sd: 3.0,
            x_min: -4.0,
            x_max: 4.0,
            blob_dim: 2,
            planted: None,
            loss: LossKind::Bvm,
            epsilon: bvmreg::losses::DEFAULT_EPSILON,
            ensemble_size: 5,
            hidden: vec![50],
            head: HeadActivation::Sigmoid,
            epochs: 40,
            batch_size: 32,
            learning_rate: 3e-4,
            optimizer: OptimizerKind::AdamW,
            weight_decay: 0.01,
            split: SplitMode::Random,
            test_fraction: 0.1,
            repetitions: 20,
            normalize: true,
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
        }
    }
}

/// Every key optional; used for presets, config files and flags alike.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub preset: Option<String>,
    pub dataset: Option<PathBuf>,
    pub target: Option<String>,
    pub generator: Option<Generator>,
    pub rows: Option<usize>,
    pub noise_sd: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub blob_dim: Option<usize>,
    pub planted: Option<f64>,
    pub loss: Option<LossKind>,
    pub epsilon: Option<f64>,
    pub ensemble_size: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub head: Option<HeadActivation>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub weight_decay: Option<f64>,
    pub split: Option<SplitMode>,
    pub test_fraction: Option<f64>,
    pub repetitions: Option<usize>,
    pub normalize: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),*) => {
        $(if let Some(v) = $src.$f.clone() { $dst.$f = v; })*
    };
}

impl ConfigPatch {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Keys set in `other` replace those set here.
    pub fn merge(mut self, other: ConfigPatch) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $(if other.$f.is_some() { self.$f = other.$f; })* };
        }
        take!(
            preset,
            dataset,
            target,
            generator,
            rows,
            noise_sd,
            x_min,
            x_max,
            blob_dim,
            planted,
            loss,
            epsilon,
            ensemble_size,
            hidden,
            head,
            epochs,
            batch_size,
            learning_rate,
            optimizer,
            weight_decay,
            split,
            test_fraction,
            repetitions,
            normalize,
            seed,
            out,
            threads
        );
        self
    }

    fn apply_to(&self, c: &mut ExperimentConfig) {
        overlay!(c, self;
            rows, noise_sd, x_min, x_max, blob_dim, loss, epsilon, ensemble_size, hidden, head, epochs,
            batch_size, learning_rate, optimizer, weight_decay, split, test_fraction, repetitions, normalize,
            seed, out, threads);
        if self.dataset.is_some() {
            c.dataset = self.dataset.clone();
        }
        if self.target.is_some() {
            c.target = self.target.clone();
        }
        if self.generator.is_some() {
            c.generator = self.generator;
        }
        if self.planted.is_some() {
            c.planted = self.planted;
        }
    }
}

/// Names accepted by `preset`.
pub const PRESETS: [&str; 4] = ["standard", "ood", "protein", "toy"];

/// Settings of a named preset, as a patch over the defaults.
pub fn preset(name: &str) -> Result<ConfigPatch, CliError> {
    let p = match name {
        "standard" => ConfigPatch::default(),
        // outlier splitting runs: Adam at a fixed 3e-3 on batches of 16
        "ood" => ConfigPatch {
            split: Some(SplitMode::Outlier),
            optimizer: Some(OptimizerKind::Adam),
            weight_decay: Some(0.0),
            learning_rate: Some(3e-3),
            batch_size: Some(16),
            repetitions: Some(5),
            ..Default::default()
        },
        "protein" => ConfigPatch {
            hidden: Some(vec![100]),
            repetitions: Some(5),
            ..Default::default()
        },
        // unscaled one-dimensional cubic; the schedule is this crate's choice
        "toy" => ConfigPatch {
            generator: Some(Generator::ToyCubic),
            rows: Some(20),
            noise_sd: Some(3.0),
            epsilon: Some(1.0),
            hidden: Some(vec![100]),
            head: Some(HeadActivation::MeanSoftplus),
            normalize: Some(false),
            epochs: Some(2000),
            batch_size: Some(20),
            learning_rate: Some(5e-3),
            repetitions: Some(20),
            ..Default::default()
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(p)
}

impl ExperimentConfig {
    /// Defaults, then the preset the patch names, then the patch itself.
    pub fn resolve(patch: &ConfigPatch) -> Result<Self, CliError> {
        let name = patch.preset.clone().unwrap_or_else(|| "standard".into());
        let mut c = ExperimentConfig {
            preset: name.clone(),
            ..Default::default()
        };
        preset(&name)?.apply_to(&mut c);
        patch.apply_to(&mut c);
        if patch.optimizer == Some(OptimizerKind::Adam) && patch.weight_decay.is_none() {
            c.weight_decay = 0.0;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.dataset.is_some() && self.generator.is_some() {
            return bad("set either `dataset` or `generator`, not both".into());
        }
        if self.ensemble_size == 0 || self.repetitions == 0 || self.rows == 0 {
            return bad("ensemble_size, repetitions and rows must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        self.loss_spec().validate().map_err(CliError::from_usage)?;
        self.schedule().validate().map_err(CliError::from_usage)?;
        Ok(())
    }

    pub fn loss_spec(&self) -> LossSpec {
        self.loss_spec_for(self.loss)
    }

    /// Same knobs, different criterion.
    pub fn loss_spec_for(&self, kind: LossKind) -> LossSpec {
        match kind {
            LossKind::Mse => LossSpec::mse(),
            LossKind::Nll => LossSpec::nll(),
            LossKind::Bvm => LossSpec::bvm(self.epsilon),
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        let base = match self.optimizer {
            OptimizerKind::AdamW => OptimizerConfig::adamw(self.learning_rate),
            OptimizerKind::Adam => OptimizerConfig::adam(self.learning_rate),
        };
        TrainSchedule {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerConfig {
                weight_decay: self.weight_decay,
                ..base
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn run_metadata(&self, kind: LossKind) -> bvmreg::eval::RunMetadata {
        bvmreg::eval::RunMetadata {
            seed: self.seed,
            loss: kind.as_str().into(),
            epsilon: self.epsilon,
            ensemble_size: self.ensemble_size,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            optimizer: match self.optimizer {
                OptimizerKind::AdamW => "adamw".into(),
                OptimizerKind::Adam => "adam".into(),
            },
        }
    }
}
