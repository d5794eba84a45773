//! Experiment configuration files, embedded presets and dotted overrides.
//!
//! A configuration is a TOML document:
//!
//! ```toml
//! trainer = "smpl"          # smpl | supervised | pseudo_labels | mpl
//! seed = 0                  # data, init, dropout and batching streams
//!
//! [data]                    # kind = "moons" | "micro_image"
//! kind = "moons"
//! n_samples = 2000
//! noise_std = 0.1
//! n_labeled = 6
//!
//! [model]
//! hidden = [8, 8]
//!
//! [train]
//! lr1 = 0.1
//! lr2 = 0.1
//! steps = 1000
//!
//! [losses]
//! label_smoothing = 0.1
//! lambda = 1.0
//! confidence_threshold = 0.8
//!
//! [batch]
//! labeled = 6
//! unlabeled = 128
//! ```
//!
//! Omitted keys take the defaults of [`ExperimentConfig::default`]; unknown
//! keys are rejected. Overrides of the form `section.key=value` are applied
//! to the parsed document before it is interpreted, with `value` read as a
//! TOML literal (falling back to a bare string).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentOp, JitterConfig, RandAugmentConfig};
use crate::data::{
    make_micro_images, make_moons, BatchPlan, MicroImageConfig, MoonsConfig, SslDataset,
};
use crate::error::{Error, Result};
use crate::losses::{DeltaMode, DeltaSign, MaskReduction, MplConfig, UdaConfig};
use crate::nn::LrSchedule;
use crate::trainers::{AugmentPolicy, FinetuneConfig, OptimConfig, TrainConfig, TrainerKind};

/// Names of the embedded presets.
pub const PRESET_NAMES: [&str; 6] = [
    "moons-smpl",
    "moons-supervised",
    "moons-pseudo",
    "moons-mpl",
    "micro-image-smpl",
    "micro-image-supervised",
];

/// Source text of an embedded preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "moons-smpl" => include_str!("../presets/moons-smpl.toml"),
        "moons-supervised" => include_str!("../presets/moons-supervised.toml"),
        "moons-pseudo" => include_str!("../presets/moons-pseudo.toml"),
        "moons-mpl" => include_str!("../presets/moons-mpl.toml"),
        "micro-image-smpl" => include_str!("../presets/micro-image-smpl.toml"),
        "micro-image-supervised" => include_str!("../presets/micro-image-supervised.toml"),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Moons {
        #[serde(default = "d_moons_n")]
        n_samples: usize,
        #[serde(default = "d_moons_noise")]
        noise_std: f64,
        #[serde(default = "d_moons_labeled")]
        n_labeled: usize,
        #[serde(default = "d_true")]
        stratify: bool,
    },
    MicroImage {
        #[serde(default = "d_micro_n")]
        n_samples: usize,
        #[serde(default = "d_micro_labeled")]
        n_labeled: usize,
        #[serde(default = "d_micro_size")]
        size: usize,
        #[serde(default = "d_micro_noise")]
        noise_std: f64,
        #[serde(default = "d_micro_blob")]
        blob_std: f64,
    },
}

fn d_moons_n() -> usize {
    MoonsConfig::default().n_samples
}
fn d_moons_noise() -> f64 {
    MoonsConfig::default().noise_std
}
fn d_moons_labeled() -> usize {
    MoonsConfig::default().n_labeled
}
fn d_micro_n() -> usize {
    MicroImageConfig::default().n_samples
}
fn d_micro_labeled() -> usize {
    MicroImageConfig::default().n_labeled
}
fn d_micro_size() -> usize {
    MicroImageConfig::default().size
}
fn d_micro_noise() -> f64 {
    MicroImageConfig::default().noise_std
}
fn d_micro_blob() -> f64 {
    MicroImageConfig::default().blob_std
}
fn d_true() -> bool {
    true
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Moons {
            n_samples: d_moons_n(),
            noise_std: d_moons_noise(),
            n_labeled: d_moons_labeled(),
            stratify: true,
        }
    }
}

impl DataConfig {
    pub fn build(&self, seed: u64) -> Result<SslDataset> {
        match *self {
            DataConfig::Moons {
                n_samples,
                noise_std,
                n_labeled,
                stratify,
            } => make_moons(&MoonsConfig {
                n_samples,
                noise_std,
                n_labeled,
                seed,
                stratify,
            }),
            DataConfig::MicroImage {
                n_samples,
                n_labeled,
                size,
                noise_std,
                blob_std,
            } => make_micro_images(&MicroImageConfig {
                n_samples,
                n_labeled,
                size,
                noise_std,
                blob_std,
                seed,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: vec![8, 8] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr1: f64,
    /// Defaults to `lr1` when omitted.
    pub lr2: Option<f64>,
    pub steps: usize,
    pub dropout_rate: f64,
    pub mask_step_one: bool,
    pub trajectory_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr1: 0.1,
            lr2: None,
            steps: 1000,
            dropout_rate: 0.0,
            mask_step_one: true,
            trajectory_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossesSection {
    pub label_smoothing: f64,
    pub lambda: f64,
    pub ema_decay: f64,
    pub delta_sign: DeltaSign,
    pub delta_mode: DeltaMode,
    pub beta0: f64,
    pub warmup_steps: usize,
    pub confidence_threshold: f64,
    pub target_temperature: f64,
    pub mask_reduction: MaskReduction,
}

impl Default for LossesSection {
    fn default() -> Self {
        let uda = UdaConfig::default();
        let mpl = MplConfig::default();
        Self {
            label_smoothing: 0.0,
            lambda: mpl.lambda,
            ema_decay: mpl.ema_decay,
            delta_sign: mpl.delta_sign,
            delta_mode: mpl.delta_mode,
            beta0: uda.beta0,
            warmup_steps: uda.warmup_steps,
            confidence_threshold: uda.confidence_threshold,
            target_temperature: uda.target_temperature,
            mask_reduction: uda.mask_reduction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSection {
    pub labeled: usize,
    pub unlabeled: usize,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            labeled: 6,
            unlabeled: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub clip_norm: Option<f64>,
    pub schedule: ScheduleKind,
    pub momentum: Option<f64>,
}

/// `"constant"` or `"cosine"`; the cosine horizon is `train.steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentSection {
    #[default]
    None,
    Jitter {
        noise_std: f64,
    },
    RandAugment {
        #[serde(default = "d_num_ops")]
        num_ops: usize,
        #[serde(default = "d_magnitude")]
        magnitude: u32,
        #[serde(default = "d_true")]
        cutout: bool,
        #[serde(default)]
        ops: Vec<AugmentOp>,
    },
}

fn d_num_ops() -> usize {
    RandAugmentConfig::default().num_ops
}
fn d_magnitude() -> u32 {
    RandAugmentConfig::default().magnitude
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let f = FinetuneConfig::default();
        Self {
            lr: f.lr,
            epochs: f.epochs,
            batch_size: f.batch_size,
        }
    }
}

/// A complete, file-level experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trainer: TrainerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub losses: LossesSection,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub finetune: Option<FinetuneSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trainer: TrainerKind::Smpl,
            seed: 0,
            data: DataConfig::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            losses: LossesSection::default(),
            batch: BatchSection::default(),
            optim: OptimSection::default(),
            augment: AugmentSection::default(),
            finetune: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(source: &str) -> Result<Self> {
        Self::from_table(parse_table(source)?)
    }

    /// Interprets and validates an already-parsed document.
    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let src = preset_source(name).ok_or_else(|| {
            Error::config(format!(
                "unknown preset '{name}'; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?;
        Self::from_toml_str(src)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Same experiment under another seed: data, initialisation, dropout,
    /// augmentation and batch order all follow it.
    #[must_use]
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden widths must be >= 1"));
        }
        if matches!(self.augment, AugmentSection::RandAugment { .. })
            && !matches!(self.data, DataConfig::MicroImage { .. })
        {
            return Err(Error::config(
                "augment.kind = \"rand_augment\" requires data.kind = \"micro_image\"",
            ));
        }
        self.train_config().validate()
    }

    pub fn dataset(&self) -> Result<SslDataset> {
        self.data.build(self.seed)
    }

    /// The programmatic training configuration this file describes.
    pub fn train_config(&self) -> TrainConfig {
        let l = &self.losses;
        let schedule = match self.optim.schedule {
            ScheduleKind::Constant => LrSchedule::Constant,
            ScheduleKind::Cosine => LrSchedule::Cosine {
                total_steps: self.train.steps.max(1),
            },
        };
        let augment = match &self.augment {
            AugmentSection::None => AugmentPolicy::None,
            AugmentSection::Jitter { noise_std } => AugmentPolicy::Jitter(JitterConfig {
                noise_std: *noise_std,
            }),
            AugmentSection::RandAugment {
                num_ops,
                magnitude,
                cutout,
                ops,
            } => AugmentPolicy::RandAugment(RandAugmentConfig {
                num_ops: *num_ops,
                magnitude: *magnitude,
                seed: self.seed,
                cutout: *cutout,
                ops: ops.clone(),
            }),
        };
        TrainConfig {
            lr1: self.train.lr1,
            lr2: self.train.lr2.unwrap_or(self.train.lr1),
            steps: self.train.steps,
            seed: self.seed,
            hidden: self.model.hidden.clone(),
            label_smoothing: l.label_smoothing,
            dropout_rate: self.train.dropout_rate,
            uda: UdaConfig {
                beta0: l.beta0,
                warmup_steps: l.warmup_steps,
                confidence_threshold: l.confidence_threshold,
                target_temperature: l.target_temperature,
                mask_reduction: l.mask_reduction,
            },
            mpl: MplConfig {
                lambda: l.lambda,
                ema_decay: l.ema_decay,
                delta_sign: l.delta_sign,
                delta_mode: l.delta_mode,
            },
            optim: OptimConfig {
                clip_norm: self.optim.clip_norm,
                schedule,
                momentum: self.optim.momentum,
            },
            batch: BatchPlan {
                batch_size_labeled: self.batch.labeled,
                batch_size_unlabeled: self.batch.unlabeled,
                shuffle_seed: self.seed,
            },
            augment,
            finetune: self.finetune.map(|f| FinetuneConfig {
                lr: f.lr,
                epochs: f.epochs,
                batch_size: f.batch_size,
                label_smoothing: l.label_smoothing,
                seed: self.seed,
            }),
            mask_step_one: self.train.mask_step_one,
            trajectory_every: self.train.trajectory_every,
        }
    }
}

pub fn parse_table(source: &str) -> Result<toml::Table> {
    source
        .parse::<toml::Table>()
        .map_err(|e| Error::config(e.to_string()))
}

/// Applies `path=value` to `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::config(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!(
            "override key '{path}' has an empty segment"
        )));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = table;
    for (depth, key) in parents.iter().enumerate() {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            Error::config(format!(
                "override '{path}': '{}' is not a table",
                keys[..=depth].join(".")
            ))
        })?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses `source`, applies `overrides` in order and validates the result.
pub fn load_with_overrides(source: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = parse_table(source)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    ExperimentConfig::from_table(table)
}
