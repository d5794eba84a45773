//! Training procedures: self meta pseudo labels, a supervised baseline,
//! fixed-teacher pseudo labels and two-model meta pseudo labels.
//!
//! Each step function is pure apart from the optimizer it is handed: the
//! same inputs and seeds give bit-identical outputs. [`train`] drives one of
//! them over `steps` batches and collects the per-step records, a memory
//! report and an optional parameter-space trajectory.

mod baselines;
mod checkpoint;
mod memory;
mod mpl;
mod records;
mod smpl;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use baselines::{
    finetune, pseudo_label_step, pseudo_label_step_with, supervised_step, supervised_step_with,
    FinetuneConfig,
};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use memory::{memory_report, memory_report_with, MemoryReport};
pub use mpl::{mpl_step, mpl_step_with};
pub use records::{
    read_records_jsonl, write_records_csv, write_records_jsonl, StepRecord, RECORD_CSV_HEADER,
};
pub use smpl::{smpl_step, smpl_step_one, smpl_step_two, smpl_step_with, StepOne};
pub use trajectory::{Projection, TrajectoryDump, TrajectoryPhase, TrajectoryPoint};

use crate::augment::{augment_rows, jitter2d, JitterConfig, RandAugmentConfig};
use crate::data::{next_batch, Batch, BatchPlan, SslDataset};
use crate::error::{Error, Result};
use crate::losses::{EmaTracker, MplConfig, SmoothingConfig, UdaConfig};
use crate::nn::{
    forward, init_params, mlp_spec, softmax, validate_spec, ForwardTrace, LayerSpec, LrSchedule,
    Matrix, Mode, ModelParams, Sgd, SgdConfig,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Smpl,
    Supervised,
    PseudoLabels,
    Mpl,
}

impl TrainerKind {
    pub const ALL: [TrainerKind; 4] = [
        TrainerKind::Smpl,
        TrainerKind::Supervised,
        TrainerKind::PseudoLabels,
        TrainerKind::Mpl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Smpl => "smpl",
            TrainerKind::Supervised => "supervised",
            TrainerKind::PseudoLabels => "pseudo_labels",
            TrainerKind::Mpl => "mpl",
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the augmented unlabelled view `x_ua` is produced from `x_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentPolicy {
    /// `x_ua = x_u`.
    #[default]
    None,
    Jitter(JitterConfig),
    /// Rows are treated as images of the dataset's `image_dims`.
    RandAugment(RandAugmentConfig),
}

/// Optimizer settings shared by both updates; learning rates live on
/// [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OptimConfig {
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub momentum: Option<f64>,
}

impl OptimConfig {
    pub fn sgd(&self, learning_rate: f64) -> SgdConfig {
        SgdConfig {
            learning_rate,
            clip_norm: self.clip_norm,
            schedule: self.schedule,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step-one learning rate (the only one for single-update trainers).
    pub lr1: f64,
    /// Step-two learning rate; the teacher's rate for two-model MPL.
    pub lr2: f64,
    pub steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub label_smoothing: f64,
    pub dropout_rate: f64,
    pub uda: UdaConfig,
    pub mpl: MplConfig,
    pub optim: OptimConfig,
    pub batch: BatchPlan,
    pub augment: AugmentPolicy,
    pub finetune: Option<FinetuneConfig>,
    /// Apply the confidence filter to the step-one pseudo-label loss as well
    /// as the consistency term. When false every unlabelled row enters L1.
    pub mask_step_one: bool,
    /// Record a trajectory point every this many steps; 0 disables it.
    pub trajectory_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr1: 0.1,
            lr2: 0.1,
            steps: 1000,
            seed: 0,
            hidden: vec![8, 8],
            label_smoothing: 0.0,
            dropout_rate: 0.0,
            uda: UdaConfig::default(),
            mpl: MplConfig::default(),
            optim: OptimConfig::default(),
            batch: BatchPlan {
                batch_size_labeled: 6,
                batch_size_unlabeled: 128,
                shuffle_seed: 0,
            },
            augment: AugmentPolicy::None,
            finetune: None,
            mask_step_one: true,
            trajectory_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr1", self.lr1), ("lr2", self.lr2)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!(
                    "train.{name} must be positive, got {lr}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "train.dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config(format!(
                "losses.label_smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        self.uda.validate()?;
        self.mpl.validate()?;
        self.optim.sgd(self.lr1).validate()?;
        self.batch.validate()?;
        match &self.augment {
            AugmentPolicy::None => {}
            AugmentPolicy::Jitter(j) => {
                if !(j.noise_std >= 0.0 && j.noise_std.is_finite()) {
                    return Err(Error::config("augment.noise_std must be >= 0"));
                }
            }
            AugmentPolicy::RandAugment(r) => r.validate()?,
        }
        if let Some(f) = &self.finetune {
            f.validate()?;
        }
        Ok(())
    }

    pub fn smoothing(&self, classes: usize) -> Result<SmoothingConfig> {
        SmoothingConfig::new(self.label_smoothing, classes)
    }

    pub fn spec_for(&self, ds: &SslDataset) -> Result<Vec<LayerSpec>> {
        let spec = mlp_spec(ds.feature_dim(), &self.hidden, ds.class_count());
        validate_spec(&spec)?;
        Ok(spec)
    }
}

// Stream tags for seed derivation.
const TAG_INIT: u64 = 1;
const TAG_TEACHER: u64 = 2;
const TAG_DROPOUT: u64 = 3;
const TAG_AUGMENT: u64 = 4;

// Phases and branches of dropout seeds.
const PHASE_SHARED: u64 = 0;
const PHASE_ONE: u64 = 1;
const PHASE_TWO: u64 = 2;
const BRANCH_U: u64 = 1;
const BRANCH_UA: u64 = 2;
const BRANCH_L: u64 = 3;
const BRANCH_TEACHER_L: u64 = 4;

pub(crate) fn dropout_seed(base: u64, k: usize, phase: u64, branch: u64) -> u64 {
    seed::derive(base, &[TAG_DROPOUT, k as u64, phase, branch])
}

/// Dropout seed of the labelled branch at step `k`. It is shared by the
/// forwards before and after the first update so that the change in
/// labelled loss reflects the parameter change rather than a new mask.
pub fn labeled_dropout_seed(base: u64, k: usize) -> u64 {
    dropout_seed(base, k, PHASE_SHARED, BRANCH_L)
}

/// Parameters `train` starts from.
pub fn initial_params(ds: &SslDataset, cfg: &TrainConfig) -> Result<ModelParams> {
    init_params(&cfg.spec_for(ds)?, seed::derive(cfg.seed, &[TAG_INIT]))
}

/// Forward pass with dropout in train mode, returning probabilities and the
/// trace needed for backward.
pub(crate) struct Branch {
    pub probs: Matrix,
    pub trace: ForwardTrace,
}

pub(crate) fn run_branch(
    params: &ModelParams,
    x: &Matrix,
    cfg: &TrainConfig,
    dropout_seed: u64,
) -> Result<Branch> {
    let (logits, trace) = forward(params, x, cfg.dropout_rate, Mode::Train, dropout_seed)?;
    Ok(Branch {
        probs: softmax(&logits, 1.0),
        trace,
    })
}

/// The batch for step `k` with `x_ua` filled in by the augmentation policy.
pub fn prepare_batch(ds: &SslDataset, cfg: &TrainConfig, k: usize) -> Result<Batch> {
    let mut batch = next_batch(ds, &cfg.batch, k);
    let aug_seed = seed::derive(cfg.seed, &[TAG_AUGMENT, k as u64]);
    match &cfg.augment {
        AugmentPolicy::None => {}
        AugmentPolicy::Jitter(j) => batch.x_ua = jitter2d(&batch.x_u, j, aug_seed),
        AugmentPolicy::RandAugment(r) => {
            let dims = ds.image_dims().ok_or_else(|| {
                Error::config("augment.kind = rand_augment needs an image dataset")
            })?;
            batch.x_ua = augment_rows(&batch.x_u, dims, r, aug_seed)?;
        }
    }
    Ok(batch)
}

pub(crate) fn diverged(step: usize, reason: impl Into<String>, record: &StepRecord) -> Error {
    Error::Diverged {
        step,
        reason: reason.into(),
        record: Box::new(*record),
    }
}

/// Turns an error from the optimizer into a divergence carrying `record`.
pub(crate) fn as_diverged(step: usize, record: &StepRecord) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Numeric(msg) => diverged(step, msg, record),
        other => other,
    }
}

pub(crate) fn ensure_finite(
    step: usize,
    record: &StepRecord,
    values: &[(&str, f64)],
) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(diverged(step, format!("{name} = {v}"), record)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { step: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final parameters of the trained model (the student for two-model runs).
    pub params: ModelParams,
    /// The teacher, for trainers that have one.
    pub teacher: Option<ModelParams>,
    pub records: Vec<StepRecord>,
    pub memory: MemoryReport,
    pub trajectory: TrajectoryDump,
    pub status: RunStatus,
}

impl TrainOutcome {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Runs `cfg.steps` steps of `kind` on `ds`.
///
/// A step that diverges stops the run: the records up to and including the
/// failed step are returned with an aborted status, together with the last
/// finite parameters. Configuration errors are returned as `Err`.
pub fn train(kind: TrainerKind, ds: &SslDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.spec_for(ds)?;
    let smoothing = cfg.smoothing(ds.class_count())?;
    let mut run = Run {
        ds,
        cfg,
        records: Vec::with_capacity(cfg.steps),
        trajectory: TrajectoryDump::new(&spec, cfg.trajectory_every),
        smoothing,
    };
    let init = initial_params(ds, cfg)?;
    run.snapshot(None, TrajectoryPhase::Init, &init)?;
    let (params, teacher, status) = match kind {
        TrainerKind::Smpl => run.smpl(init)?,
        TrainerKind::Supervised => run.supervised(init)?,
        TrainerKind::PseudoLabels => run.pseudo_labels(init)?,
        TrainerKind::Mpl => run.mpl(init)?,
    };
    let params = match (&cfg.finetune, &status) {
        (Some(f), RunStatus::Completed) => finetune(&params, ds, f)?,
        _ => params,
    };
    Ok(TrainOutcome {
        params,
        teacher,
        records: run.records,
        memory: memory_report_with(kind, &spec, &cfg.optim),
        trajectory: run.trajectory,
        status,
    })
}

type RunResult = Result<(ModelParams, Option<ModelParams>, RunStatus)>;

struct Run<'a> {
    ds: &'a SslDataset,
    cfg: &'a TrainConfig,
    records: Vec<StepRecord>,
    trajectory: TrajectoryDump,
    smoothing: SmoothingConfig,
}

impl Run<'_> {
    fn snapshot(
        &mut self,
        step: Option<usize>,
        phase: TrajectoryPhase,
        params: &ModelParams,
    ) -> Result<()> {
        let every = self.trajectory.every;
        if every == 0 || step.is_some_and(|k| k % every != 0) {
            return Ok(());
        }
        self.trajectory
            .record(step, phase, params, self.ds, &self.smoothing)
    }

    /// Records a failed step and converts it into an aborted status.
    /// Numeric failures inside a loss (a zero probability under a nonzero
    /// target) count as divergence of step `k`.
    fn absorb(&mut self, k: usize, e: Error) -> Result<RunStatus> {
        match e {
            Error::Diverged {
                step,
                reason,
                record,
            } => {
                self.records.push(*record);
                Ok(RunStatus::Aborted { step, reason })
            }
            Error::Numeric(reason) => {
                self.records.push(StepRecord::unfinished(k));
                Ok(RunStatus::Aborted { step: k, reason })
            }
            other => Err(other),
        }
    }

    fn smpl(&mut self, mut params: ModelParams) -> RunResult {
        let mut opt = Sgd::new();
        let mut ema = EmaTracker::new(self.cfg.mpl.ema_decay);
        for k in 0..self.cfg.steps {
            let batch = prepare_batch(self.ds, self.cfg, k)?;
            let step = smpl_step_one(&params, &batch, self.cfg, k, &mut opt).and_then(|one| {
                smpl_step_two(&params, &one, &batch, self.cfg, k, ema, &mut opt).map(|r| (one, r))
            });
            match step {
                Ok((one, (next, record, next_ema))) => {
                    self.snapshot(Some(k), TrajectoryPhase::StepOne, &one.theta_prime)?;
                    self.snapshot(Some(k), TrajectoryPhase::StepTwo, &next)?;
                    self.records.push(record);
                    params = next;
                    ema = next_ema;
                }
                Err(e) => return Ok((params, None, self.absorb(k, e)?)),
            }
        }
        Ok((params, None, RunStatus::Completed))
    }

    fn supervised(&mut self, mut params: ModelParams) -> RunResult {
        let mut opt = Sgd::new();
        for k in 0..self.cfg.steps {
            let batch = next_batch(self.ds, &self.cfg.batch, k);
            match supervised_step_with(&mut opt, &params, &batch, self.cfg, k) {
                Ok((next, record)) => {
                    self.snapshot(Some(k), TrajectoryPhase::Update, &next)?;
                    self.records.push(record);
                    params = next;
                }
                Err(e) => return Ok((params, None, self.absorb(k, e)?)),
            }
        }
        Ok((params, None, RunStatus::Completed))
    }

    fn pseudo_labels(&mut self, mut params: ModelParams) -> RunResult {
        // The teacher is trained beforehand with the supervised procedure on
        // its own seed stream, then frozen.
        let teacher_cfg = TrainConfig {
            seed: seed::derive(self.cfg.seed, &[TAG_TEACHER]),
            trajectory_every: 0,
            finetune: None,
            ..self.cfg.clone()
        };
        let pre = train(TrainerKind::Supervised, self.ds, &teacher_cfg)?;
        if let RunStatus::Aborted { step, reason } = pre.status {
            let reason = format!("teacher pretraining failed at step {step}: {reason}");
            return Ok((
                params,
                Some(pre.params),
                RunStatus::Aborted { step: 0, reason },
            ));
        }
        let teacher = pre.params;
        let mut opt = Sgd::new();
        for k in 0..self.cfg.steps {
            let batch = prepare_batch(self.ds, self.cfg, k)?;
            match pseudo_label_step_with(&mut opt, &params, &teacher, &batch, self.cfg, k) {
                Ok((next, record)) => {
                    self.snapshot(Some(k), TrajectoryPhase::Update, &next)?;
                    self.records.push(record);
                    params = next;
                }
                Err(e) => return Ok((params, Some(teacher), self.absorb(k, e)?)),
            }
        }
        Ok((params, Some(teacher), RunStatus::Completed))
    }

    fn mpl(&mut self, mut student: ModelParams) -> RunResult {
        let spec = student.spec().to_vec();
        let mut teacher =
            init_params(&spec, seed::derive(self.cfg.seed, &[TAG_TEACHER, TAG_INIT]))?;
        let mut t_opt = Sgd::new();
        let mut s_opt = Sgd::new();
        let mut ema = EmaTracker::new(self.cfg.mpl.ema_decay);
        for k in 0..self.cfg.steps {
            let batch = prepare_batch(self.ds, self.cfg, k)?;
            match mpl_step_with(
                &mut t_opt, &mut s_opt, &teacher, &student, &batch, self.cfg, k, ema,
            ) {
                Ok((t, s, record, next_ema)) => {
                    self.snapshot(Some(k), TrajectoryPhase::Update, &s)?;
                    self.records.push(record);
                    teacher = t;
                    student = s;
                    ema = next_ema;
                }
                Err(e) => return Ok((student, Some(teacher), self.absorb(k, e)?)),
            }
        }
        Ok((student, Some(teacher), RunStatus::Completed))
    }
}
