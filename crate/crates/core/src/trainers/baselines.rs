//! Labelled-only SGD, fixed-teacher pseudo labels and labelled finetuning.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::smpl::fraction;
use super::{
    as_diverged, dropout_seed, ensure_finite, labeled_dropout_seed, run_branch, StepRecord,
    TrainConfig, BRANCH_UA, PHASE_ONE,
};
use crate::data::{Batch, SslDataset};
use crate::error::{Error, Result};
use crate::losses::{
    ce_smoothed, confidence_mask, hard_labels, masked_ce_smoothed, SmoothingConfig,
};
use crate::nn::{backward, forward, predict, sgd_step, softmax, Mode, ModelParams, Sgd, SgdConfig};
use crate::seed;

/// Record fields shared by single-update trainers: the labelled loss before
/// and after the update, measured with the same dropout mask.
fn close_record(
    record: &mut StepRecord,
    next: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    sm: &SmoothingConfig,
) -> Result<()> {
    let after = run_branch(
        next,
        &batch.x_l,
        cfg,
        labeled_dropout_seed(cfg.seed, record.step),
    )?;
    let (ce_after, _) = ce_smoothed(&batch.y_l, &after.probs, sm)?;
    record.labeled_ce_after = ce_after;
    record.loss.delta_ce = record.labeled_ce_before - ce_after;
    Ok(())
}

/// One smoothed-CE SGD step on the labelled part of `batch` at `lr1`.
pub fn supervised_step_with(
    opt: &mut Sgd,
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
) -> Result<(ModelParams, StepRecord)> {
    let sm = cfg.smoothing(params.output_dim())?;
    let l = run_branch(params, &batch.x_l, cfg, labeled_dropout_seed(cfg.seed, k))?;
    let (ce, upstream) = ce_smoothed(&batch.y_l, &l.probs, &sm)?;
    let sgd = cfg.optim.sgd(cfg.lr1);
    let mut record = StepRecord {
        step: k,
        labeled_ce_before: ce,
        lr_effective: sgd.lr_at(k),
        ..StepRecord::default()
    };
    record.loss.l_uda = ce;
    record.loss.l2 = ce;
    ensure_finite(k, &record, &[("labeled_ce", ce)])?;
    let g = backward(&l.trace, params, &upstream)?;
    record.grad_norm_1 = g.global_norm();
    let next = opt
        .step(params, &g, &sgd, k)
        .map_err(as_diverged(k, &record))?;
    close_record(&mut record, &next, batch, cfg, &sm)?;
    Ok((next, record))
}

pub fn supervised_step(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
) -> Result<(ModelParams, StepRecord)> {
    supervised_step_with(&mut Sgd::new(), params, batch, cfg, k)
}

/// One student step on the labelled cross-entropy plus the cross-entropy
/// against a frozen teacher's confident hard labels on the augmented view.
///
/// The teacher is evaluated without dropout. With no passing rows the step
/// is exactly [`supervised_step_with`].
pub fn pseudo_label_step_with(
    opt: &mut Sgd,
    student: &ModelParams,
    teacher: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
) -> Result<(ModelParams, StepRecord)> {
    let sm = cfg.smoothing(student.output_dim())?;
    let p_teacher = softmax(&predict(teacher, &batch.x_u)?, 1.0);
    let hard_u = hard_labels(&p_teacher);
    let mask = confidence_mask(&p_teacher, cfg.uda.confidence_threshold);

    let l = run_branch(student, &batch.x_l, cfg, labeled_dropout_seed(cfg.seed, k))?;
    let ua = run_branch(
        student,
        &batch.x_ua,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_ONE, BRANCH_UA),
    )?;
    let (ce_l, up_l) = ce_smoothed(&batch.y_l, &l.probs, &sm)?;
    let pl = masked_ce_smoothed(&hard_u, &ua.probs, &mask, &sm, cfg.uda.mask_reduction)?;

    let sgd = cfg.optim.sgd(cfg.lr1);
    let mut record = StepRecord {
        step: k,
        labeled_ce_before: ce_l,
        lr_effective: sgd.lr_at(k),
        ..StepRecord::default()
    };
    record.loss.l1 = pl.loss;
    record.loss.l_uda = ce_l;
    record.loss.l2 = ce_l + pl.loss;
    record.loss.mask_fraction = fraction(&mask);
    ensure_finite(
        k,
        &record,
        &[("labeled_ce", ce_l), ("pseudo_label_ce", pl.loss)],
    )?;

    let mut g = backward(&l.trace, student, &up_l)?;
    g.add_scaled(1.0, &backward(&ua.trace, student, &pl.upstream)?)?;
    record.grad_norm_1 = g.global_norm();
    let next = opt
        .step(student, &g, &sgd, k)
        .map_err(as_diverged(k, &record))?;
    close_record(&mut record, &next, batch, cfg, &sm)?;
    Ok((next, record))
}

pub fn pseudo_label_step(
    student: &ModelParams,
    teacher: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
) -> Result<(ModelParams, StepRecord)> {
    pseudo_label_step_with(&mut Sgd::new(), student, teacher, batch, cfg, k)
}

/// Labelled-only retraining at a fixed learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub label_smoothing: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 5e-6,
            epochs: 8000,
            batch_size: 512,
            label_smoothing: 0.0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "finetune.lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("finetune.batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::config(format!(
                "finetune.label_smoothing must be in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

/// Smoothed-CE SGD on the labelled set only, one shuffled pass per epoch in
/// minibatches of `batch_size`, without dropout. Returns the final
/// parameters.
pub fn finetune(
    params: &ModelParams,
    ds: &SslDataset,
    cfg: &FinetuneConfig,
) -> Result<ModelParams> {
    cfg.validate()?;
    let sm = SmoothingConfig::new(cfg.label_smoothing, ds.class_count())?;
    let sgd = SgdConfig::constant(cfg.lr);
    let n = ds.n_labeled();
    let mut out = params.clone();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[epoch as u64])));
        for chunk in order.chunks(cfg.batch_size) {
            let x = ds.x_labeled().select_rows(chunk);
            let y = ds.y_labeled().select_rows(chunk);
            let (logits, trace) = forward(&out, &x, 0.0, Mode::Eval, 0)?;
            let (_, upstream) = ce_smoothed(&y, &softmax(&logits, 1.0), &sm)?;
            let g = backward(&trace, &out, &upstream)?;
            out = sgd_step(&out, &g, &sgd, epoch)?;
        }
    }
    Ok(out)
}
