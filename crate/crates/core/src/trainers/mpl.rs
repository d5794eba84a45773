//! Two-model meta pseudo labels with first-order teacher feedback.
//!
//! The student takes the step-one update on the teacher's hard labels. The
//! teacher then takes a UDA step plus its own hard-label cross-entropy
//! weighted by the student's labelled-loss change minus a baseline.

use super::smpl::fraction;
use super::{
    as_diverged, dropout_seed, ensure_finite, labeled_dropout_seed, run_branch, StepRecord,
    TrainConfig, BRANCH_TEACHER_L, BRANCH_U, BRANCH_UA, PHASE_ONE, PHASE_TWO,
};
use crate::data::Batch;
use crate::error::Result;
use crate::losses::{
    ce_smoothed, confidence_mask, gradient_dot_delta, hard_labels, l2_total, masked_ce_smoothed,
    mpl_loss, uda_loss, DeltaMode, DeltaSign, EmaTracker,
};
use crate::nn::{backward, ModelParams, Sgd};

/// Returns `(teacher', student', record, ema')`.
///
/// The teacher's unaugmented forward and the student's augmented and
/// labelled forwards draw the same dropout masks as the corresponding
/// forwards of a single-model step, so with `teacher == student` the student
/// update equals the single-model step one.
#[allow(clippy::too_many_arguments)]
pub fn mpl_step_with(
    teacher_opt: &mut Sgd,
    student_opt: &mut Sgd,
    teacher: &ModelParams,
    student: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    ema: EmaTracker,
) -> Result<(ModelParams, ModelParams, StepRecord, EmaTracker)> {
    let sm = cfg.smoothing(student.output_dim())?;

    // Student update on the teacher's pseudo labels.
    let tu = run_branch(
        teacher,
        &batch.x_u,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_ONE, BRANCH_U),
    )?;
    let hard_u = hard_labels(&tu.probs);
    let mask = if cfg.mask_step_one {
        confidence_mask(&tu.probs, cfg.uda.confidence_threshold)
    } else {
        vec![true; tu.probs.rows()]
    };
    let sua = run_branch(
        student,
        &batch.x_ua,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_ONE, BRANCH_UA),
    )?;
    let sl = run_branch(student, &batch.x_l, cfg, labeled_dropout_seed(cfg.seed, k))?;
    let l1 = masked_ce_smoothed(&hard_u, &sua.probs, &mask, &sm, cfg.uda.mask_reduction)?;
    let (ce_before, _) = ce_smoothed(&batch.y_l, &sl.probs, &sm)?;

    let sgd1 = cfg.optim.sgd(cfg.lr1);
    let mut record = StepRecord {
        step: k,
        labeled_ce_before: ce_before,
        ..StepRecord::default()
    };
    record.loss.l1 = l1.loss;
    record.loss.mask_fraction = fraction(&mask);
    ensure_finite(
        k,
        &record,
        &[("l1", l1.loss), ("labeled_ce_before", ce_before)],
    )?;
    let g1 = backward(&sua.trace, student, &l1.upstream)?;
    record.grad_norm_1 = g1.global_norm();
    let next_student = student_opt
        .step(student, &g1, &sgd1, k)
        .map_err(as_diverged(k, &record))?;

    // Student feedback.
    let sl_after = run_branch(
        &next_student,
        &batch.x_l,
        cfg,
        labeled_dropout_seed(cfg.seed, k),
    )?;
    let (ce_after, up_after) = ce_smoothed(&batch.y_l, &sl_after.probs, &sm)?;
    let delta = match cfg.mpl.delta_mode {
        DeltaMode::LossDifference => cfg.mpl.delta_sign.apply(ce_before, ce_after),
        DeltaMode::GradientDot => {
            let g = backward(&sl_after.trace, &next_student, &up_after)?;
            let est = gradient_dot_delta(&g, student, &next_student);
            match cfg.mpl.delta_sign {
                DeltaSign::BeforeMinusAfter => est,
                DeltaSign::AfterMinusBefore => -est,
            }
        }
    };

    // Teacher update: UDA on its own predictions plus the weighted
    // pseudo-label cross-entropy at its current parameters.
    let tl = run_branch(
        teacher,
        &batch.x_l,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_TWO, BRANCH_TEACHER_L),
    )?;
    let tua = run_branch(
        teacher,
        &batch.x_ua,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_TWO, BRANCH_UA),
    )?;
    let uda = uda_loss(
        &batch.y_l, &tl.probs, &tu.probs, &tua.probs, k, &cfg.uda, &sm,
    )?;
    let (mpl, next_ema) = mpl_loss(delta, ema, &tu.probs, &hard_u, &sm)?;

    let sgd2 = cfg.optim.sgd(cfg.lr2);
    record.labeled_ce_after = ce_after;
    record.lr_effective = sgd2.lr_at(k);
    record.signal = mpl.signal;
    record.ema = next_ema.value;
    record.uda_mask_fraction = uda.mask_fraction;
    record.loss.l_uda = uda.loss;
    record.loss.l_mpl = mpl.loss;
    record.loss.l2 = l2_total(uda.loss, mpl.loss, cfg.mpl.lambda);
    record.loss.delta_ce = delta;
    record.loss.beta_k = uda.beta_k;
    ensure_finite(k, &record, &[("l2", record.loss.l2), ("delta_ce", delta)])?;

    let mut g2 = backward(&tl.trace, teacher, &uda.upstream_labeled)?;
    g2.add_scaled(1.0, &backward(&tua.trace, teacher, &uda.upstream_aug)?)?;
    g2.add_scaled(
        cfg.mpl.lambda,
        &backward(&tu.trace, teacher, &mpl.upstream_u)?,
    )?;
    record.grad_norm_2 = g2.global_norm();
    let next_teacher = teacher_opt
        .step(teacher, &g2, &sgd2, k)
        .map_err(as_diverged(k, &record))?;
    Ok((next_teacher, next_student, record, next_ema))
}

/// [`mpl_step_with`] with fresh optimizers.
pub fn mpl_step(
    teacher: &ModelParams,
    student: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    ema: EmaTracker,
) -> Result<(ModelParams, ModelParams, StepRecord, EmaTracker)> {
    mpl_step_with(
        &mut Sgd::new(),
        &mut Sgd::new(),
        teacher,
        student,
        batch,
        cfg,
        k,
        ema,
    )
}
