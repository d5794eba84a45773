//! The single-model two-step update.
//!
//! Step one fits the model to its own confident hard labels on the augmented
//! view. Step two, from the updated parameters, minimizes the labelled and
//! consistency loss plus the same hard-label cross-entropy weighted by how
//! much step one changed the labelled loss (minus a moving baseline).

use super::{
    as_diverged, dropout_seed, ensure_finite, labeled_dropout_seed, run_branch, StepRecord,
    TrainConfig, BRANCH_U, BRANCH_UA, PHASE_ONE, PHASE_TWO,
};
use crate::data::Batch;
use crate::error::Result;
use crate::losses::{
    ce_smoothed, confidence_mask, gradient_dot_delta, hard_labels, l2_total, masked_ce_smoothed,
    mpl_loss, uda_loss, DeltaMode, DeltaSign, EmaTracker,
};
use crate::nn::{backward, Matrix, ModelParams, Sgd};

/// Everything step two needs from step one.
#[derive(Debug, Clone)]
pub struct StepOne {
    pub theta_prime: ModelParams,
    /// Hard pseudo labels of the unaugmented batch at the starting parameters.
    pub hard_u: Matrix,
    pub mask: Vec<bool>,
    pub l1: f64,
    pub labeled_ce_before: f64,
    pub mask_fraction: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Step one: `theta' = theta - lr1 * grad L1(theta)`.
pub fn smpl_step_one(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    opt: &mut Sgd,
) -> Result<StepOne> {
    let sm = cfg.smoothing(params.output_dim())?;
    let u = run_branch(
        params,
        &batch.x_u,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_ONE, BRANCH_U),
    )?;
    let ua = run_branch(
        params,
        &batch.x_ua,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_ONE, BRANCH_UA),
    )?;
    let l = run_branch(params, &batch.x_l, cfg, labeled_dropout_seed(cfg.seed, k))?;

    let hard_u = hard_labels(&u.probs);
    let mask = if cfg.mask_step_one {
        confidence_mask(&u.probs, cfg.uda.confidence_threshold)
    } else {
        vec![true; u.probs.rows()]
    };
    let l1 = masked_ce_smoothed(&hard_u, &ua.probs, &mask, &sm, cfg.uda.mask_reduction)?;
    let (ce_before, _) = ce_smoothed(&batch.y_l, &l.probs, &sm)?;
    let mask_fraction = fraction(&mask);

    let sgd = cfg.optim.sgd(cfg.lr1);
    let mut record = StepRecord {
        step: k,
        labeled_ce_before: ce_before,
        lr_effective: sgd.lr_at(k),
        ..StepRecord::default()
    };
    record.loss.l1 = l1.loss;
    record.loss.mask_fraction = mask_fraction;
    ensure_finite(
        k,
        &record,
        &[("l1", l1.loss), ("labeled_ce_before", ce_before)],
    )?;

    let g1 = backward(&ua.trace, params, &l1.upstream)?;
    record.grad_norm_1 = g1.global_norm();
    let theta_prime = opt
        .step(params, &g1, &sgd, k)
        .map_err(as_diverged(k, &record))?;
    Ok(StepOne {
        theta_prime,
        hard_u,
        mask,
        l1: l1.loss,
        labeled_ce_before: ce_before,
        mask_fraction,
        grad_norm: record.grad_norm_1,
        lr: record.lr_effective,
    })
}

/// Step two: `theta'' = theta' - lr2 * grad (L_UDA + lambda * L_MPL)(theta')`.
///
/// `theta` is the pre-step-one parameter set; it is only read by the
/// gradient-dot estimate of the labelled-loss change.
#[allow(clippy::too_many_arguments)]
pub fn smpl_step_two(
    theta: &ModelParams,
    one: &StepOne,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    ema: EmaTracker,
    opt: &mut Sgd,
) -> Result<(ModelParams, StepRecord, EmaTracker)> {
    let tp = &one.theta_prime;
    let sm = cfg.smoothing(tp.output_dim())?;
    let l = run_branch(tp, &batch.x_l, cfg, labeled_dropout_seed(cfg.seed, k))?;
    let u = run_branch(
        tp,
        &batch.x_u,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_TWO, BRANCH_U),
    )?;
    let ua = run_branch(
        tp,
        &batch.x_ua,
        cfg,
        dropout_seed(cfg.seed, k, PHASE_TWO, BRANCH_UA),
    )?;

    let uda = uda_loss(&batch.y_l, &l.probs, &u.probs, &ua.probs, k, &cfg.uda, &sm)?;
    let ce_after = uda.labeled_ce;
    let g_labeled = backward(&l.trace, tp, &uda.upstream_labeled)?;
    let delta = match cfg.mpl.delta_mode {
        DeltaMode::LossDifference => cfg.mpl.delta_sign.apply(one.labeled_ce_before, ce_after),
        DeltaMode::GradientDot => {
            let est = gradient_dot_delta(&g_labeled, theta, tp);
            match cfg.mpl.delta_sign {
                DeltaSign::BeforeMinusAfter => est,
                DeltaSign::AfterMinusBefore => -est,
            }
        }
    };
    let (mpl, next_ema) = mpl_loss(delta, ema, &u.probs, &one.hard_u, &sm)?;

    let sgd = cfg.optim.sgd(cfg.lr2);
    let mut record = StepRecord {
        step: k,
        labeled_ce_before: one.labeled_ce_before,
        labeled_ce_after: ce_after,
        grad_norm_1: one.grad_norm,
        lr_effective: sgd.lr_at(k),
        signal: mpl.signal,
        ema: next_ema.value,
        uda_mask_fraction: uda.mask_fraction,
        ..StepRecord::default()
    };
    record.loss.l1 = one.l1;
    record.loss.l_uda = uda.loss;
    record.loss.l_mpl = mpl.loss;
    record.loss.l2 = l2_total(uda.loss, mpl.loss, cfg.mpl.lambda);
    record.loss.delta_ce = delta;
    record.loss.beta_k = uda.beta_k;
    record.loss.mask_fraction = one.mask_fraction;
    ensure_finite(k, &record, &[("l2", record.loss.l2), ("delta_ce", delta)])?;

    let mut g2 = g_labeled;
    g2.add_scaled(1.0, &backward(&ua.trace, tp, &uda.upstream_aug)?)?;
    g2.add_scaled(cfg.mpl.lambda, &backward(&u.trace, tp, &mpl.upstream_u)?)?;
    record.grad_norm_2 = g2.global_norm();
    let next = opt
        .step(tp, &g2, &sgd, k)
        .map_err(as_diverged(k, &record))?;
    Ok((next, record, next_ema))
}

/// Both steps with a caller-owned optimizer (momentum state is shared by the
/// two updates).
pub fn smpl_step_with(
    opt: &mut Sgd,
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    ema: EmaTracker,
) -> Result<(ModelParams, StepRecord, EmaTracker)> {
    let one = smpl_step_one(params, batch, cfg, k, opt)?;
    smpl_step_two(params, &one, batch, cfg, k, ema, opt)
}

/// One full step with a fresh optimizer. Equivalent to [`smpl_step_with`]
/// for plain SGD.
pub fn smpl_step(
    params: &ModelParams,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    ema: EmaTracker,
) -> Result<(ModelParams, StepRecord, EmaTracker)> {
    smpl_step_with(&mut Sgd::new(), params, batch, cfg, k, ema)
}

pub(crate) fn fraction(mask: &[bool]) -> f64 {
    if mask.is_empty() {
        0.0
    } else {
        mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
    }
}
