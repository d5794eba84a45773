//! Semi-supervised loss terms and their logit-space gradients.
//!
//! Every loss here takes softmax probabilities and returns, alongside the
//! scalar value, the gradient with respect to the *logits* that produced
//! them, ready to hand to [`crate::nn::backward`].

mod mpl;
mod uda;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use mpl::{
    delta_ce, gradient_dot_delta, l2_total, mpl_loss, DeltaMode, DeltaSign, EmaTracker, MplConfig,
    MplOutput,
};
pub use uda::{beta_k, sharpen, uda_loss, UdaConfig, UdaOutput};

/// Label smoothing: `1 - alpha` on the labelled class, `alpha / (n - 1)` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub alpha: f64,
    pub num_classes: usize,
}

impl SmoothingConfig {
    pub fn new(alpha: f64, num_classes: usize) -> Result<Self> {
        let cfg = Self { alpha, num_classes };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "label smoothing alpha must be in [0, 1), got {}",
                self.alpha
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::config("label smoothing needs at least 2 classes"));
        }
        Ok(())
    }

    /// Smoothed targets for one-hot rows.
    pub fn smooth(&self, targets: &Matrix) -> Matrix {
        let off = self.alpha / (self.num_classes as f64 - 1.0);
        let on = 1.0 - self.alpha;
        targets.map(|t| t * on + (1.0 - t) * off)
    }
}

/// How a confidence-masked term is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskReduction {
    /// Mean over rows that pass the mask.
    #[default]
    MaskedMean,
    /// Sum over passing rows divided by the full batch size.
    FullBatchMean,
}

/// Scalar losses and per-step quantities of one SMPL update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBundle {
    pub l1: f64,
    pub l_uda: f64,
    pub l_mpl: f64,
    pub l2: f64,
    pub delta_ce: f64,
    pub beta_k: f64,
    pub mask_fraction: f64,
}

/// One-hot rows at each row's argmax (lowest index on ties).
pub fn hard_labels(p: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let c = p.argmax_row(i);
        out[(i, c)] = 1.0;
    }
    out
}

/// `true` for rows whose largest probability reaches `threshold`.
///
/// Softmax probabilities of finite logits are strictly below 1, so a
/// threshold of 1 or more rejects every row even if rounding produced an
/// exact 1.0.
pub fn confidence_mask(p: &Matrix, threshold: f64) -> Vec<bool> {
    p.iter_rows()
        .map(|r| {
            let max = r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            threshold < 1.0 && max >= threshold
        })
        .collect()
}

fn check_pair(targets: &Matrix, p: &Matrix, cfg: &SmoothingConfig) -> Result<()> {
    if targets.shape() != p.shape() {
        return Err(Error::shape(format!(
            "targets {}x{} vs predictions {}x{}",
            targets.rows(),
            targets.cols(),
            p.rows(),
            p.cols()
        )));
    }
    if p.cols() != cfg.num_classes {
        return Err(Error::shape(format!(
            "{} prediction columns for {} classes",
            p.cols(),
            cfg.num_classes
        )));
    }
    Ok(())
}

/// Per-row smoothed cross-entropy `-sum_c t~_c ln p_c`.
fn row_ce(t_smooth: &[f64], p: &[f64]) -> Result<f64> {
    let mut ce = 0.0;
    for (&t, &pc) in t_smooth.iter().zip(p) {
        if t == 0.0 {
            continue;
        }
        if pc <= 0.0 {
            return Err(Error::Numeric(
                "zero probability against a nonzero target weight".to_string(),
            ));
        }
        ce -= t * pc.ln();
    }
    Ok(ce)
}

/// Mean smoothed cross-entropy of `p` against hard `targets`, and its
/// gradient with respect to the logits, `(p - t~) / batch`.
pub fn ce_smoothed(targets: &Matrix, p: &Matrix, cfg: &SmoothingConfig) -> Result<(f64, Matrix)> {
    let all = vec![true; p.rows()];
    let out = masked_ce_smoothed(targets, p, &all, cfg, MaskReduction::MaskedMean)?;
    Ok((out.loss, out.upstream))
}

#[derive(Debug, Clone)]
pub struct MaskedCe {
    pub loss: f64,
    pub upstream: Matrix,
    pub passing: usize,
}

/// Smoothed cross-entropy over the rows where `mask` is true. Rejected rows
/// get zero gradient; with no passing rows the loss is exactly 0.
pub fn masked_ce_smoothed(
    targets: &Matrix,
    p: &Matrix,
    mask: &[bool],
    cfg: &SmoothingConfig,
    reduction: MaskReduction,
) -> Result<MaskedCe> {
    check_pair(targets, p, cfg)?;
    if mask.len() != p.rows() {
        return Err(Error::shape(format!(
            "mask of length {} for {} rows",
            mask.len(),
            p.rows()
        )));
    }
    let passing = mask.iter().filter(|&&m| m).count();
    let mut upstream = Matrix::zeros(p.rows(), p.cols());
    if passing == 0 {
        return Ok(MaskedCe {
            loss: 0.0,
            upstream,
            passing,
        });
    }
    let denom = match reduction {
        MaskReduction::MaskedMean => passing,
        MaskReduction::FullBatchMean => p.rows(),
    } as f64;
    let smoothed = cfg.smooth(targets);
    let mut total = 0.0;
    for i in (0..p.rows()).filter(|&i| mask[i]) {
        total += row_ce(smoothed.row(i), p.row(i))?;
        for ((u, &pc), &t) in upstream
            .row_mut(i)
            .iter_mut()
            .zip(p.row(i))
            .zip(smoothed.row(i))
        {
            *u = (pc - t) / denom;
        }
    }
    Ok(MaskedCe {
        loss: total / denom,
        upstream,
        passing,
    })
}
