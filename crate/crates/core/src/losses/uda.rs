//! Labelled cross-entropy plus a warmed-up, confidence-masked consistency term.

use serde::{Deserialize, Serialize};

use super::{masked_ce_smoothed, row_ce, MaskReduction, SmoothingConfig};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UdaConfig {
    /// Final consistency weight.
    pub beta0: f64,
    /// Steps over which the weight ramps linearly up to `beta0`.
    pub warmup_steps: usize,
    pub confidence_threshold: f64,
    /// Temperature applied to the unaugmented logits to form the target.
    pub target_temperature: f64,
    #[serde(default)]
    pub mask_reduction: MaskReduction,
}

impl Default for UdaConfig {
    fn default() -> Self {
        Self {
            beta0: 8.0,
            warmup_steps: 5000,
            confidence_threshold: 0.6,
            target_temperature: 0.7,
            mask_reduction: MaskReduction::MaskedMean,
        }
    }
}

impl UdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return Err(Error::config(format!(
                "losses.beta0 must be >= 0, got {}",
                self.beta0
            )));
        }
        if self.warmup_steps == 0 {
            return Err(Error::config("losses.warmup_steps must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::config(format!(
                "losses.confidence_threshold must be in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        if self.target_temperature.is_nan() || self.target_temperature <= 0.0 {
            return Err(Error::config(format!(
                "losses.target_temperature must be positive, got {}",
                self.target_temperature
            )));
        }
        Ok(())
    }
}

/// `beta0 * min(1, (k + 1) / warmup_steps)`.
pub fn beta_k(k: usize, cfg: &UdaConfig) -> f64 {
    if k + 1 >= cfg.warmup_steps {
        return cfg.beta0;
    }
    // One rounding: beta0 * (k + 1) is exact for integral beta0 and moderate k.
    cfg.beta0 * (k as f64 + 1.0) / cfg.warmup_steps as f64
}

/// Re-tempers probability rows: `softmax(ln p / T)`, which equals
/// `softmax(logits / T)` for `p = softmax(logits)`.
pub fn sharpen(p: &Matrix, temperature: f64) -> Matrix {
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let logs: Vec<f64> = p.row(i).iter().map(|&v| v.ln() / temperature).collect();
        let max = logs.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let dst = out.row_mut(i);
        let mut total = 0.0;
        for (d, &l) in dst.iter_mut().zip(&logs) {
            *d = (l - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

#[derive(Debug, Clone)]
pub struct UdaOutput {
    pub loss: f64,
    pub labeled_ce: f64,
    /// Unweighted consistency cross-entropy.
    pub consistency: f64,
    pub beta_k: f64,
    pub mask: Vec<bool>,
    pub mask_fraction: f64,
    /// dloss/dlogits for the labelled rows.
    pub upstream_labeled: Matrix,
    /// dloss/dlogits for the augmented rows.
    pub upstream_aug: Matrix,
}

/// Smoothed labelled cross-entropy plus `beta_k` times the masked mean of
/// `-sum_c q_c ln p_ua,c`, where `q = sharpen(p_u)` is a constant target.
///
/// The mask keeps rows whose unaugmented confidence `max(p_u)` reaches the
/// threshold. No gradient is produced for `p_u`.
pub fn uda_loss(
    y_l: &Matrix,
    p_l: &Matrix,
    p_u: &Matrix,
    p_ua: &Matrix,
    k: usize,
    cfg: &UdaConfig,
    smoothing: &SmoothingConfig,
) -> Result<UdaOutput> {
    if p_u.shape() != p_ua.shape() {
        return Err(Error::shape(format!(
            "unaugmented {}x{} vs augmented {}x{} predictions",
            p_u.rows(),
            p_u.cols(),
            p_ua.rows(),
            p_ua.cols()
        )));
    }
    let labeled_mask = vec![true; p_l.rows()];
    let labeled = masked_ce_smoothed(
        y_l,
        p_l,
        &labeled_mask,
        smoothing,
        MaskReduction::MaskedMean,
    )?;

    let beta = beta_k(k, cfg);
    let mask = super::confidence_mask(p_u, cfg.confidence_threshold);
    let passing = mask.iter().filter(|&&m| m).count();
    let mut upstream_aug = Matrix::zeros(p_ua.rows(), p_ua.cols());
    let mut consistency = 0.0;
    if passing > 0 {
        let q = sharpen(p_u, cfg.target_temperature);
        let denom = match cfg.mask_reduction {
            MaskReduction::MaskedMean => passing,
            MaskReduction::FullBatchMean => p_ua.rows(),
        } as f64;
        let mut total = 0.0;
        for i in (0..p_ua.rows()).filter(|&i| mask[i]) {
            total += row_ce(q.row(i), p_ua.row(i))?;
            for ((u, &pc), &qc) in upstream_aug
                .row_mut(i)
                .iter_mut()
                .zip(p_ua.row(i))
                .zip(q.row(i))
            {
                *u = beta * (pc - qc) / denom;
            }
        }
        consistency = total / denom;
    }
    let mask_fraction = if mask.is_empty() {
        0.0
    } else {
        passing as f64 / mask.len() as f64
    };
    Ok(UdaOutput {
        loss: labeled.loss + beta * consistency,
        labeled_ce: labeled.loss,
        consistency,
        beta_k: beta,
        mask,
        mask_fraction,
        upstream_labeled: labeled.upstream,
        upstream_aug,
    })
}
