//! The meta pseudo-label term: labelled-loss improvement times pseudo-label CE.

use serde::{Deserialize, Serialize};

use super::{ce_smoothed, SmoothingConfig};
use crate::error::{Error, Result};
use crate::nn::{GradientSet, Matrix, ModelParams};

/// Orientation of the labelled-loss difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSign {
    /// `before - after`: positive when the first update helped.
    #[default]
    BeforeMinusAfter,
    AfterMinusBefore,
}

/// How the feedback coefficient is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Direct difference of labelled cross-entropy across the first update.
    #[default]
    LossDifference,
    /// First-order estimate `<grad CE_l(theta'), theta - theta'>`.
    GradientDot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MplConfig {
    pub lambda: f64,
    pub ema_decay: f64,
    #[serde(default)]
    pub delta_sign: DeltaSign,
    #[serde(default)]
    pub delta_mode: DeltaMode,
}

impl Default for MplConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            ema_decay: 0.99,
            delta_sign: DeltaSign::BeforeMinusAfter,
            delta_mode: DeltaMode::LossDifference,
        }
    }
}

impl MplConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "losses.lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::config(format!(
                "losses.ema_decay must be in [0, 1), got {}",
                self.ema_decay
            )));
        }
        Ok(())
    }
}

/// Moving-average baseline, starting at 0 without bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaTracker {
    pub value: f64,
    pub decay: f64,
    pub initialized: bool,
}

impl EmaTracker {
    pub fn new(decay: f64) -> Self {
        Self {
            value: 0.0,
            decay,
            initialized: false,
        }
    }

    #[must_use]
    pub fn updated(self, x: f64) -> Self {
        Self {
            value: self.decay * self.value + (1.0 - self.decay) * x,
            decay: self.decay,
            initialized: true,
        }
    }
}

pub fn delta_ce(ce_before: f64, ce_after: f64) -> f64 {
    ce_before - ce_after
}

impl DeltaSign {
    pub fn apply(self, ce_before: f64, ce_after: f64) -> f64 {
        match self {
            DeltaSign::BeforeMinusAfter => delta_ce(ce_before, ce_after),
            DeltaSign::AfterMinusBefore => -delta_ce(ce_before, ce_after),
        }
    }
}

/// First-order estimate of `CE(before) - CE(after)`: the labelled-loss
/// gradient dotted with the displacement `before - after`. For a plain SGD
/// step `after = before - lr * g1` this is `lr * <grad CE, g1>`.
pub fn gradient_dot_delta(
    grad_labeled: &GradientSet,
    before: &ModelParams,
    after: &ModelParams,
) -> f64 {
    grad_labeled
        .iter_values()
        .zip(before.iter_values().zip(after.iter_values()))
        .map(|(g, (b, a))| g * (b - a))
        .sum()
}

#[derive(Debug, Clone)]
pub struct MplOutput {
    pub loss: f64,
    /// `delta - ema`; a constant coefficient, never differentiated.
    pub signal: f64,
    /// The pseudo-label cross-entropy being scaled.
    pub ce: f64,
    pub upstream_u: Matrix,
}

/// `(delta - ema) * CE(hard_u, p_u)` with the coefficient held constant.
/// Returns the tracker after absorbing `delta`.
pub fn mpl_loss(
    delta: f64,
    ema: EmaTracker,
    p_u: &Matrix,
    hard_u: &Matrix,
    smoothing: &SmoothingConfig,
) -> Result<(MplOutput, EmaTracker)> {
    let signal = delta - ema.value;
    let (ce, upstream) = ce_smoothed(hard_u, p_u, smoothing)?;
    let out = MplOutput {
        loss: signal * ce,
        signal,
        ce,
        upstream_u: upstream.scale(signal),
    };
    Ok((out, ema.updated(delta)))
}

pub fn l2_total(l_uda: f64, l_mpl: f64, lambda: f64) -> f64 {
    l_uda + lambda * l_mpl
}
