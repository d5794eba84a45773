//! Plain SGD with optional global-norm clipping, momentum and cosine decay.

use serde::{Deserialize, Serialize};

use super::{GradientSet, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr0 * (1 + cos(pi * step / total_steps)) / 2`, floored at a tiny positive value.
    Cosine { total_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    #[serde(default)]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub schedule: LrSchedule,
    /// Heavy-ball coefficient; `None` is plain SGD with no optimizer state.
    #[serde(default)]
    pub momentum: Option<f64>,
}

/// Cosine decay reaches exactly zero at `total_steps`; the floor keeps the
/// effective rate strictly positive.
const MIN_LR_FRACTION: f64 = 1e-6;

impl SgdConfig {
    pub fn constant(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            clip_norm: None,
            schedule: LrSchedule::Constant,
            momentum: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::config(format!(
                    "optim.clip_norm must be positive, got {c}"
                )));
            }
        }
        if let Some(m) = self.momentum {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::config(format!(
                    "optim.momentum must be in [0, 1), got {m}"
                )));
            }
        }
        if let LrSchedule::Cosine { total_steps } = self.schedule {
            if total_steps == 0 {
                return Err(Error::config(
                    "optim.schedule.total_steps must be >= 1 for a cosine schedule",
                ));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { total_steps } => {
                let t = (step as f64 / total_steps as f64).min(1.0);
                let factor = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                self.learning_rate * factor.max(MIN_LR_FRACTION)
            }
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }
}

/// Rescales `grads` in place so its global norm does not exceed `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradientSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

fn check_finite(grads: &GradientSet) -> Result<()> {
    if grads.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(
            "non-finite gradient; update refused".to_string(),
        ))
    }
}

/// One plain SGD update: clip (if configured), then `theta - lr(step) * g`.
///
/// Momentum in `cfg` is ignored here since it needs state; see [`Sgd`].
pub fn sgd_step(
    params: &ModelParams,
    grads: &GradientSet,
    cfg: &SgdConfig,
    step: usize,
) -> Result<ModelParams> {
    params.check_congruent(grads)?;
    check_finite(grads)?;
    let mut g = grads.clone();
    if let Some(c) = cfg.clip_norm {
        clip_global_norm(&mut g, c);
    }
    let lr = cfg.lr_at(step);
    let mut out = params.clone();
    for (p, &gv) in out.iter_values_mut().zip(g.iter_values()) {
        *p -= lr * gv;
    }
    Ok(out)
}

/// Stateful SGD: plain when `momentum` is `None`, heavy-ball otherwise.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocity: Option<GradientSet>,
}

impl Sgd {
    pub fn new() -> Self {
        Self { velocity: None }
    }

    /// Scalars of optimizer state currently held.
    pub fn state_len(&self) -> usize {
        self.velocity.as_ref().map_or(0, GradientSet::len)
    }

    pub fn step(
        &mut self,
        params: &ModelParams,
        grads: &GradientSet,
        cfg: &SgdConfig,
        step: usize,
    ) -> Result<ModelParams> {
        let Some(mu) = cfg.momentum else {
            return sgd_step(params, grads, cfg, step);
        };
        params.check_congruent(grads)?;
        check_finite(grads)?;
        let mut g = grads.clone();
        if let Some(c) = cfg.clip_norm {
            clip_global_norm(&mut g, c);
        }
        let v = match self.velocity.take() {
            Some(mut v) => {
                v.scale(mu);
                v.add_scaled(1.0, &g)?;
                v
            }
            None => g,
        };
        let lr = cfg.lr_at(step);
        let mut out = params.clone();
        for (p, &vv) in out.iter_values_mut().zip(v.iter_values()) {
            *p -= lr * vv;
        }
        self.velocity = Some(v);
        Ok(out)
    }
}

impl Default for Sgd {
    fn default() -> Self {
        Self::new()
    }
}
