//! Two interleaving half circles in the plane.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SslDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoonsConfig {
    pub n_samples: usize,
    pub noise_std: f64,
    pub n_labeled: usize,
    pub seed: u64,
    /// Redraw the labelled subset until every class is represented.
    #[serde(default = "default_stratify")]
    pub stratify: bool,
}

fn default_stratify() -> bool {
    true
}

impl Default for MoonsConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            noise_std: 0.1,
            n_labeled: 6,
            seed: 0,
            stratify: true,
        }
    }
}

impl MoonsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::config("data.n_samples must be >= 2"));
        }
        if self.n_labeled > self.n_samples {
            return Err(Error::config(format!(
                "data.n_labeled ({}) exceeds n_samples ({})",
                self.n_labeled, self.n_samples
            )));
        }
        if self.stratify && self.n_labeled < 2 {
            return Err(Error::config(
                "data.n_labeled must be >= 2 to cover both classes",
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("data.noise_std must be >= 0"));
        }
        Ok(())
    }
}

/// Class 0 on `(cos t, sin t)`, class 1 on `(1 - cos t, 0.5 - sin t)`,
/// `t ~ U[0, pi]`, plus isotropic Gaussian noise. Class 0 gets the extra
/// point when `n_samples` is odd.
pub fn make_moons(cfg: &MoonsConfig) -> Result<SslDataset> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &[0x3005]));
    let n0 = cfg.n_samples.div_ceil(2);
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated noise std");
    let mut x = Matrix::zeros(cfg.n_samples, 2);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let t: f64 = rng.random_range(0.0..=std::f64::consts::PI);
        let (s, c) = t.sin_cos();
        let (class, px, py) = if i < n0 {
            (0, c, s)
        } else {
            (1, 1.0 - c, 0.5 - s)
        };
        let row = x.row_mut(i);
        row[0] = px;
        row[1] = py;
        if cfg.noise_std > 0.0 {
            row[0] += noise.sample(&mut rng);
            row[1] += noise.sample(&mut rng);
        }
        labels.push(class);
    }

    let labeled = loop {
        let pick = sample(&mut rng, cfg.n_samples, cfg.n_labeled).into_vec();
        let has_both = pick.iter().any(|&i| labels[i] == 0) && pick.iter().any(|&i| labels[i] == 1);
        if !cfg.stratify || has_both {
            break pick;
        }
    };
    SslDataset::from_parts(&x, &labels, &labeled, 2)
}
