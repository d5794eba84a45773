//! Synthetic two-class raster task: a soft blob left or right of centre.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SslDataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroImageConfig {
    pub n_samples: usize,
    pub n_labeled: usize,
    /// Square image side in pixels.
    pub size: usize,
    /// Per-pixel Gaussian noise.
    pub noise_std: f64,
    /// Blob radius (Gaussian std) in pixels.
    pub blob_std: f64,
    pub seed: u64,
}

impl Default for MicroImageConfig {
    fn default() -> Self {
        Self {
            n_samples: 600,
            n_labeled: 4,
            size: 8,
            noise_std: 0.15,
            blob_std: 1.2,
            seed: 0,
        }
    }
}

impl MicroImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 4 {
            return Err(Error::config("data.size must be >= 4"));
        }
        if self.n_samples < 2 || self.n_labeled < 2 || self.n_labeled > self.n_samples {
            return Err(Error::config("data needs 2 <= n_labeled <= n_samples"));
        }
        if !(self.noise_std >= 0.0 && self.blob_std > 0.0) {
            return Err(Error::config(
                "data.noise_std must be >= 0 and data.blob_std > 0",
            ));
        }
        Ok(())
    }
}

/// Single-channel `size x size` images. Class 0 centres its blob in the left
/// part of the frame, class 1 in the right; the centre ranges leave a gap.
pub fn make_micro_images(cfg: &MicroImageConfig) -> Result<SslDataset> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &[0x1A6E]));
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated std");
    let s = cfg.size as f64;
    let n0 = cfg.n_samples.div_ceil(2);
    let dim = cfg.size * cfg.size;
    let mut x = Matrix::zeros(cfg.n_samples, dim);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let class = usize::from(i >= n0);
        let cx = if class == 0 {
            rng.random_range(0.15 * s..0.4 * s)
        } else {
            rng.random_range(0.6 * s..0.85 * s)
        };
        let cy = rng.random_range(0.2 * s..0.8 * s);
        let amp = rng.random_range(0.6..1.0);
        let row = x.row_mut(i);
        for py in 0..cfg.size {
            for px in 0..cfg.size {
                let d2 = (px as f64 + 0.5 - cx).powi(2) + (py as f64 + 0.5 - cy).powi(2);
                let mut v = amp * (-d2 / (2.0 * cfg.blob_std * cfg.blob_std)).exp();
                if cfg.noise_std > 0.0 {
                    v += noise.sample(&mut rng);
                }
                row[py * cfg.size + px] = v.clamp(0.0, 1.0);
            }
        }
        labels.push(class);
    }
    let labeled = loop {
        let pick = sample(&mut rng, cfg.n_samples, cfg.n_labeled).into_vec();
        if pick.iter().any(|&i| labels[i] == 0) && pick.iter().any(|&i| labels[i] == 1) {
            break pick;
        }
    };
    Ok(SslDataset::from_parts(&x, &labels, &labeled, 2)?.with_image_dims((cfg.size, cfg.size, 1)))
}
