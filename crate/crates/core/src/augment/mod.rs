//! Data augmentation: random image policies and 2-D point jitter.

mod ops;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::seed;

pub use ops::{apply_op, MAX_MAGNITUDE};

/// Height x width x channels image, channel-interleaved, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pixels: Vec<f64>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!(
                "{channels} channels; expected 1 or 3"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::shape("image has a zero dimension"));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{} pixel values for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        let mut img = Self {
            height,
            width,
            channels,
            pixels,
        };
        img.clamp();
        Ok(img)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, v: f64) {
        self.pixels[(y * self.width + x) * self.channels + ch] = v;
    }

    pub(crate) fn channel_values(&self, ch: usize) -> impl Iterator<Item = f64> + '_ {
        self.pixels.iter().skip(ch).step_by(self.channels).copied()
    }

    pub(crate) fn map_channel(&mut self, ch: usize, f: impl Fn(f64) -> f64) {
        let c = self.channels;
        self.pixels
            .iter_mut()
            .skip(ch)
            .step_by(c)
            .for_each(|v| *v = f(*v));
    }

    pub(crate) fn map_pixels(&self, f: impl Fn(f64) -> f64) -> RasterImage {
        RasterImage {
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub(crate) fn clamp(&mut self) {
        for v in &mut self.pixels {
            // NaN never arises from the ops; map it to mid-gray if it ever does.
            *v = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
        }
    }
}

/// The fifteen augmentation policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentOp {
    AutoContrast,
    Brightness,
    Color,
    Contrast,
    Cutout,
    Equalize,
    Invert,
    Sharpness,
    Posterize,
    Solarize,
    Rotate,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 15] = [
        AugmentOp::AutoContrast,
        AugmentOp::Brightness,
        AugmentOp::Color,
        AugmentOp::Contrast,
        AugmentOp::Cutout,
        AugmentOp::Equalize,
        AugmentOp::Invert,
        AugmentOp::Sharpness,
        AugmentOp::Posterize,
        AugmentOp::Solarize,
        AugmentOp::Rotate,
        AugmentOp::ShearX,
        AugmentOp::ShearY,
        AugmentOp::TranslateX,
        AugmentOp::TranslateY,
    ];

    /// Every op except Cutout, which `rand_augment` applies separately.
    pub fn sampling_pool() -> Vec<AugmentOp> {
        Self::ALL
            .iter()
            .copied()
            .filter(|&op| op != AugmentOp::Cutout)
            .collect()
    }

    /// Ops that are the identity at magnitude 0.
    pub fn is_identity_at_zero(self) -> bool {
        matches!(
            self,
            AugmentOp::Brightness
                | AugmentOp::Color
                | AugmentOp::Contrast
                | AugmentOp::Sharpness
                | AugmentOp::Rotate
                | AugmentOp::ShearX
                | AugmentOp::ShearY
                | AugmentOp::TranslateX
                | AugmentOp::TranslateY
                | AugmentOp::Cutout
                | AugmentOp::Solarize
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandAugmentConfig {
    pub num_ops: usize,
    pub magnitude: u32,
    pub seed: u64,
    /// Apply a trailing Cutout of half the image side.
    #[serde(default = "default_true")]
    pub cutout: bool,
    /// Ops sampled from; empty means [`AugmentOp::sampling_pool`].
    #[serde(default)]
    pub ops: Vec<AugmentOp>,
}

fn default_true() -> bool {
    true
}

impl Default for RandAugmentConfig {
    fn default() -> Self {
        Self {
            num_ops: 2,
            magnitude: 16,
            seed: 0,
            cutout: true,
            ops: Vec::new(),
        }
    }
}

impl RandAugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_ops == 0 {
            return Err(Error::config("augment.num_ops must be >= 1"));
        }
        if self.magnitude > MAX_MAGNITUDE {
            return Err(Error::config(format!(
                "augment.magnitude must be in [0, {MAX_MAGNITUDE}], got {}",
                self.magnitude
            )));
        }
        Ok(())
    }
}

/// Samples `num_ops` ops uniformly with replacement, applies each at the fixed
/// magnitude, then (if enabled) a Cutout of half the image side.
pub fn rand_augment(img: &RasterImage, cfg: &RandAugmentConfig) -> RasterImage {
    let pool = if cfg.ops.is_empty() {
        AugmentOp::sampling_pool()
    } else {
        cfg.ops.clone()
    };
    let mut rng = seed::rng(seed::derive(cfg.seed, &[0xA06]));
    let mut out = img.clone();
    for _ in 0..cfg.num_ops {
        let op = pool[rng.random_range(0..pool.len())];
        out = apply_op(&out, op, cfg.magnitude, rng.random());
    }
    if cfg.cutout {
        out = apply_op(&out, AugmentOp::Cutout, MAX_MAGNITUDE, rng.random());
    }
    out
}

/// Applies `rand_augment` independently to each row of `x`, where a row is a
/// flattened `height x width x channels` image.
pub fn augment_rows(
    x: &Matrix,
    dims: (usize, usize, usize),
    cfg: &RandAugmentConfig,
    seed: u64,
) -> Result<Matrix> {
    let (h, w, c) = dims;
    if x.cols() != h * w * c {
        return Err(Error::shape(format!(
            "rows of width {} are not {h}x{w}x{c} images",
            x.cols()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let img = RasterImage::new(h, w, c, x.row(i).to_vec())?;
        let row_cfg = RandAugmentConfig {
            seed: seed::derive(seed, &[i as u64]),
            ..cfg.clone()
        };
        out.row_mut(i)
            .copy_from_slice(rand_augment(&img, &row_cfg).pixels());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    pub noise_std: f64,
}

/// Adds independent `N(0, std^2)` noise to every coordinate.
pub fn jitter2d(x: &Matrix, cfg: &JitterConfig, seed: u64) -> Matrix {
    if cfg.noise_std == 0.0 {
        return x.clone();
    }
    let normal = Normal::new(0.0, cfg.noise_std).expect("noise std is finite and >= 0");
    let mut rng = seed::rng(seed);
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    out
}
