//! Layer specifications, parameter storage and gradient sets.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative evaluated at the pre-activation. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }
}

/// ReLU hidden layers of the given widths followed by an identity output layer.
pub fn mlp_spec(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(classes);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

pub fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::shape("network spec has no layers"));
    }
    for (i, l) in spec.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::shape(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in spec.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::shape(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].out_dim,
                i + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Weight matrix (`out_dim x in_dim`) and bias column (`out_dim x 1`) of one dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl DenseLayer {
    fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weights: Matrix::zeros(spec.out_dim, spec.in_dim),
            bias: Matrix::zeros(spec.out_dim, 1),
        }
    }
}

/// Shared flat-view helpers for parameter-shaped collections.
macro_rules! layer_collection {
    ($ty:ty) => {
        impl $ty {
            pub fn layers(&self) -> &[DenseLayer] {
                &self.layers
            }

            pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
                &mut self.layers
            }

            /// Total number of scalars across all layers.
            pub fn len(&self) -> usize {
                self.layers
                    .iter()
                    .map(|l| l.weights.len() + l.bias.len())
                    .sum()
            }

            pub fn is_empty(&self) -> bool {
                self.len() == 0
            }

            /// All scalars in canonical order: per layer, weights row-major then bias.
            pub fn iter_values(&self) -> impl Iterator<Item = &f64> {
                self.layers
                    .iter()
                    .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.as_slice()))
            }

            pub fn iter_values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
                self.layers.iter_mut().flat_map(|l| {
                    l.weights
                        .as_mut_slice()
                        .iter_mut()
                        .chain(l.bias.as_mut_slice().iter_mut())
                })
            }

            pub fn to_flat(&self) -> Vec<f64> {
                self.iter_values().copied().collect()
            }

            pub fn is_finite(&self) -> bool {
                self.iter_values().all(|v| v.is_finite())
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    spec: Vec<LayerSpec>,
    layers: Vec<DenseLayer>,
}

layer_collection!(ModelParams);

impl ModelParams {
    pub fn zeros(spec: &[LayerSpec]) -> Result<Self> {
        validate_spec(spec)?;
        Ok(Self {
            spec: spec.to_vec(),
            layers: spec.iter().map(DenseLayer::zeros).collect(),
        })
    }

    /// Assembles parameters from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: &[LayerSpec], layers: Vec<DenseLayer>) -> Result<Self> {
        validate_spec(spec)?;
        if spec.len() != layers.len() {
            return Err(Error::shape(format!(
                "{} layer specs but {} layers",
                spec.len(),
                layers.len()
            )));
        }
        for (i, (s, l)) in spec.iter().zip(&layers).enumerate() {
            if l.weights.shape() != (s.out_dim, s.in_dim) || l.bias.shape() != (s.out_dim, 1) {
                return Err(Error::shape(format!("layer {i} does not match its spec")));
            }
        }
        Ok(Self {
            spec: spec.to_vec(),
            layers,
        })
    }

    pub fn from_flat(spec: &[LayerSpec], values: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        if values.len() != params.len() {
            return Err(Error::shape(format!(
                "{} values for a network with {} parameters",
                values.len(),
                params.len()
            )));
        }
        for (dst, &src) in params.iter_values_mut().zip(values) {
            *dst = src;
        }
        Ok(params)
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.spec.iter().map(LayerSpec::param_count).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.spec[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec[self.spec.len() - 1].out_dim
    }

    /// A zero gradient set congruent with these parameters.
    pub fn zero_grads(&self) -> GradientSet {
        GradientSet {
            layers: self.spec.iter().map(DenseLayer::zeros).collect(),
        }
    }

    pub(crate) fn check_congruent(&self, grads: &GradientSet) -> Result<()> {
        let ok = self.layers.len() == grads.layers.len()
            && self.layers.iter().zip(&grads.layers).all(|(p, g)| {
                p.weights.shape() == g.weights.shape() && p.bias.shape() == g.bias.shape()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "gradient set is not congruent with the parameters",
            ))
        }
    }
}

/// He-scaled normal weights (std = sqrt(2 / in_dim)) and zero biases.
pub fn init_params(spec: &[LayerSpec], seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(spec)?;
    let mut rng = seed::rng(seed::derive(seed, &[0x1417]));
    for (layer, s) in params.layers.iter_mut().zip(spec) {
        let std = (2.0 / s.in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        for w in layer.weights.as_mut_slice() {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    layers: Vec<DenseLayer>,
}

layer_collection!(GradientSet);

impl GradientSet {
    pub(crate) fn from_layers(layers: Vec<DenseLayer>) -> Self {
        Self { layers }
    }

    /// L2 norm over every entry of every layer.
    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.sum_sq() + l.bias.sum_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.iter_values_mut().for_each(|v| *v *= c);
    }

    pub fn scaled(&self, c: f64) -> GradientSet {
        let mut g = self.clone();
        g.scale(c);
        g
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &GradientSet) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient sets differ in depth"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.axpy(c, &b.weights)?;
            a.bias.axpy(c, &b.bias)?;
        }
        Ok(())
    }

    pub fn dot(&self, other: &GradientSet) -> f64 {
        self.iter_values()
            .zip(other.iter_values())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter_values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// L2 norm of a gradient set.
pub fn global_norm(grads: &GradientSet) -> f64 {
    grads.global_norm()
}
