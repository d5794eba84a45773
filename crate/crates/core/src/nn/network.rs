//! Forward pass with traces, exact reverse-mode gradients and softmax.

use rand::Rng;

use super::params::DenseLayer;
use super::{GradientSet, Matrix, ModelParams};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything `backward` needs to differentiate one forward call.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input seen by each layer (after dropout where applied).
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    /// `(layer index whose output was dropped, scaled keep mask)`.
    dropout: Option<(usize, Matrix)>,
    logits: Matrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    pub fn layer_inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    pub fn dropout_mask(&self) -> Option<&Matrix> {
        self.dropout.as_ref().map(|(_, m)| m)
    }

    pub fn batch_size(&self) -> usize {
        self.logits.rows()
    }
}

fn affine(layer: &DenseLayer, x: &Matrix) -> Result<Matrix> {
    let mut z = x.matmul_t(&layer.weights)?;
    let b = layer.bias.as_slice();
    for i in 0..z.rows() {
        for (v, &bj) in z.row_mut(i).iter_mut().zip(b) {
            *v += bj;
        }
    }
    Ok(z)
}

/// Runs the network on `x` (`batch x features`).
///
/// In `Train` mode inverted dropout (kept units scaled by `1 / (1 - rate)`) is
/// applied to the output of the last hidden layer only; the mask is drawn from
/// `seed`. `Eval` mode ignores both `dropout_rate` and `seed`.
pub fn forward(
    params: &ModelParams,
    x: &Matrix,
    dropout_rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<(Matrix, ForwardTrace)> {
    if x.cols() != params.input_dim() {
        return Err(Error::shape(format!(
            "input has {} features, network expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::config(format!(
            "dropout rate {dropout_rate} outside [0, 1)"
        )));
    }
    let spec = params.spec();
    let depth = spec.len();
    let dropout_layer = match mode {
        Mode::Train if dropout_rate > 0.0 && depth >= 2 => Some(depth - 2),
        _ => None,
    };

    let mut inputs = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut dropout = None;
    let mut current = x.clone();
    for (i, (layer, s)) in params.layers().iter().zip(spec).enumerate() {
        let z = affine(layer, &current)?;
        let mut a = z.map(|v| s.activation.apply(v));
        if dropout_layer == Some(i) {
            let keep = 1.0 - dropout_rate;
            let mut rng = seed::rng(seed);
            let mut mask = Matrix::zeros(a.rows(), a.cols());
            for m in mask.as_mut_slice() {
                if rng.random::<f64>() < keep {
                    *m = 1.0 / keep;
                }
            }
            a = a.zip_map(&mask, |v, m| v * m)?;
            dropout = Some((i, mask));
        }
        inputs.push(std::mem::replace(&mut current, a));
        pre.push(z);
    }
    let logits = current;
    let trace = ForwardTrace {
        inputs,
        pre_activations: pre,
        dropout,
        logits: logits.clone(),
    };
    Ok((logits, trace))
}

/// Logits of an `Eval`-mode forward pass.
pub fn predict(params: &ModelParams, x: &Matrix) -> Result<Matrix> {
    forward(params, x, 0.0, Mode::Eval, 0).map(|(logits, _)| logits)
}

/// Exact gradients of a scalar loss given `upstream = dloss/dlogits`.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    upstream: &Matrix,
) -> Result<GradientSet> {
    if upstream.shape() != trace.logits.shape() {
        return Err(Error::shape(format!(
            "upstream is {}x{}, logits are {}x{}",
            upstream.rows(),
            upstream.cols(),
            trace.logits.rows(),
            trace.logits.cols()
        )));
    }
    let spec = params.spec();
    if trace.pre_activations.len() != spec.len() {
        return Err(Error::shape("trace depth does not match the network"));
    }
    let mut grads: Vec<DenseLayer> = Vec::with_capacity(spec.len());
    let mut d_out = upstream.clone();
    for i in (0..spec.len()).rev() {
        let z = &trace.pre_activations[i];
        let act = spec[i].activation;
        let dz = d_out.zip_map(z, |d, zv| d * act.derivative(zv))?;
        let input = &trace.inputs[i];
        let gw = dz.t_matmul(input)?;
        let gb = dz.col_sums();
        grads.push(DenseLayer {
            weights: gw,
            bias: gb,
        });
        if i > 0 {
            let mut d_in = dz.matmul(&params.layers()[i].weights)?;
            if let Some((layer, mask)) = &trace.dropout {
                if *layer == i - 1 {
                    d_in = d_in.zip_map(mask, |d, m| d * m)?;
                }
            }
            d_out = d_in;
        }
    }
    grads.reverse();
    Ok(GradientSet::from_layers(grads))
}

/// Row-wise softmax of `logits / temperature`, computed with max subtraction.
pub fn softmax(logits: &Matrix, temperature: f64) -> Matrix {
    debug_assert!(temperature > 0.0);
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let dst = out.row_mut(i);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = ((v - max) / temperature).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}
