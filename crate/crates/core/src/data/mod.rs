//! Datasets, labelled/unlabelled splits, deterministic batching and evaluation.

mod binary;
mod csv_io;
mod micro_image;
mod moons;

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict, Matrix, ModelParams};
use crate::seed;

pub use binary::{read_cifar_binary, CifarLayout};
pub use csv_io::{export_csv, import_csv, CSV_LABEL_COLUMN, CSV_MASK_COLUMN};
pub use micro_image::{make_micro_images, MicroImageConfig};
pub use moons::{make_moons, MoonsConfig};

/// A labelled/unlabelled split of one pool of examples.
///
/// Ground-truth labels of the unlabelled part are kept for evaluation only;
/// every read of them goes through [`SslDataset::evaluation_set`] or
/// [`SslDataset::hidden_labels`] and is counted.
#[derive(Debug)]
pub struct SslDataset {
    x_labeled: Matrix,
    y_labeled: Matrix,
    x_unlabeled: Matrix,
    y_hidden: Matrix,
    class_count: usize,
    labeled_index: Vec<usize>,
    unlabeled_index: Vec<usize>,
    image_dims: Option<(usize, usize, usize)>,
    hidden_reads: AtomicUsize,
}

impl Clone for SslDataset {
    fn clone(&self) -> Self {
        Self {
            x_labeled: self.x_labeled.clone(),
            y_labeled: self.y_labeled.clone(),
            x_unlabeled: self.x_unlabeled.clone(),
            y_hidden: self.y_hidden.clone(),
            class_count: self.class_count,
            labeled_index: self.labeled_index.clone(),
            unlabeled_index: self.unlabeled_index.clone(),
            image_dims: self.image_dims,
            hidden_reads: AtomicUsize::new(self.hidden_reads.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for SslDataset {
    fn eq(&self, other: &Self) -> bool {
        self.x_labeled == other.x_labeled
            && self.y_labeled == other.y_labeled
            && self.x_unlabeled == other.x_unlabeled
            && self.y_hidden == other.y_hidden
            && self.class_count == other.class_count
            && self.labeled_index == other.labeled_index
            && self.image_dims == other.image_dims
    }
}

impl SslDataset {
    /// Splits `x` (one example per row) into the rows listed in `labeled`
    /// and the rest, preserving original order within each part.
    pub fn from_parts(
        x: &Matrix,
        labels: &[usize],
        labeled: &[usize],
        class_count: usize,
    ) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} examples",
                labels.len(),
                x.rows()
            )));
        }
        if class_count < 2 {
            return Err(Error::config("a dataset needs at least 2 classes"));
        }
        let mut is_labeled = vec![false; x.rows()];
        for &i in labeled {
            if i >= x.rows() || is_labeled[i] {
                return Err(Error::config(format!("bad or repeated labelled index {i}")));
            }
            is_labeled[i] = true;
        }
        let labeled_index: Vec<usize> = (0..x.rows()).filter(|&i| is_labeled[i]).collect();
        let unlabeled_index: Vec<usize> = (0..x.rows()).filter(|&i| !is_labeled[i]).collect();
        let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
        Ok(Self {
            x_labeled: x.select_rows(&labeled_index),
            y_labeled: Matrix::one_hot(&pick(&labeled_index), class_count)?,
            x_unlabeled: x.select_rows(&unlabeled_index),
            y_hidden: Matrix::one_hot(&pick(&unlabeled_index), class_count)?,
            class_count,
            labeled_index,
            unlabeled_index,
            image_dims: None,
            hidden_reads: AtomicUsize::new(0),
        })
    }

    pub(crate) fn with_image_dims(mut self, dims: (usize, usize, usize)) -> Self {
        self.image_dims = Some(dims);
        self
    }

    pub fn x_labeled(&self) -> &Matrix {
        &self.x_labeled
    }

    pub fn y_labeled(&self) -> &Matrix {
        &self.y_labeled
    }

    pub fn x_unlabeled(&self) -> &Matrix {
        &self.x_unlabeled
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn n_labeled(&self) -> usize {
        self.x_labeled.rows()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.x_unlabeled.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_labeled() + self.n_unlabeled()
    }

    pub fn feature_dim(&self) -> usize {
        self.x_labeled.cols().max(self.x_unlabeled.cols())
    }

    /// `(height, width, channels)` when rows are flattened images.
    pub fn image_dims(&self) -> Option<(usize, usize, usize)> {
        self.image_dims
    }

    /// Positions of the labelled examples in the original pool.
    pub fn labeled_index(&self) -> &[usize] {
        &self.labeled_index
    }

    /// Ground truth for the unlabelled rows. Evaluation only.
    pub fn hidden_labels(&self) -> &Matrix {
        self.hidden_reads.fetch_add(1, Ordering::Relaxed);
        &self.y_hidden
    }

    /// Every example with its true label, in original pool order. Evaluation only.
    pub fn evaluation_set(&self) -> (Matrix, Matrix) {
        self.hidden_reads.fetch_add(1, Ordering::Relaxed);
        let n = self.n_samples();
        let d = self.feature_dim();
        let mut x = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, self.class_count);
        let parts = [
            (&self.labeled_index, &self.x_labeled, &self.y_labeled),
            (&self.unlabeled_index, &self.x_unlabeled, &self.y_hidden),
        ];
        for (idx, xs, ys) in parts {
            for (r, &i) in idx.iter().enumerate() {
                x.row_mut(i).copy_from_slice(xs.row(r));
                y.row_mut(i).copy_from_slice(ys.row(r));
            }
        }
        (x, y)
    }

    /// How many times hidden labels have been read.
    pub fn hidden_label_reads(&self) -> usize {
        self.hidden_reads.load(Ordering::Relaxed)
    }

    /// Same pool with every unlabelled example dropped.
    pub fn without_unlabeled(&self) -> SslDataset {
        SslDataset {
            x_unlabeled: Matrix::zeros(0, self.feature_dim()),
            y_hidden: Matrix::zeros(0, self.class_count),
            unlabeled_index: Vec::new(),
            labeled_index: (0..self.n_labeled()).collect(),
            hidden_reads: AtomicUsize::new(0),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size_labeled: usize,
    pub batch_size_unlabeled: usize,
    pub shuffle_seed: u64,
}

impl BatchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size_labeled == 0 || self.batch_size_unlabeled == 0 {
            return Err(Error::config(
                "batch.labeled and batch.unlabeled must be >= 1",
            ));
        }
        Ok(())
    }
}

/// One training mini-batch. `x_ua` starts as a copy of `x_u`; trainers
/// replace it with an augmented view.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x_l: Matrix,
    pub y_l: Matrix,
    pub x_u: Matrix,
    pub x_ua: Matrix,
    pub labeled_idx: Vec<usize>,
    pub unlabeled_idx: Vec<usize>,
}

const LABELED_STREAM: u64 = 0x1AB;
const UNLABELED_STREAM: u64 = 0x0B1;

/// Indices for position `step` of an endless sequence of shuffled passes over
/// `n` items, `batch` at a time. The last batch of a pass may be short.
fn epoch_slice(n: usize, batch: usize, stream_seed: u64, step: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let per_epoch = n.div_ceil(batch);
    let epoch = step / per_epoch;
    let pos = step % per_epoch;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed::derive(stream_seed, &[epoch as u64])));
    perm[pos * batch..((pos + 1) * batch).min(n)].to_vec()
}

/// The batch at `step`: a pure function of `(dataset, plan, step)`.
///
/// The unlabelled stream walks shuffled epochs without replacement; the
/// labelled stream cycles on its own schedule with a reshuffle each pass.
pub fn next_batch(ds: &SslDataset, plan: &BatchPlan, step: usize) -> Batch {
    let lab_seed = seed::derive(plan.shuffle_seed, &[LABELED_STREAM]);
    let unl_seed = seed::derive(plan.shuffle_seed, &[UNLABELED_STREAM]);
    let labeled_idx = epoch_slice(ds.n_labeled(), plan.batch_size_labeled, lab_seed, step);
    let unlabeled_idx = epoch_slice(ds.n_unlabeled(), plan.batch_size_unlabeled, unl_seed, step);
    let x_u = if unlabeled_idx.is_empty() {
        Matrix::zeros(0, ds.feature_dim())
    } else {
        ds.x_unlabeled.select_rows(&unlabeled_idx)
    };
    Batch {
        x_l: ds.x_labeled.select_rows(&labeled_idx),
        y_l: ds.y_labeled.select_rows(&labeled_idx),
        x_ua: x_u.clone(),
        x_u,
        labeled_idx,
        unlabeled_idx,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// `resolution^2` lattice points, row-major: `y` is the outer index, `x` the inner.
pub fn eval_grid(bounds: &GridBounds, resolution: usize) -> Result<Matrix> {
    if resolution < 2 {
        return Err(Error::config("grid resolution must be >= 2"));
    }
    if !(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min) {
        return Err(Error::config("grid bounds must satisfy min < max"));
    }
    let steps = (resolution - 1) as f64;
    let coord = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / steps;
    let mut g = Matrix::zeros(resolution * resolution, 2);
    for i in 0..resolution {
        for j in 0..resolution {
            let r = g.row_mut(i * resolution + j);
            r[0] = coord(bounds.x_min, bounds.x_max, j);
            r[1] = coord(bounds.y_min, bounds.y_max, i);
        }
    }
    Ok(g)
}

/// Fraction of rows whose `Eval`-mode argmax matches the one-hot truth.
pub fn accuracy(params: &ModelParams, x: &Matrix, y_true: &Matrix) -> Result<f64> {
    if x.rows() != y_true.rows() {
        return Err(Error::shape(format!(
            "{} inputs vs {} labels",
            x.rows(),
            y_true.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::shape("accuracy of an empty set"));
    }
    let logits = predict(params, x)?;
    if logits.cols() != y_true.cols() {
        return Err(Error::shape("label width does not match network output"));
    }
    let hits = (0..x.rows())
        .filter(|&i| logits.argmax_row(i) == y_true.argmax_row(i))
        .count();
    Ok(hits as f64 / x.rows() as f64)
}
