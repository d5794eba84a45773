//! Parameter-space trajectory snapshots projected to two dimensions.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::SslDataset;
use crate::error::{Error, Result};
use crate::losses::{ce_smoothed, SmoothingConfig};
use crate::nn::{predict, softmax, LayerSpec, ModelParams};
use crate::seed;

/// Fixed seed of the projection directions, so runs with different seeds
/// share one coordinate system.
const PROJECTION_SEED: u64 = 0x7_4A3C;

/// Linear map from a flat parameter vector to the plane.
///
/// For two-parameter models it is the identity; otherwise two orthonormal
/// Gaussian directions drawn from a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub dim: usize,
    /// Empty for the identity.
    pub directions: Vec<[f64; 2]>,
}

impl Projection {
    pub fn new(dim: usize) -> Self {
        if dim == 2 {
            return Self {
                dim,
                directions: Vec::new(),
            };
        }
        let mut rng = seed::rng(PROJECTION_SEED);
        let mut a: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut b: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut a);
        let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        b.iter_mut().zip(&a).for_each(|(y, x)| *y -= ab * x);
        normalize(&mut b);
        Self {
            dim,
            directions: a.into_iter().zip(b).map(|(x, y)| [x, y]).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn project(&self, flat: &[f64]) -> Result<[f64; 2]> {
        if flat.len() != self.dim {
            return Err(Error::shape(format!(
                "projecting {} values with a {}-dimensional projection",
                flat.len(),
                self.dim
            )));
        }
        if self.is_identity() {
            return Ok([flat[0], flat[1]]);
        }
        Ok(flat
            .iter()
            .zip(&self.directions)
            .fold([0.0, 0.0], |[x, y], (v, d)| [x + v * d[0], y + v * d[1]]))
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Where in a step a snapshot was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryPhase {
    Init,
    /// After the first of two updates.
    StepOne,
    /// After the second of two updates.
    StepTwo,
    /// After the only update of a single-update trainer.
    Update,
}

impl TrajectoryPhase {
    pub fn name(self) -> &'static str {
        match self {
            TrajectoryPhase::Init => "init",
            TrajectoryPhase::StepOne => "step_one",
            TrajectoryPhase::StepTwo => "step_two",
            TrajectoryPhase::Update => "update",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// `None` for the initial parameters.
    pub step: Option<usize>,
    pub phase: TrajectoryPhase,
    pub coords: [f64; 2],
    /// Smoothed labelled cross-entropy without dropout.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    /// Snapshot cadence in steps; 0 means no snapshots were taken.
    pub every: usize,
    pub projection: Projection,
    pub points: Vec<TrajectoryPoint>,
}

impl TrajectoryDump {
    pub fn new(spec: &[LayerSpec], every: usize) -> Self {
        let dim = spec.iter().map(LayerSpec::param_count).sum();
        Self {
            every,
            projection: Projection::new(dim),
            points: Vec::new(),
        }
    }

    pub fn record(
        &mut self,
        step: Option<usize>,
        phase: TrajectoryPhase,
        params: &ModelParams,
        ds: &SslDataset,
        smoothing: &SmoothingConfig,
    ) -> Result<()> {
        let p = softmax(&predict(params, ds.x_labeled())?, 1.0);
        let (loss, _) = ce_smoothed(ds.y_labeled(), &p, smoothing)?;
        let coords = self.projection.project(&params.to_flat())?;
        self.points.push(TrajectoryPoint {
            step,
            phase,
            coords,
            loss,
        });
        Ok(())
    }

    /// CSV with header `step,phase,x,y,loss`; the initial point has an
    /// empty step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "phase", "x", "y", "loss"])?;
        for p in &self.points {
            let step = p.step.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([
                step,
                p.phase.name().to_string(),
                p.coords[0].to_string(),
                p.coords[1].to_string(),
                p.loss.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
