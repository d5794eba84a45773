//! Training engine for self meta pseudo-labelling on small dense networks.
//!
//! A single model generates hard pseudo labels for unlabelled data, takes an
//! SGD step on them, measures how that step changed its labelled loss, and
//! takes a second corrective step whose pseudo-label term is weighted by that
//! change. Supervised, fixed-teacher pseudo-label and two-model meta
//! pseudo-label trainers are provided as baselines.
//!
//! Modules:
//! - [`nn`]: matrices, dense layers, forward/backward, SGD.
//! - [`losses`]: smoothed cross-entropy, consistency and meta terms.
//! - [`augment`]: raster image policies and 2-D jitter.
//! - [`data`]: moons and micro-image datasets, batching, CSV and binary IO.
//! - [`trainers`]: the four training procedures and their artifacts.
//! - [`config`]: experiment configuration and embedded presets.

pub mod augment;
pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod nn;
pub mod seed;
pub mod trainers;

pub use error::{Error, Result};
