//! Exact parameter-copy accounting per trainer.

use serde::{Deserialize, Serialize};

use super::{OptimConfig, TrainerKind};
use crate::nn::LayerSpec;

/// Scalar counts of what a trainer keeps alive.
///
/// Resident state is what persists across steps: model copies plus optimizer
/// state. Transient gradient sets are built and dropped within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub trainer: TrainerKind,
    /// Parameters of one model.
    pub param_count: usize,
    pub peak_live_model_copies: usize,
    pub resident_param_count: usize,
    pub optimizer_state_count: usize,
    pub transient_gradient_sets: usize,
    pub transient_gradient_count: usize,
}

impl MemoryReport {
    pub fn resident_total(&self) -> usize {
        self.resident_param_count + self.optimizer_state_count
    }
}

/// Accounting for plain SGD.
pub fn memory_report(kind: TrainerKind, spec: &[LayerSpec]) -> MemoryReport {
    memory_report_with(kind, spec, &OptimConfig::default())
}

/// Accounting with momentum buffers when `optim.momentum` is set.
///
/// | trainer        | model copies | trained copies | gradient sets per step |
/// |----------------|--------------|----------------|------------------------|
/// | smpl           | 1            | 1              | 2                      |
/// | supervised     | 1            | 1              | 1                      |
/// | pseudo_labels  | 2            | 1              | 1                      |
/// | mpl            | 2            | 2              | 2                      |
///
/// The single-model step replaces its parameters in place after each
/// update, so the intermediate parameters never coexist with a second copy
/// beyond the update itself.
pub fn memory_report_with(
    kind: TrainerKind,
    spec: &[LayerSpec],
    optim: &OptimConfig,
) -> MemoryReport {
    let p: usize = spec.iter().map(LayerSpec::param_count).sum();
    let (copies, trained, grad_sets) = match kind {
        TrainerKind::Smpl => (1, 1, 2),
        TrainerKind::Supervised => (1, 1, 1),
        TrainerKind::PseudoLabels => (2, 1, 1),
        TrainerKind::Mpl => (2, 2, 2),
    };
    let optimizer_state_count = if optim.momentum.is_some() {
        trained * p
    } else {
        0
    };
    MemoryReport {
        trainer: kind,
        param_count: p,
        peak_live_model_copies: copies,
        resident_param_count: copies * p,
        optimizer_state_count,
        transient_gradient_sets: grad_sets,
        transient_gradient_count: grad_sets * p,
    }
}
