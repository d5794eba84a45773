//! Central finite differences over every parameter; a test oracle for `backward`.

use super::{GradientSet, ModelParams};

/// `(L(theta + h e_i) - L(theta - h e_i)) / 2h` for each coordinate `i`.
pub fn finite_diff_grad<F>(loss_fn: F, params: &ModelParams, h: f64) -> GradientSet
where
    F: Fn(&ModelParams) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let spec = params.spec();
    let mut flat = params.to_flat();
    let eval = |flat: &[f64]| {
        let probe = ModelParams::from_flat(spec, flat).expect("same length as params");
        loss_fn(&probe)
    };
    let mut grads = params.zero_grads();
    for (i, g) in grads.iter_values_mut().enumerate() {
        let orig = flat[i];
        flat[i] = orig + h;
        let up = eval(&flat);
        flat[i] = orig - h;
        let down = eval(&flat);
        flat[i] = orig;
        *g = (up - down) / (2.0 * h);
    }
    grads
}

/// Largest `|a - b| / max(|a|, |b|, floor)` across matching entries.
pub fn max_relative_error(a: &GradientSet, b: &GradientSet, floor: f64) -> f64 {
    a.iter_values()
        .zip(b.iter_values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
