//! Central finite-difference gradient oracle. Lives next to the tape so test
//! suites can check every recorded op against an independent reference; the
//! oracle never touches the reverse-mode path.

use super::tensor::Tensor;
use crate::error::CoreResult;

/// Central differences (L(x+e) - L(x-e)) / (2e) per coordinate of every
/// parameter tensor. `loss_fn` must be pure and deterministic (freeze any
/// noise by seed before calling).
pub fn finite_diff_grad(
    loss_fn: &mut dyn FnMut(&[Tensor]) -> CoreResult<f64>,
    params: &[Tensor],
    eps: f64,
) -> CoreResult<Vec<Tensor>> {
    let mut grads = Vec::with_capacity(params.len());
    let mut work: Vec<Tensor> = params.to_vec();
    for pi in 0..params.len() {
        let mut g = Tensor::zeros(params[pi].shape());
        for i in 0..params[pi].numel() {
            let orig = params[pi].data()[i];
            work[pi].data_mut()[i] = orig + eps;
            let plus = loss_fn(&work)?;
            work[pi].data_mut()[i] = orig - eps;
            let minus = loss_fn(&work)?;
            work[pi].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Worst-case relative disagreement between two gradient sets. Coordinates
/// are compared against max(|a|, |b|) with a floor tied to the gradient
/// infinity norm so that near-zero entries are judged at the scale of the
/// gradient vector rather than amplifying round-off.
pub fn max_rel_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let inf_norm = analytic
        .iter()
        .chain(numeric.iter())
        .flat_map(|t| t.data().iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let floor = (1e-3 * inf_norm).max(1e-12);
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&x, &y) in a.data().iter().zip(n.data()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
