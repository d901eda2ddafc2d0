//! Exact and finite-difference Jacobians between network layers.

use super::{ActivationTrace, Mlp, NnError};
use crate::matrix::Matrix;

/// Jacobian of one computed layer `j` at the traced point: shape
/// `n_{j-1} x n_j`, entry `(a, b) = act'(z_j[b]) * W_j[b][a]`.
pub fn layer_jacobian(mlp: &Mlp, trace: &ActivationTrace, j: usize) -> Result<Matrix, NnError> {
    if j == 0 || j > mlp.depth() {
        return Err(NnError::LayerOutOfRange { layer: j, max: mlp.depth() });
    }
    let w = mlp.weight(j);
    let act = mlp.activation_of(j);
    let z = trace.pre_activation(j);
    let derivs: Vec<f64> = z.iter().map(|&v| act.derivative(v)).collect();
    Ok(Matrix::from_fn(w.cols(), w.rows(), |a, b| derivs[b] * w.get(b, a)))
}

/// Jacobian of the layer-`j` activation with respect to the layer-`i`
/// activation at input `x`, as the ordered product of per-layer Jacobians.
pub fn jacobian_between(mlp: &Mlp, x: &[f64], i: usize, j: usize) -> Result<Matrix, NnError> {
    check_pair(mlp, i, j)?;
    let trace = mlp.forward(x)?;
    let mut acc = layer_jacobian(mlp, &trace, i + 1)?;
    for l in (i + 2)..=j {
        acc = acc.matmul(&layer_jacobian(mlp, &trace, l)?)?;
    }
    Ok(acc)
}

/// Central finite difference of the layer-`i` -> layer-`j` map, perturbing
/// the layer-`i` activation one coordinate at a time. Same orientation as
/// [`jacobian_between`].
pub fn finite_diff_jacobian(
    mlp: &Mlp,
    x: &[f64],
    i: usize,
    j: usize,
    step: f64,
) -> Result<Matrix, NnError> {
    check_pair(mlp, i, j)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(NnError::BadStep { step });
    }
    let trace = mlp.forward(x)?;
    let base = trace.activation(i);
    let (n_src, n_tgt) = (mlp.layer_width(i), mlp.layer_width(j));
    let mut out = Matrix::zeros(n_src, n_tgt);
    let mut probe = base.to_vec();
    for a in 0..n_src {
        let saved = probe[a];
        probe[a] = saved + step;
        let plus = mlp.propagate(i, &probe, j);
        probe[a] = saved - step;
        let minus = mlp.propagate(i, &probe, j);
        probe[a] = saved;
        for b in 0..n_tgt {
            out.set(a, b, (plus[b] - minus[b]) / (2.0 * step));
        }
    }
    Ok(out)
}

fn check_pair(mlp: &Mlp, i: usize, j: usize) -> Result<(), NnError> {
    if j > mlp.depth() {
        return Err(NnError::LayerOutOfRange { layer: j, max: mlp.depth() });
    }
    if i >= j {
        return Err(NnError::BadLayerPair { i, j });
    }
    Ok(())
}
