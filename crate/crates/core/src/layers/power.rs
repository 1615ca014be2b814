use num_complex::Complex64;

use crate::error::{shape_err, Result};

/// Elementwise squared magnitude `re^2 + im^2`.
pub fn power_op(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|v| v.norm_sqr()).collect()
}

/// Same as [`power_op`] on a real view of interleaved (re, im) pairs; the
/// output has half the input length.
pub fn power_op_pairs(x: &[f64]) -> Result<Vec<f64>> {
    if !x.len().is_multiple_of(2) {
        return shape_err(format!("paired view needs even length, got {}", x.len()));
    }
    Ok(x.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect())
}

/// `dL/dz = 2 g z`, returned as (dL/dre, dL/dim) pairs in complex form.
pub fn power_backward(z: &[Complex64], grad_out: &[f64]) -> Vec<Complex64> {
    z.iter().zip(grad_out).map(|(v, g)| 2.0 * g * v).collect()
}
