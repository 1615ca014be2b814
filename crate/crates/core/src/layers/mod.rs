//! Trainable multi-channel layers and the six multi-channel module variants.
//!
//! Every layer owns its parameters as flat `f64` buffers. Complex parameters
//! are stored as interleaved (re, im) pairs, so they count as two trainable
//! scalars and receive gradients with respect to each part independently.
//! Gradients are accumulated into a zeroed clone of the layer itself.

mod affine;
mod bat;
mod fan;
mod power;
mod variant;

pub use affine::Affine;
pub use bat::{BatLayer, BatOutput};
pub use fan::{FanCache, FanLayer, LookDirectionPowerMap, PooledSpectrumFeature, Pooling};
pub use power::{power_backward, power_op, power_op_pairs};
pub use variant::{
    assemble_variant, parameter_count, LayerCount, McCache, McConfig, McVariant, ParameterCount, VariantTag,
};

use rand::Rng;

/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub trait Parameterized {
    /// All parameter tensors in declaration order.
    fn tensors(&self) -> Vec<TensorView<'_>>;

    /// Mutable buffers, in the same order as [`Parameterized::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn zero_parameters(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.zero_parameters();
        z
    }

    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(s.data) {
                *a += b;
            }
        }
    }

    fn scale_parameters(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, views: Vec<TensorView<'a>>) -> Vec<TensorView<'a>> {
    views
        .into_iter()
        .map(|mut v| {
            v.name = format!("{prefix}.{}", v.name);
            v
        })
        .collect()
}

/// Uniform in `[-a, a]` with `a = sqrt(1 / fan_in)`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let a = (1.0 / fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-a..=a)).collect()
}
