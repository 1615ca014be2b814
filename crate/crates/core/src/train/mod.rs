//! Differentiable pipeline, optimiser and stage-wise training.

mod adam;
mod classifier;
mod gradcheck;
mod pipeline;
mod stagewise;
mod tiny;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use classifier::{cross_entropy, log_softmax, softmax, ClassifierCache, ToyClassifier, DEFAULT_HIDDEN};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, TensorCheck, DEFAULT_STEP};
pub use pipeline::{BatchCache, Example, ExampleCache, Group, ModelConfig, Pipeline, Route, Trainable, GRAD_CHUNK};
pub use stagewise::{
    evaluate, finish_variant, pretrain_shared, train_stage, train_stagewise, EvalResult, MetricLog, MetricRow, Stage,
    TrainOptions, Utterance,
};
pub use tiny::{tiny_batch, tiny_config, tiny_pipeline};

use crate::error::{Error, Result};
use crate::layers::Parameterized;

/// Owned copy of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParameterSet {
    pub fn from_model<P: Parameterized>(model: &P) -> Self {
        Self {
            tensors: model
                .tensors()
                .into_iter()
                .map(|t| NamedTensor {
                    name: t.name,
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Copies every tensor into `model`, which must have identical names and
    /// shapes in the same order.
    pub fn load_into<P: Parameterized>(&self, model: &mut P) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} tensors, parameter set has {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name} {shape:?} does not match {} {:?}",
                    t.name, t.shape
                )));
            }
        }
        for (dst, t) in model.tensors_mut().into_iter().zip(&self.tensors) {
            dst.copy_from_slice(&t.data);
        }
        Ok(())
    }
}
