use super::pipeline::{Example, Pipeline, Route, Trainable};
use crate::error::Result;
use crate::layers::Parameterized;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Worst disagreement found in one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub max_abs_analytic: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_relative_error).fold(0.0, f64::max)
    }

    /// Tensors whose analytic gradient is identically zero.
    pub fn vacuous(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|t| t.max_abs_analytic == 0.0)
            .map(|t| t.name.as_str())
            .collect()
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central-difference check of every parameter of the pipeline.
pub fn gradient_check(
    pipeline: &Pipeline,
    batch: &[Example<'_>],
    route: Route,
    step: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let cache = pipeline.forward_loss(batch, route)?;
    let grads = pipeline.backward(&cache, Trainable::ALL);
    let mut probe = pipeline.clone();
    let views: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|t| (t.name, t.data.to_vec())).collect();
    let mut out = Vec::new();
    for (i, (name, analytic)) in views.into_iter().enumerate() {
        let mut check = TensorCheck {
            name,
            entries: analytic.len(),
            max_relative_error: 0.0,
            worst_index: 0,
            max_abs_analytic: analytic.iter().fold(0.0, |m, v| v.abs().max(m)),
            analytic: 0.0,
            numeric: 0.0,
        };
        for (j, &a) in analytic.iter().enumerate() {
            let orig = probe.tensors_mut()[i][j];
            probe.tensors_mut()[i][j] = orig + step;
            let up = probe.forward_loss(batch, route)?.loss;
            probe.tensors_mut()[i][j] = orig - step;
            let down = probe.forward_loss(batch, route)?.loss;
            probe.tensors_mut()[i][j] = orig;
            let n = (up - down) / (2.0 * step);
            let e = relative_error(a, n, floor);
            if e > check.max_relative_error || j == 0 {
                check.max_relative_error = check.max_relative_error.max(e);
                check.worst_index = j;
                check.analytic = a;
                check.numeric = n;
            }
        }
        out.push(check);
    }
    Ok(GradCheckReport { tensors: out })
}
