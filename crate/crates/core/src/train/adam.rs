use crate::layers::Parameterized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moments and step counts per tensor. A tensor skipped while frozen keeps
/// its own bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new<P: Parameterized>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            steps: vec![0; shapes.len()],
        }
    }
}

/// One Adam update of every tensor `i` with `active[i]`.
pub fn adam_step<P: Parameterized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    cfg: &AdamConfig,
    active: &[bool],
) {
    let g = grads.tensors();
    for (i, p) in params.tensors_mut().into_iter().enumerate() {
        if !active.get(i).copied().unwrap_or(true) {
            continue;
        }
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, x) in p.iter_mut().enumerate() {
            let gj = g[i].data[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            *x -= cfg.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Affine;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_parameters() {
        let mut p = Affine::identity(3);
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default(), &[true, true]);
        assert_eq!(p, before);
        assert_eq!(s.steps, vec![1, 1]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = Affine::identity(2);
        let mut g = p.zeros_like();
        g.weights[0] = 0.5;
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &cfg, &[true, true]);
        let (m0, v0) = (s.m[0][0], s.v[0][0]);
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut s, &cfg, &[true, true]);
        assert!((s.m[0][0] - 0.9 * m0).abs() < 1e-15);
        assert!((s.v[0][0] - 0.999 * v0).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Affine::identity(2);
        let mut g = p.zeros_like();
        g.weights = vec![3.0, -0.01, 0.0, 100.0];
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default(), &[true, true]);
        let d: Vec<f64> = p
            .weights
            .iter()
            .zip(&Affine::identity(2).weights)
            .map(|(a, b)| a - b)
            .collect();
        for (di, gi) in d.iter().zip(&g.weights) {
            if *gi != 0.0 {
                assert!((di + 1e-3 * gi.signum()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn frozen_tensors_are_untouched() {
        let mut p = Affine::identity(2);
        let mut g = p.zeros_like();
        g.weights.fill(1.0);
        g.biases.fill(1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default(), &[false, true]);
        assert_eq!(p.weights, Affine::identity(2).weights);
        assert!(p.biases.iter().all(|&b| b < 0.0));
        assert_eq!(s.steps, vec![0, 1]);
    }
}
