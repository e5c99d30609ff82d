//! Adam optimizer with L2 weight decay folded into the gradient.

use super::TrainingError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// First- and second-moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Zero-initialized state for tensors of the given flattened lengths.
    pub fn new(lengths: &[usize]) -> Self {
        Self {
            m: lengths.iter().map(|&l| vec![0.0; l]).collect(),
            v: lengths.iter().map(|&l| vec![0.0; l]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One optimizer step over all tensors.
    ///
    /// Weight decay is an L2 term added to the gradient before the moment
    /// updates, per-tensor so that hop weights can be exempted.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        learning_rate: f64,
        weight_decay: &[f64],
    ) -> Result<(), TrainingError> {
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || weight_decay.len() != self.m.len()
        {
            return Err(TrainingError::OptimizerShapeMismatch {
                expected: self.m.len(),
                found: params.len().max(grads.len()),
            });
        }
        for i in 0..params.len() {
            if params[i].len() != self.m[i].len() || grads[i].len() != self.m[i].len() {
                return Err(TrainingError::OptimizerShapeMismatch {
                    expected: self.m[i].len(),
                    found: params[i].len().max(grads[i].len()),
                });
            }
        }
        self.t += 1;
        let bias1 = 1.0 - BETA1.powi(self.t as i32);
        let bias2 = 1.0 - BETA2.powi(self.t as i32);
        for ((param, grad), (m, (v, &wd))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut().zip(weight_decay)))
        {
            for k in 0..param.len() {
                let g = grad[k] + wd * param[k];
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                param[k] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_bitwise_equal() {
        let mut state = AdamState::new(&[3]);
        let mut p = vec![1.5, -2.25, 0.0];
        let before = p.clone();
        let grads = vec![0.0; 3];
        state
            .step(&mut [&mut p], &[&grads], 0.01, &[0.0])
            .unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // With g = 1 the bias-corrected moments are exactly 1, so the first
        // update is lr * 1 / (1 + eps).
        let mut state = AdamState::new(&[1]);
        let mut p = vec![0.0];
        state.step(&mut [&mut p], &[&[1.0]], 0.001, &[0.0]).unwrap();
        let expected = -0.001 / (1.0 + EPSILON);
        assert!((p[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn descends_a_scalar_quadratic() {
        // f(x) = x^2, gradient 2x; |x| should shrink every step from 1.
        let mut state = AdamState::new(&[1]);
        let mut p = vec![1.0];
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let g = [2.0 * p[0]];
            state.step(&mut [&mut p], &[&g], 0.05, &[0.0]).unwrap();
            assert!(p[0].abs() < prev.abs());
            prev = p[0];
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::new(&[2]);
        let mut p = vec![0.0; 3];
        let err = state.step(&mut [&mut p], &[&[0.0; 3]], 0.01, &[0.0]);
        assert!(matches!(err, Err(TrainingError::OptimizerShapeMismatch { .. })));
    }
}
