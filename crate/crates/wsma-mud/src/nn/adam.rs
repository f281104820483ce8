//! Adaptive-moment optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, NetworkParameters};

/// Per-parameter first/second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Decay rates 0.9 / 0.999 and epsilon 1e-8.
    pub fn new(params: &NetworkParameters, learning_rate: f64) -> Self {
        let shapes: Vec<Vec<f64>> = params
            .trainable_tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: shapes.clone(),
            second_moment: shapes,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` with
    /// bias-corrected moments.
    pub fn step(&mut self, params: &mut NetworkParameters, grads: &Gradients) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let tensors = params.trainable_tensors_mut();
        let gtensors = grads.trainable_tensors();
        debug_assert_eq!(tensors.len(), gtensors.len());
        for ((tensor, grad), (m, v)) in tensors
            .into_iter()
            .zip(gtensors)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            for i in 0..tensor.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                tensor[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
