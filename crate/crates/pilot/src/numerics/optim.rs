//! Adaptive-moment (Adam) optimizer over flat parameter slices.

use crate::error::{PilotError, Result};
use crate::numerics::mlp::{MlpGrads, MlpParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, param_count: usize) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Self {
            lr,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_mlp(lr: f64, params: &MlpParams) -> Self {
        Self::new(lr, params.param_count())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        assert!(lr > 0.0, "learning rate must be positive");
        self.lr = lr;
    }

    /// One bias-corrected update, minimizing along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(PilotError::Shape(format!(
                "adam state sized for {} parameters, got params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }

    /// Convenience wrapper: flatten an MLP, step, and load back.
    pub fn step_mlp(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        let mut flat = params.to_flat();
        let flat_grads = MlpParams::grads_to_flat(grads);
        self.step(&mut flat, &flat_grads)?;
        params.load_flat(&flat)
    }

    /// First-moment accumulator, exposed for tests.
    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}
