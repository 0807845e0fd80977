//! Policy structures: the decoupled (planner + inverse dynamics) policy and
//! the monolithic baseline actor.
//!
//! The decoupled policy factors the goal-conditioned policy into a state
//! planner `(state ‖ goal) -> next-state distribution` composed with an
//! inverse-dynamics model `(state ‖ planned next state) -> action
//! distribution`. Actions are tanh-squashed into `[-1, 1]`; the distribution
//! parameters live in pre-squash space, so likelihood fitting works on
//! `atanh` of executed actions.

use rand::RngCore;

use crate::envs::{Affine, IoNorm};
use crate::error::{PilotError, Result};
use crate::numerics::gaussian::normal_vec;
use crate::numerics::{Activation, HeadBatch, MlpParams, Tensor};

/// Hidden widths shared by every function approximator in the crate.
pub const HIDDEN: [usize; 2] = [128, 128];

/// `atanh` with the argument pulled strictly inside (-1, 1) so squashed
/// actions that round to ±1 stay finite.
pub fn atanh_clamped(a: f64) -> f64 {
    let c = a.clamp(-1.0 + 1e-9, 1.0 - 1e-9);
    0.5 * ((1.0 + c) / (1.0 - c)).ln()
}

/// Anything that maps (state, goal) to a bounded action.
pub trait GoalPolicy {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn goal_dim(&self) -> usize;

    /// Deterministic actions for a batch of rows.
    fn det_actions(&self, states: &Tensor, goals: &Tensor) -> Result<Tensor>;

    /// Exploration action: Gaussian noise of scale `sigma` injected at the
    /// distribution heads before the tanh squash.
    fn explore_action(
        &self,
        state: &[f64],
        goal: &[f64],
        sigma: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>>;

    fn det_action(&self, state: &[f64], goal: &[f64]) -> Result<Vec<f64>> {
        let s = Tensor::from_rows(&[state])?;
        let g = Tensor::from_rows(&[goal])?;
        Ok(self.det_actions(&s, &g)?.into_vec())
    }
}

#[derive(Debug, Clone)]
pub struct DecoupledPolicy {
    /// State planner: `(state ‖ goal) -> [next-state mean | log std]`.
    pub planner: MlpParams,
    /// Inverse dynamics: `(state ‖ next state) -> [action mean | log std]`.
    pub inverse: MlpParams,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    /// Optimization epoch at which the inverse dynamics was last retrained;
    /// planner updates refuse to run against a stale model.
    pub inverse_trained_at: Option<u64>,
}

impl DecoupledPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        goal_dim: usize,
        norm: &IoNorm,
        rng: &mut dyn RngCore,
    ) -> Self {
        let planner_dims = [
            &[state_dim + goal_dim][..],
            &HIDDEN,
            &[2 * state_dim],
        ]
        .concat();
        let mut planner = MlpParams::new(&planner_dims, Activation::Tanh, rng);
        let planner_in = Affine::concat(&[&norm.obs, &norm.goal]);
        planner.fold_input_affine(&planner_in.offset, &planner_in.scale);
        // The mean head predicts raw next observations: start it centered on
        // the observation range.
        planner.fold_output_affine(0, &norm.obs.offset, &norm.obs.scale);
        let inverse = Self::fresh_inverse(state_dim, action_dim, norm, rng);
        Self {
            planner,
            inverse,
            state_dim,
            action_dim,
            goal_dim,
            inverse_trained_at: None,
        }
    }

    fn fresh_inverse(
        state_dim: usize,
        action_dim: usize,
        norm: &IoNorm,
        rng: &mut dyn RngCore,
    ) -> MlpParams {
        let dims = [&[2 * state_dim][..], &HIDDEN, &[2 * action_dim]].concat();
        let mut inverse = MlpParams::new(&dims, Activation::Tanh, rng);
        let input = Affine::concat(&[&norm.obs, &norm.obs]);
        inverse.fold_input_affine(&input.offset, &input.scale);
        inverse
    }

    /// Replace the inverse dynamics with a freshly initialized network for a
    /// new action dimension, keeping the planner as-is.
    pub fn with_fresh_inverse(
        &self,
        action_dim: usize,
        norm: &IoNorm,
        rng: &mut dyn RngCore,
    ) -> Self {
        Self {
            planner: self.planner.clone(),
            inverse: Self::fresh_inverse(self.state_dim, action_dim, norm, rng),
            state_dim: self.state_dim,
            action_dim,
            goal_dim: self.goal_dim,
            inverse_trained_at: None,
        }
    }

    fn check_dims(&self, state: &[f64], goal: &[f64]) -> Result<()> {
        if state.len() != self.state_dim || goal.len() != self.goal_dim {
            return Err(PilotError::Shape(format!(
                "state/goal dims ({}, {}) vs policy ({}, {})",
                state.len(),
                goal.len(),
                self.state_dim,
                self.goal_dim
            )));
        }
        Ok(())
    }

    /// Planner head for a batch of `(state ‖ goal)` rows.
    pub fn planner_heads(&self, states: &Tensor, goals: &Tensor) -> Result<HeadBatch> {
        let x = Tensor::concat_cols(&[states, goals])?;
        HeadBatch::split(&self.planner.forward(&x)?)
    }

    /// Inverse-dynamics head for a batch of `(state ‖ next state)` rows.
    pub fn inverse_heads(&self, states: &Tensor, next_states: &Tensor) -> Result<HeadBatch> {
        let x = Tensor::concat_cols(&[states, next_states])?;
        HeadBatch::split(&self.inverse.forward(&x)?)
    }

    /// Planner mean predictions (deterministic planned next states).
    pub fn plan_states(&self, states: &Tensor, goals: &Tensor) -> Result<Tensor> {
        Ok(self.planner_heads(states, goals)?.mean)
    }

    /// The reparameterized composite: sample a planned next state from the
    /// planner head with `noise_planner`, then an action from the
    /// inverse-dynamics head with `noise_action`, tanh-squashed. Zero noise
    /// gives the deterministic composite of the two means.
    pub fn policy_action(
        &self,
        state: &[f64],
        goal: &[f64],
        noise_planner: &[f64],
        noise_action: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(state, goal)?;
        let s = Tensor::from_rows(&[state])?;
        let g = Tensor::from_rows(&[goal])?;
        let head_h = self.planner_heads(&s, &g)?;
        if noise_planner.len() != self.state_dim {
            return Err(PilotError::Shape(format!(
                "planner noise length {} vs state dim {}",
                noise_planner.len(),
                self.state_dim
            )));
        }
        let planned = head_h.sample(&Tensor::from_rows(&[noise_planner])?)?;
        let head_i = self.inverse_heads(&s, &planned)?;
        if noise_action.len() != self.action_dim {
            return Err(PilotError::Shape(format!(
                "action noise length {} vs action dim {}",
                noise_action.len(),
                self.action_dim
            )));
        }
        let pre = head_i.sample(&Tensor::from_rows(&[noise_action])?)?;
        let action: Vec<f64> = pre.data().iter().map(|z| z.tanh()).collect();
        Ok((action, planned.into_vec()))
    }
}

impl GoalPolicy for DecoupledPolicy {
    fn obs_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    fn det_actions(&self, states: &Tensor, goals: &Tensor) -> Result<Tensor> {
        let planned = self.plan_states(states, goals)?;
        let head_i = self.inverse_heads(states, &planned)?;
        Ok(head_i.mean.map(f64::tanh))
    }

    fn explore_action(
        &self,
        state: &[f64],
        goal: &[f64],
        sigma: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        self.check_dims(state, goal)?;
        let s = Tensor::from_rows(&[state])?;
        let g = Tensor::from_rows(&[goal])?;
        let head_h = self.planner_heads(&s, &g)?;
        let mut planned = head_h.mean.clone();
        for (p, n) in planned
            .data_mut()
            .iter_mut()
            .zip(normal_vec(rng, self.state_dim))
        {
            *p += sigma * n;
        }
        let head_i = self.inverse_heads(&s, &planned)?;
        Ok(head_i
            .mean
            .data()
            .iter()
            .zip(normal_vec(rng, self.action_dim))
            .map(|(m, n)| (m + sigma * n).tanh())
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    /// Actor: `(state ‖ goal) -> [action mean | log std]`, tanh-squashed.
    pub actor: MlpParams,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
}

impl BaselinePolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        goal_dim: usize,
        norm: &IoNorm,
        rng: &mut dyn RngCore,
    ) -> Self {
        let dims = [&[state_dim + goal_dim][..], &HIDDEN, &[2 * action_dim]].concat();
        let mut actor = MlpParams::new(&dims, Activation::Tanh, rng);
        let input = Affine::concat(&[&norm.obs, &norm.goal]);
        actor.fold_input_affine(&input.offset, &input.scale);
        Self {
            actor,
            state_dim,
            action_dim,
            goal_dim,
        }
    }

    pub fn actor_heads(&self, states: &Tensor, goals: &Tensor) -> Result<HeadBatch> {
        let x = Tensor::concat_cols(&[states, goals])?;
        HeadBatch::split(&self.actor.forward(&x)?)
    }
}

impl GoalPolicy for BaselinePolicy {
    fn obs_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn goal_dim(&self) -> usize {
        self.goal_dim
    }

    fn det_actions(&self, states: &Tensor, goals: &Tensor) -> Result<Tensor> {
        Ok(self.actor_heads(states, goals)?.mean.map(f64::tanh))
    }

    fn explore_action(
        &self,
        state: &[f64],
        goal: &[f64],
        sigma: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        let s = Tensor::from_rows(&[state])?;
        let g = Tensor::from_rows(&[goal])?;
        let head = self.actor_heads(&s, &g)?;
        Ok(head
            .mean
            .data()
            .iter()
            .zip(normal_vec(rng, self.action_dim))
            .map(|(m, n)| (m + sigma * n).tanh())
            .collect())
    }
}
