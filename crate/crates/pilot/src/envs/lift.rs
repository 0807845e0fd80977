//! Interface-lifting wrappers.
//!
//! [`ActionLifted`] doubles the action dimension behind a nonlinear
//! exponential mix and runs the base dynamics at reduced gravity, so the
//! same state transitions need a different controller. [`ObsLifted`]
//! replaces the 4-d observation with a fixed 64-d sine-of-random-projection
//! embedding, so the same task arrives through a different state space. Both
//! leave the goal space untouched.

use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::envs::pointmass::PointMass;
use crate::envs::{Affine, Env, GoalSpaceSpec, IoNorm, ResetOut, StepResult};
use crate::error::{PilotError, Result};

/// Action-lift parameters: base dimension `m`, lifted dimension `n = 2m`,
/// and the gravity rescale applied underneath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionLiftSpec {
    pub base_dim: usize,
    pub lifted_dim: usize,
    pub gravity_scale: f64,
}

impl Default for ActionLiftSpec {
    fn default() -> Self {
        Self {
            base_dim: 2,
            lifted_dim: 4,
            gravity_scale: 0.8,
        }
    }
}

impl ActionLiftSpec {
    pub fn new(base_dim: usize, gravity_scale: f64) -> Self {
        Self {
            base_dim,
            lifted_dim: 2 * base_dim,
            gravity_scale,
        }
    }
}

/// Fold a lifted action of length `2m` down to `m` base components:
/// `h_i = (-exp(a_i + 1) + exp(a_{m+i})) / 1.5`.
///
/// The two halves pair up as `(a[i], a[m+i])` for `i in 0..m` — the second
/// half runs through the final element inclusive, otherwise the fold would
/// be one element short. The result is fed to the base dynamics, which
/// clamps components to `[-1, 1]`.
pub fn lift_action(action: &[f64], spec: &ActionLiftSpec) -> Result<Vec<f64>> {
    let m = spec.base_dim;
    if action.len() != 2 * m {
        return Err(PilotError::Shape(format!(
            "lifted action length {} vs expected {}",
            action.len(),
            2 * m
        )));
    }
    Ok((0..m)
        .map(|i| (-(action[i] + 1.0).exp() + action[m + i].exp()) / 1.5)
        .collect())
}

#[derive(Debug, Clone)]
pub struct ActionLifted {
    pub spec: ActionLiftSpec,
    inner: PointMass,
}

impl ActionLifted {
    pub fn new(spec: ActionLiftSpec) -> Self {
        assert_eq!(spec.base_dim, 2, "point-mass base action is 2-d");
        assert_eq!(spec.lifted_dim, 2 * spec.base_dim);
        Self {
            inner: PointMass::with_gravity(spec.gravity_scale),
            spec,
        }
    }
}

impl Env for ActionLifted {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.spec.lifted_dim
    }

    fn goal_spec(&self) -> &GoalSpaceSpec {
        self.inner.goal_spec()
    }

    fn episode_len(&self) -> usize {
        self.inner.episode_len()
    }

    fn io_norm(&self) -> IoNorm {
        self.inner.io_norm()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut {
        self.inner.reset(rng)
    }

    fn reset_with_goal(&mut self, rng: &mut dyn RngCore, goal: &[f64]) -> ResetOut {
        self.inner.reset_with_goal(rng, goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        super::check_action(action, self.spec.lifted_dim)?;
        let base = lift_action(action, &self.spec)?;
        self.inner.step(&base)
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.sample_goal(rng)
    }
}

/// Width of the lifted observation.
pub const OBS_LIFT_DIM: usize = 64;
/// Seed of the fixed projection; changing it changes every lifted task.
pub const OBS_LIFT_SEED: u64 = 1729;

fn projection() -> &'static Vec<f64> {
    static PROJ: OnceLock<Vec<f64>> = OnceLock::new();
    PROJ.get_or_init(|| {
        let mut rng = ChaCha12Rng::seed_from_u64(OBS_LIFT_SEED);
        (0..OBS_LIFT_DIM * 4)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect()
    })
}

/// Deterministic 4-d -> 64-d embedding: a fixed random projection followed
/// by an elementwise sine.
pub fn lift_observation(state: &[f64]) -> Vec<f64> {
    assert_eq!(state.len(), 4, "observation lift expects a 4-d state");
    let proj = projection();
    (0..OBS_LIFT_DIM)
        .map(|row| {
            let w = &proj[row * 4..(row + 1) * 4];
            (w[0] * state[0] + w[1] * state[1] + w[2] * state[2] + w[3] * state[3]).sin()
        })
        .collect()
}

pub struct ObsLifted {
    inner: Box<dyn Env>,
}

impl ObsLifted {
    pub fn new(inner: Box<dyn Env>) -> Self {
        assert_eq!(inner.obs_dim(), 4, "observation lift wraps 4-d tasks");
        Self { inner }
    }
}

impl Env for ObsLifted {
    fn obs_dim(&self) -> usize {
        OBS_LIFT_DIM
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn goal_spec(&self) -> &GoalSpaceSpec {
        self.inner.goal_spec()
    }

    fn episode_len(&self) -> usize {
        self.inner.episode_len()
    }

    fn io_norm(&self) -> IoNorm {
        // The sine embedding is already unit scale.
        IoNorm {
            obs: Affine::identity(OBS_LIFT_DIM),
            goal: self.inner.io_norm().goal,
        }
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut {
        let mut out = self.inner.reset(rng);
        out.obs = lift_observation(&out.obs);
        out
    }

    fn reset_with_goal(&mut self, rng: &mut dyn RngCore, goal: &[f64]) -> ResetOut {
        let mut out = self.inner.reset_with_goal(rng, goal);
        out.obs = lift_observation(&out.obs);
        out
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        r.next_obs = lift_observation(&r.next_obs);
        Ok(r)
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.sample_goal(rng)
    }
}
