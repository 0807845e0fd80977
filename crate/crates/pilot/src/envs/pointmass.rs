//! Free-space point-mass locomotion over a `[0,10]²` box.

use rand::RngCore;

use crate::envs::geometry::{integrate, EnvState, Rect};
use crate::envs::{check_action, point_io_norm, sparse_reward, Env, GoalSpaceSpec, IoNorm, ResetOut, StepResult};
use crate::error::Result;

pub const POINTMASS_EPISODE_LEN: usize = 100;
pub const POINTMASS_THRESHOLD: f64 = 0.1;
pub const POINTMASS_BOUNDS: Rect = Rect::new([0.0, 0.0], [10.0, 10.0]);

#[derive(Debug, Clone)]
pub struct PointMass {
    pub gravity_scale: f64,
    spec: GoalSpaceSpec,
    state: EnvState,
    goal: Vec<f64>,
}

impl PointMass {
    pub fn new() -> Self {
        Self::with_gravity(1.0)
    }

    pub fn with_gravity(gravity_scale: f64) -> Self {
        Self {
            gravity_scale,
            spec: GoalSpaceSpec::position(POINTMASS_THRESHOLD),
            state: EnvState::at_rest([5.0, 5.0]),
            goal: vec![5.0, 5.0],
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointMass {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn goal_spec(&self) -> &GoalSpaceSpec {
        &self.spec
    }

    fn episode_len(&self) -> usize {
        POINTMASS_EPISODE_LEN
    }

    fn io_norm(&self) -> IoNorm {
        point_io_norm()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut {
        let start = POINTMASS_BOUNDS.sample_uniform(rng);
        let goal = POINTMASS_BOUNDS.sample_uniform(rng).to_vec();
        self.state = EnvState::at_rest(start);
        self.goal = goal;
        ResetOut {
            obs: self.state.observation(),
            achieved_goal: self.spec.phi(&self.state.observation()),
            desired_goal: self.goal.clone(),
        }
    }

    fn reset_with_goal(&mut self, rng: &mut dyn RngCore, goal: &[f64]) -> ResetOut {
        let mut out = self.reset(rng);
        self.goal = goal.to_vec();
        out.desired_goal = self.goal.clone();
        out
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, 2)?;
        let next = integrate(
            &self.state,
            [action[0], action[1]],
            self.gravity_scale,
            &POINTMASS_BOUNDS,
        );
        self.state = next;
        let obs = next.observation();
        let reward = sparse_reward(&obs, &self.goal, &self.spec);
        let success = reward == 1.0;
        let done = next.step_count as usize >= POINTMASS_EPISODE_LEN;
        Ok(StepResult {
            achieved_goal: self.spec.phi(&obs),
            next_obs: obs,
            reward,
            sparse_reward: reward,
            bonus: 0.0,
            done,
            success,
        })
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        POINTMASS_BOUNDS.sample_uniform(rng).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn reset_starts_at_rest_with_in_bounds_goal() {
        let mut env = PointMass::new();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let out = env.reset(&mut rng);
            assert_eq!(&out.obs[2..], &[0.0, 0.0]);
            assert!(out.desired_goal.iter().all(|&g| (0.0..=10.0).contains(&g)));
        }
    }

    #[test]
    fn same_seed_same_reset() {
        let mut env_a = PointMass::new();
        let mut env_b = PointMass::new();
        let a = env_a.reset(&mut ChaCha12Rng::seed_from_u64(11));
        let b = env_b.reset(&mut ChaCha12Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn step_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut env_a = PointMass::new();
        env_a.reset(&mut rng.clone());
        let mut env_b = PointMass::new();
        env_b.reset(&mut rng);
        let ra = env_a.step(&[0.3, -0.8]).unwrap();
        let rb = env_b.step(&[0.3, -0.8]).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn nan_action_is_an_input_error() {
        let mut env = PointMass::new();
        env.reset(&mut ChaCha12Rng::seed_from_u64(0));
        assert!(env.step(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn episode_ends_at_horizon_not_success() {
        let mut env = PointMass::new();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let out = env.reset(&mut rng);
        // Park the goal on the agent: success every step, done only at 100.
        env.goal = out.achieved_goal.clone();
        for t in 1..=POINTMASS_EPISODE_LEN {
            let r = env.step(&[0.0, 0.0]).unwrap();
            assert!(r.success);
            assert_eq!(r.done, t == POINTMASS_EPISODE_LEN);
        }
    }
}
