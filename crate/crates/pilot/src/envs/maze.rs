//! U-shaped 2-D maze.
//!
//! A single horizontal wall spans `[0,6] × [4.5,5.5]` inside the `[0,10]²`
//! box, leaving a passage on the right. Episodes start below the wall; the
//! canonical hard task crosses to the cell above the far end of the wall, so
//! straight-line goal chasing runs into the wall and stalls.

use rand::RngCore;

use crate::envs::geometry::{integrate_with_wall, EnvState, Rect};
use crate::envs::{check_action, point_io_norm, sparse_reward, Env, GoalSpaceSpec, IoNorm, ResetOut, StepResult};
use crate::error::Result;

pub const MAZE_EPISODE_LEN: usize = 50;
pub const MAZE_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MazeLayout {
    pub bounds: Rect,
    pub wall: Rect,
    /// Episodes begin here (below the wall).
    pub start_region: Rect,
    /// Canonical start/goal cells for the cross-wall task.
    pub canonical_start: [f64; 2],
    pub canonical_goal: [f64; 2],
}

impl Default for MazeLayout {
    fn default() -> Self {
        Self {
            bounds: Rect::new([0.0, 0.0], [10.0, 10.0]),
            wall: Rect::new([0.0, 4.5], [6.0, 5.5]),
            start_region: Rect::new([0.5, 0.5], [1.5, 1.5]),
            canonical_start: [1.0, 1.0],
            canonical_goal: [1.0, 9.0],
        }
    }
}

impl MazeLayout {
    /// Rejection-sample a point in free space (outside the closed wall).
    pub fn sample_free(&self, rng: &mut dyn RngCore) -> [f64; 2] {
        loop {
            let p = self.bounds.sample_uniform(rng);
            if !self.wall.contains_closed(p) {
                return p;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Maze2d {
    pub layout: MazeLayout,
    spec: GoalSpaceSpec,
    state: EnvState,
    goal: Vec<f64>,
}

impl Maze2d {
    pub fn new() -> Self {
        let layout = MazeLayout::default();
        Self {
            state: EnvState::at_rest(layout.canonical_start),
            goal: layout.canonical_goal.to_vec(),
            spec: GoalSpaceSpec::position(MAZE_THRESHOLD),
            layout,
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }
}

impl Default for Maze2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Maze2d {
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
        MAZE_EPISODE_LEN
    }

    fn io_norm(&self) -> IoNorm {
        point_io_norm()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut {
        let start = self.layout.start_region.sample_uniform(rng);
        let goal = self.layout.sample_free(rng).to_vec();
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
        let next = integrate_with_wall(
            &self.state,
            [action[0], action[1]],
            1.0,
            &self.layout.bounds,
            &self.layout.wall,
        );
        self.state = next;
        let obs = next.observation();
        let reward = sparse_reward(&obs, &self.goal, &self.spec);
        let success = reward == 1.0;
        let done = next.step_count as usize >= MAZE_EPISODE_LEN;
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
        self.layout.sample_free(rng).to_vec()
    }
}
