//! Goal-reaching environments.
//!
//! Two native tasks share the same double-integrator point agent: free-space
//! locomotion over a `[0,10]²` box and a U-shaped maze. Two wrappers change
//! the interface without changing the underlying goal transitions: an
//! action-lifting wrapper that doubles the action dimension behind a
//! nonlinear mix at reduced gravity, and an observation-lifting wrapper that
//! replaces the 4-d state with a fixed 64-d nonlinear random projection.
//!
//! Environments are value-semantic state machines: distinct instances are
//! independent, a single instance is single-threaded.

pub mod geometry;
pub mod lift;
pub mod maze;
pub mod pointmass;

pub use geometry::{EnvState, Rect, ACCEL_GAIN, MAX_SPEED};
pub use lift::{lift_action, lift_observation, ActionLiftSpec, ActionLifted, ObsLifted, OBS_LIFT_DIM};
pub use maze::{Maze2d, MazeLayout};
pub use pointmass::PointMass;

use rand::RngCore;

use crate::error::{PilotError, Result};

/// Goal space description: dimension, success radius, and the state-to-goal
/// mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpaceSpec {
    pub goal_dim: usize,
    /// Success threshold (Euclidean distance).
    pub threshold: f64,
    pub phi: PhiKind,
}

/// Named deterministic state-to-goal mappings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiKind {
    /// Project out the leading position coordinates.
    Position,
}

impl GoalSpaceSpec {
    pub fn position(threshold: f64) -> Self {
        assert!(threshold > 0.0, "success threshold must be positive");
        Self {
            goal_dim: 2,
            threshold,
            phi: PhiKind::Position,
        }
    }

    /// Map a state vector to its achieved goal.
    pub fn phi(&self, state: &[f64]) -> Vec<f64> {
        match self.phi {
            PhiKind::Position => state[..self.goal_dim].to_vec(),
        }
    }

    pub fn goal_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        crate::numerics::euclidean(a, b)
    }
}

/// Affine input description `(x - offset) / scale`, folded into network
/// layers so function approximators see roughly unit-scale inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn concat(parts: &[&Affine]) -> Self {
        let mut offset = Vec::new();
        let mut scale = Vec::new();
        for p in parts {
            offset.extend_from_slice(&p.offset);
            scale.extend_from_slice(&p.scale);
        }
        Self { offset, scale }
    }
}

/// Normalization ranges an environment advertises for its observations and
/// goals.
#[derive(Debug, Clone, PartialEq)]
pub struct IoNorm {
    pub obs: Affine,
    pub goal: Affine,
}

impl IoNorm {
    pub fn identity(obs_dim: usize, goal_dim: usize) -> Self {
        Self {
            obs: Affine::identity(obs_dim),
            goal: Affine::identity(goal_dim),
        }
    }
}

/// Ranges of the native point tasks: positions in `[0,10]`, velocities in
/// `[-0.5, 0.5]`, goals in position space.
pub(crate) fn point_io_norm() -> IoNorm {
    IoNorm {
        obs: Affine {
            offset: vec![5.0, 5.0, 0.0, 0.0],
            scale: vec![5.0, 5.0, 0.5, 0.5],
        },
        goal: Affine {
            offset: vec![5.0, 5.0],
            scale: vec![5.0, 5.0],
        },
    }
}

/// Binary goal-reaching reward: 1 iff the achieved goal of `next_state` lies
/// within the success threshold of `desired_goal`.
pub fn sparse_reward(next_state: &[f64], desired_goal: &[f64], spec: &GoalSpaceSpec) -> f64 {
    let achieved = spec.phi(next_state);
    if spec.goal_distance(&achieved, desired_goal) <= spec.threshold {
        1.0
    } else {
        0.0
    }
}

/// Everything an environment returns from one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    /// Reward as stored for training (sparse plus any wrapper bonus).
    pub reward: f64,
    /// The unaugmented goal-reaching indicator; evaluation only ever looks
    /// at this component.
    pub sparse_reward: f64,
    /// Wrapper bonus included in `reward` (0 for unwrapped environments).
    pub bonus: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetOut {
    pub obs: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

pub trait Env {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn goal_spec(&self) -> &GoalSpaceSpec;
    fn episode_len(&self) -> usize;

    /// Observation/goal ranges for input normalization; identity unless the
    /// environment overrides it.
    fn io_norm(&self) -> IoNorm {
        IoNorm::identity(self.obs_dim(), self.goal_spec().goal_dim)
    }

    /// Draw a start state and a desired goal.
    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut;

    /// Like [`Env::reset`] but with a caller-chosen desired goal.
    fn reset_with_goal(&mut self, rng: &mut dyn RngCore, goal: &[f64]) -> ResetOut;

    /// Advance one step. Out-of-range action components are clamped;
    /// non-finite ones are an input error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Sample from the environment's desired-goal distribution without
    /// touching episode state.
    fn sample_goal(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(PilotError::Shape(format!(
            "action length {} vs action dim {}",
            action.len(),
            dim
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(PilotError::Input("non-finite action component".into()));
    }
    Ok(())
}

/// Environment selector used by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Maze2d,
    PointMass,
    PointMassLiftedAction,
    PointMassLiftedObs,
    Maze2dLiftedObs,
}

impl EnvKind {
    pub const ALL: [EnvKind; 5] = [
        EnvKind::Maze2d,
        EnvKind::PointMass,
        EnvKind::PointMassLiftedAction,
        EnvKind::PointMassLiftedObs,
        EnvKind::Maze2dLiftedObs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::Maze2d => "maze2d",
            EnvKind::PointMass => "pointmass",
            EnvKind::PointMassLiftedAction => "pointmass_lifted_action",
            EnvKind::PointMassLiftedObs => "pointmass_lifted_obs",
            EnvKind::Maze2dLiftedObs => "maze2d_lifted_obs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                PilotError::Config(format!(
                    "unknown env '{s}', expected one of: {}",
                    names.join(", ")
                ))
            })
    }

    pub fn build(&self) -> Box<dyn Env> {
        match self {
            EnvKind::Maze2d => Box::new(Maze2d::new()),
            EnvKind::PointMass => Box::new(PointMass::new()),
            EnvKind::PointMassLiftedAction => {
                Box::new(ActionLifted::new(ActionLiftSpec::default()))
            }
            EnvKind::PointMassLiftedObs => Box::new(ObsLifted::new(Box::new(PointMass::new()))),
            EnvKind::Maze2dLiftedObs => Box::new(ObsLifted::new(Box::new(Maze2d::new()))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
