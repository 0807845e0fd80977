//! Goal-conditioned skill transfer on desk-scale tasks.
//!
//! The crate pre-trains a goal-conditioned *state planner* jointly with an
//! inverse-dynamics model (a decoupled policy), distills the planner into a
//! goal-space *landmark planner*, and then reuses the distilled planner three
//! ways: as a cosine-similarity reward bonus for new agents, as a frozen
//! planner inside a fresh decoupled policy for changed action spaces, and as
//! a zero-shot landmark guide for a pretrained controller.
//!
//! Modules:
//! - [`numerics`] — tensors, MLPs with manual backprop, Gaussian heads, Adam,
//!   and a finite-difference gradient oracle.
//! - [`envs`] — point-mass locomotion, a U-shaped maze, and action- and
//!   observation-lifting wrappers.
//! - [`replay`] — trajectory replay with hindsight goal relabeling.
//! - [`udpo`] — decoupled-policy pre-training and the hindsight-replay
//!   baseline it is compared against.
//! - [`transfer`] — goal-planner distillation, landmark bonus wrapper,
//!   planner transfer, zero-shot landmark following.
//! - [`harness`] — config parsing, experiment stages and recipes, CSV
//!   metrics, checkpoints, and the gradient-check suite.

pub mod envs;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod replay;
pub mod transfer;
pub mod udpo;

pub use error::{PilotError, Result};
