//! Decoupled policy optimization and the hindsight-replay baseline.
//!
//! Pre-training jointly learns a goal-conditioned state planner and an
//! inverse-dynamics model as a factored policy, alongside twin critics. The
//! planner ascends a composite objective: critic value of the replanned
//! action plus a legality term keeping predictions on transitions the agent
//! actually realizes. The inverse dynamics is refit to the buffer at a fixed
//! epoch interval and held static in between.

pub mod critic;
pub mod grads;
pub mod policy;
pub mod train;

pub use critic::{Critic, QFunction, TAU};
pub use grads::{dpg_actor_grad, inverse_nll_grad, planner_composite_grad, CompositeParts};
pub use policy::{atanh_clamped, BaselinePolicy, DecoupledPolicy, GoalPolicy, HIDDEN};
pub use train::{
    actor_update, collect_episode, critic_update, evaluate, her_train, planner_update,
    train_inverse_dynamics, train_inverse_to_convergence, udpo_train, EvalOutcome, EvalPoint,
    HerOutcome, PlannerUpdateStats, TrainConfig, UdpoOutcome,
};
