//! Training loops: decoupled-policy pre-training and the hindsight-replay
//! baseline.
//!
//! One *optimization epoch* is one critic update plus one policy update;
//! every collected episode is followed by `updates_per_episode` epochs. The
//! inverse dynamics is retrained to convergence every `delta` epochs and the
//! planner update refuses to run against a model older than that.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::envs::Env;
use crate::error::{PilotError, Result};
use crate::numerics::{AdamState, Tensor};
use crate::replay::{RelabelSpec, ReplayBuffer, Transition};
use crate::udpo::critic::{Critic, QFunction};
use crate::udpo::grads::{dpg_actor_grad, inverse_nll_grad, planner_composite_grad};
use crate::udpo::policy::{atanh_clamped, BaselinePolicy, DecoupledPolicy, GoalPolicy};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Planner legality-term coefficient.
    pub lambda: f64,
    /// Inverse-dynamics retrain interval, in optimization epochs.
    pub delta: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub q_lr: f64,
    pub pi_lr: f64,
    pub i_lr: f64,
    pub total_env_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub updates_per_episode: usize,
    pub exploration_noise: f64,
    pub relabel: RelabelSpec,
    /// Inverse-dynamics retraining: fixed step budget with an early stop
    /// when the loss improves less than `inverse_plateau_tol` over
    /// `inverse_plateau_window` steps.
    pub inverse_budget: usize,
    pub inverse_plateau_window: usize,
    pub inverse_plateau_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 1e-2,
            delta: 1500,
            batch_size: 128,
            buffer_capacity: 100_000,
            q_lr: 3e-4,
            pi_lr: 3e-4,
            i_lr: 1e-4,
            total_env_steps: 200_000,
            eval_interval: 5_000,
            eval_episodes: 50,
            updates_per_episode: 10,
            exploration_noise: 0.2,
            relabel: RelabelSpec::default(),
            inverse_budget: 500,
            inverse_plateau_window: 50,
            inverse_plateau_tol: 1e-4,
        }
    }
}

/// One evaluation checkpoint of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub env_steps: usize,
    pub success_rate: f64,
    pub planner_mse: Option<f64>,
    pub inverse_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub bonus_mean: Option<f64>,
}

/// Roll one exploratory episode and package it for the replay buffer.
/// Returns the trajectory and the summed wrapper bonus.
pub fn collect_episode(
    policy: &dyn GoalPolicy,
    env: &mut dyn Env,
    sigma: f64,
    trajectory_id: u64,
    rng: &mut dyn RngCore,
) -> Result<(Vec<Transition>, f64)> {
    let reset = env.reset(rng);
    let mut obs = reset.obs;
    let goal = reset.desired_goal;
    let mut trajectory = Vec::with_capacity(env.episode_len());
    let mut bonus_sum = 0.0;
    let mut step_index = 0u32;
    loop {
        let action = policy.explore_action(&obs, &goal, sigma, rng)?;
        let r = env.step(&action)?;
        bonus_sum += r.bonus;
        trajectory.push(Transition {
            state: obs,
            action,
            next_state: r.next_obs.clone(),
            achieved_goal: r.achieved_goal,
            desired_goal: goal.clone(),
            reward: r.reward,
            done: r.done,
            trajectory_id,
            step_index,
        });
        obs = r.next_obs;
        step_index += 1;
        if r.done {
            return Ok((trajectory, bonus_sum));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOutcome {
    pub success_rate: f64,
    /// Mean squared one-step planner prediction error, when a planner with
    /// matching state dimension is supplied.
    pub planner_mse: Option<f64>,
}

/// Deterministic evaluation: an episode succeeds if the goal indicator fires
/// at any step. Wrapper bonuses are ignored by construction (`success` is
/// computed from the sparse component).
pub fn evaluate(
    policy: &dyn GoalPolicy,
    env: &mut dyn Env,
    episodes: usize,
    planner: Option<&DecoupledPolicy>,
    rng: &mut dyn RngCore,
) -> Result<EvalOutcome> {
    let mut successes = 0usize;
    let mut mse_sum = 0.0;
    let mut mse_count = 0usize;
    let track_planner = planner.is_some_and(|p| p.state_dim == env.obs_dim());
    for _ in 0..episodes {
        let reset = env.reset(rng);
        let mut obs = reset.obs;
        let goal = reset.desired_goal;
        let mut hit = false;
        loop {
            let action = policy.det_action(&obs, &goal)?;
            let planned = if track_planner {
                let p = planner.expect("checked above");
                Some(
                    p.plan_states(
                        &Tensor::from_rows(&[obs.as_slice()])?,
                        &Tensor::from_rows(&[goal.as_slice()])?,
                    )?
                    .into_vec(),
                )
            } else {
                None
            };
            let r = env.step(&action)?;
            if let Some(pl) = planned {
                let err: f64 = pl
                    .iter()
                    .zip(&r.next_obs)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                mse_sum += err / pl.len() as f64;
                mse_count += 1;
            }
            hit |= r.success;
            obs = r.next_obs;
            if r.done {
                break;
            }
        }
        successes += hit as usize;
    }
    Ok(EvalOutcome {
        success_rate: successes as f64 / episodes as f64,
        planner_mse: (mse_count > 0).then(|| mse_sum / mse_count as f64),
    })
}

fn batch_columns(
    batch: &[Transition],
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let actions: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let next_states: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
    let goals: Vec<&[f64]> = batch.iter().map(|t| t.desired_goal.as_slice()).collect();
    Ok((
        Tensor::from_rows(&states)?,
        Tensor::from_rows(&actions)?,
        Tensor::from_rows(&next_states)?,
        Tensor::from_rows(&goals)?,
    ))
}

/// Maximum-likelihood fit of the inverse dynamics to buffer actions (in
/// pre-squash space). Runs exactly `steps` optimizer iterations and returns
/// the per-step loss trace; zero steps leave the parameters untouched.
pub fn train_inverse_dynamics(
    policy: &mut DecoupledPolicy,
    buffer: &ReplayBuffer,
    steps: usize,
    batch_size: usize,
    opt: &mut AdamState,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if buffer.is_empty() {
        return Err(PilotError::State(
            "inverse-dynamics training on an empty buffer".into(),
        ));
    }
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = buffer.sample_batch(batch_size, &RelabelSpec::none(), rng)?;
        let (states, actions, next_states, _) = batch_columns(&batch)?;
        let targets = actions.map(atanh_clamped);
        let (nll, grads) = inverse_nll_grad(&policy.inverse, &states, &next_states, &targets)?;
        opt.step_mlp(&mut policy.inverse, &grads)?;
        trace.push(nll);
    }
    Ok(trace)
}

/// Interval retraining: fixed budget with a loss-plateau early stop.
/// Returns the final loss.
pub fn train_inverse_to_convergence(
    policy: &mut DecoupledPolicy,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    opt: &mut AdamState,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(PilotError::State(
            "inverse-dynamics training on an empty buffer".into(),
        ));
    }
    let mut losses: Vec<f64> = Vec::with_capacity(cfg.inverse_budget);
    for step in 0..cfg.inverse_budget {
        let trace = train_inverse_dynamics(policy, buffer, 1, cfg.batch_size, opt, rng)?;
        losses.push(trace[0]);
        let w = cfg.inverse_plateau_window;
        if step >= w && losses[step - w] - losses[step] < cfg.inverse_plateau_tol {
            break;
        }
    }
    Ok(*losses.last().expect("at least one step"))
}

/// One TD(0) step on both critics against clipped double-Q targets, then a
/// soft target update. Returns the mean TD loss.
pub fn critic_update(
    critic: &mut Critic,
    policy: &dyn GoalPolicy,
    buffer: &ReplayBuffer,
    relabel: &RelabelSpec,
    gamma: f64,
    batch_size: usize,
    opt1: &mut AdamState,
    opt2: &mut AdamState,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let batch = buffer.sample_batch(batch_size, relabel, rng)?;
    let targets = critic.td_targets(policy, &batch, gamma)?;
    let (loss, g1, g2) = critic.td_loss_and_grads(&batch, &targets)?;
    opt1.step_mlp(&mut critic.q1, &g1)?;
    opt2.step_mlp(&mut critic.q2, &g2)?;
    critic.soft_update();
    Ok(loss)
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerUpdateStats {
    pub objective: f64,
    pub mean_q: f64,
    pub legality_log_lik: f64,
    pub grad_norm: f64,
}

/// One ascent step on the planner parameters under the composite objective,
/// holding the inverse dynamics static. Errors if the inverse dynamics has
/// not been trained within the last `delta` epochs.
#[allow(clippy::too_many_arguments)]
pub fn planner_update(
    policy: &mut DecoupledPolicy,
    critic: &dyn QFunction,
    buffer: &ReplayBuffer,
    relabel: &RelabelSpec,
    lambda: f64,
    batch_size: usize,
    epoch: u64,
    delta: u64,
    opt: &mut AdamState,
    rng: &mut dyn RngCore,
) -> Result<PlannerUpdateStats> {
    match policy.inverse_trained_at {
        Some(at) if epoch.saturating_sub(at) <= delta => {}
        Some(at) => {
            return Err(PilotError::Contract(format!(
                "inverse dynamics stale: trained at epoch {at}, now {epoch}, interval {delta}"
            )))
        }
        None => {
            return Err(PilotError::Contract(
                "planner update before any inverse-dynamics training".into(),
            ))
        }
    }
    let batch = buffer.sample_batch(batch_size, relabel, rng)?;
    let (states, _, next_states, goals) = batch_columns(&batch)?;
    let noise = Tensor::matrix(
        batch.len(),
        policy.state_dim,
        crate::numerics::gaussian::normal_vec(rng, batch.len() * policy.state_dim),
    )?;
    let (objective, grads, parts) = planner_composite_grad(
        &policy.planner,
        &policy.inverse,
        critic,
        &states,
        &goals,
        &next_states,
        &noise,
        lambda,
    )?;
    let grad_norm = grads.sq_norm().sqrt();
    // Ascent on J: feed the optimizer the gradient of -J.
    let mut descent = crate::numerics::MlpGrads::zeros_like(&policy.planner);
    descent.accumulate(&grads, -1.0);
    opt.step_mlp(&mut policy.planner, &descent)?;
    Ok(PlannerUpdateStats {
        objective,
        mean_q: parts.mean_q,
        legality_log_lik: parts.legality_log_lik,
        grad_norm,
    })
}

/// One ascent step on the monolithic actor through the critic. Returns the
/// mean Q value of the batch.
pub fn actor_update(
    policy: &mut BaselinePolicy,
    critic: &dyn QFunction,
    buffer: &ReplayBuffer,
    relabel: &RelabelSpec,
    batch_size: usize,
    opt: &mut AdamState,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let batch = buffer.sample_batch(batch_size, relabel, rng)?;
    let (states, _, _, goals) = batch_columns(&batch)?;
    let (mean_q, grads) = dpg_actor_grad(&policy.actor, critic, &states, &goals)?;
    let mut descent = crate::numerics::MlpGrads::zeros_like(&policy.actor);
    descent.accumulate(&grads, -1.0);
    opt.step_mlp(&mut policy.actor, &descent)?;
    Ok(mean_q)
}

pub struct UdpoOutcome {
    pub policy: DecoupledPolicy,
    pub critic: Critic,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<EvalPoint>,
}

/// Bookkeeping shared by the training loops.
struct LoopClock {
    env_steps: usize,
    next_eval: usize,
    eval_rng: ChaCha12Rng,
    critic_loss_sum: f64,
    critic_loss_count: usize,
    bonus_sum: f64,
    bonus_steps: usize,
}

impl LoopClock {
    fn new(seed: u64, eval_interval: usize) -> Self {
        Self {
            env_steps: 0,
            next_eval: eval_interval,
            eval_rng: ChaCha12Rng::seed_from_u64(seed ^ 0x5EED_0EA1u64),
            critic_loss_sum: 0.0,
            critic_loss_count: 0,
            bonus_sum: 0.0,
            bonus_steps: 0,
        }
    }

    fn record_critic(&mut self, loss: f64) {
        self.critic_loss_sum += loss;
        self.critic_loss_count += 1;
    }

    fn drain_critic(&mut self) -> Option<f64> {
        let out = (self.critic_loss_count > 0)
            .then(|| self.critic_loss_sum / self.critic_loss_count as f64);
        self.critic_loss_sum = 0.0;
        self.critic_loss_count = 0;
        out
    }

    fn drain_bonus(&mut self) -> Option<f64> {
        let out = (self.bonus_steps > 0).then(|| self.bonus_sum / self.bonus_steps as f64);
        self.bonus_sum = 0.0;
        self.bonus_steps = 0;
        out
    }
}

/// Pre-training: jointly learn the goal-conditioned state planner, inverse
/// dynamics, and critic with hindsight relabeling. `on_eval` fires at every
/// evaluation checkpoint so metrics can stream to disk as the run goes.
pub fn udpo_train(
    env: &mut dyn Env,
    cfg: &TrainConfig,
    seed: u64,
    on_eval: &mut dyn FnMut(&EvalPoint) -> Result<()>,
) -> Result<UdpoOutcome> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (sd, ad, gd) = (env.obs_dim(), env.action_dim(), env.goal_spec().goal_dim);
    let norm = env.io_norm();
    let mut policy = DecoupledPolicy::new(sd, ad, gd, &norm, &mut rng);
    let mut critic = Critic::new(sd, ad, gd, &norm, &mut rng);
    let mut opt_planner = AdamState::for_mlp(cfg.pi_lr, &policy.planner);
    let mut opt_inverse = AdamState::for_mlp(cfg.i_lr, &policy.inverse);
    let mut opt_q1 = AdamState::for_mlp(cfg.q_lr, &critic.q1);
    let mut opt_q2 = AdamState::for_mlp(cfg.q_lr, &critic.q2);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env.goal_spec().clone());

    let mut clock = LoopClock::new(seed, cfg.eval_interval);
    let mut metrics = Vec::new();
    let mut epoch: u64 = 0;
    let mut trajectory_id: u64 = 0;
    let mut last_inverse_loss: Option<f64> = None;

    while clock.env_steps < cfg.total_env_steps {
        let (traj, bonus) =
            collect_episode(&policy, env, cfg.exploration_noise, trajectory_id, &mut rng)?;
        trajectory_id += 1;
        clock.env_steps += traj.len();
        clock.bonus_sum += bonus;
        clock.bonus_steps += traj.len();
        buffer.push(traj)?;

        for _ in 0..cfg.updates_per_episode {
            if epoch % cfg.delta == 0 {
                let loss =
                    train_inverse_to_convergence(&mut policy, &buffer, cfg, &mut opt_inverse, &mut rng)?;
                policy.inverse_trained_at = Some(epoch);
                last_inverse_loss = Some(loss);
            }
            let closs = critic_update(
                &mut critic,
                &policy,
                &buffer,
                &cfg.relabel,
                cfg.gamma,
                cfg.batch_size,
                &mut opt_q1,
                &mut opt_q2,
                &mut rng,
            )?;
            clock.record_critic(closs);
            planner_update(
                &mut policy,
                &critic,
                &buffer,
                &cfg.relabel,
                cfg.lambda,
                cfg.batch_size,
                epoch,
                cfg.delta,
                &mut opt_planner,
                &mut rng,
            )?;
            epoch += 1;
        }

        if clock.env_steps >= clock.next_eval || clock.env_steps >= cfg.total_env_steps {
            let mut eval_rng = clock.eval_rng.clone();
            let out = evaluate(
                &policy,
                env,
                cfg.eval_episodes,
                Some(&policy),
                &mut eval_rng,
            )?;
            clock.eval_rng = eval_rng;
            let point = EvalPoint {
                env_steps: clock.env_steps,
                success_rate: out.success_rate,
                planner_mse: out.planner_mse,
                inverse_loss: last_inverse_loss,
                critic_loss: clock.drain_critic(),
                bonus_mean: clock.drain_bonus(),
            };
            on_eval(&point)?;
            metrics.push(point);
            while clock.next_eval <= clock.env_steps {
                clock.next_eval += cfg.eval_interval;
            }
        }
    }

    Ok(UdpoOutcome {
        policy,
        critic,
        buffer,
        metrics,
    })
}

pub struct HerOutcome {
    pub policy: BaselinePolicy,
    pub critic: Critic,
    pub buffer: ReplayBuffer,
    pub metrics: Vec<EvalPoint>,
}

/// Baseline: monolithic goal-conditioned actor trained with hindsight
/// relabeling and deterministic policy gradients through the critic. Also
/// the trainer for the free-space controller reused by zero-shot transfer.
pub fn her_train(
    env: &mut dyn Env,
    cfg: &TrainConfig,
    seed: u64,
    on_eval: &mut dyn FnMut(&EvalPoint) -> Result<()>,
) -> Result<HerOutcome> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (sd, ad, gd) = (env.obs_dim(), env.action_dim(), env.goal_spec().goal_dim);
    let norm = env.io_norm();
    let mut policy = BaselinePolicy::new(sd, ad, gd, &norm, &mut rng);
    let mut critic = Critic::new(sd, ad, gd, &norm, &mut rng);
    let mut opt_actor = AdamState::for_mlp(cfg.pi_lr, &policy.actor);
    let mut opt_q1 = AdamState::for_mlp(cfg.q_lr, &critic.q1);
    let mut opt_q2 = AdamState::for_mlp(cfg.q_lr, &critic.q2);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env.goal_spec().clone());

    let mut clock = LoopClock::new(seed, cfg.eval_interval);
    let mut metrics = Vec::new();
    let mut trajectory_id: u64 = 0;

    while clock.env_steps < cfg.total_env_steps {
        let (traj, bonus) =
            collect_episode(&policy, env, cfg.exploration_noise, trajectory_id, &mut rng)?;
        trajectory_id += 1;
        clock.env_steps += traj.len();
        clock.bonus_sum += bonus;
        clock.bonus_steps += traj.len();
        buffer.push(traj)?;

        for _ in 0..cfg.updates_per_episode {
            let closs = critic_update(
                &mut critic,
                &policy,
                &buffer,
                &cfg.relabel,
                cfg.gamma,
                cfg.batch_size,
                &mut opt_q1,
                &mut opt_q2,
                &mut rng,
            )?;
            clock.record_critic(closs);
            actor_update(
                &mut policy,
                &critic,
                &buffer,
                &cfg.relabel,
                cfg.batch_size,
                &mut opt_actor,
                &mut rng,
            )?;
        }

        if clock.env_steps >= clock.next_eval || clock.env_steps >= cfg.total_env_steps {
            let mut eval_rng = clock.eval_rng.clone();
            let out = evaluate(&policy, env, cfg.eval_episodes, None, &mut eval_rng)?;
            clock.eval_rng = eval_rng;
            let point = EvalPoint {
                env_steps: clock.env_steps,
                success_rate: out.success_rate,
                planner_mse: None,
                inverse_loss: None,
                critic_loss: clock.drain_critic(),
                bonus_mean: clock.drain_bonus(),
            };
            on_eval(&point)?;
            metrics.push(point);
            while clock.next_eval <= clock.env_steps {
                clock.next_eval += cfg.eval_interval;
            }
        }
    }

    Ok(HerOutcome {
        policy,
        critic,
        buffer,
        metrics,
    })
}
