//! Knowledge transfer built on the distilled goal planner.
//!
//! The trained state planner is distilled into a goal-space planner
//! `(current goal ‖ target goal) -> next goal`, which then serves three
//! transfer routes: a cosine landmark-similarity reward bonus for training
//! new agents, direct reuse of the frozen state planner with a freshly
//! trained inverse dynamics for changed action spaces, and zero-shot
//! landmark following with a pretrained controller.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::envs::{Affine, Env, GoalSpaceSpec, IoNorm, ResetOut, StepResult};
use crate::error::{PilotError, Result};
use crate::numerics::gaussian::join_head_grads;
use crate::numerics::{Activation, AdamState, HeadBatch, MlpParams, Tensor};
use crate::replay::{RelabelSpec, ReplayBuffer};
use crate::udpo::policy::HIDDEN;
use crate::udpo::{
    collect_episode, evaluate, train_inverse_to_convergence, DecoupledPolicy, EvalPoint,
    GoalPolicy, TrainConfig,
};

/// Distilled goal-space landmark planner.
#[derive(Debug, Clone)]
pub struct GoalPlanner {
    /// `(goal ‖ target goal) -> [next-goal mean | log std]`.
    pub net: MlpParams,
    pub goal_dim: usize,
}

impl GoalPlanner {
    pub fn new(goal_dim: usize, goal_norm: &Affine, rng: &mut dyn RngCore) -> Self {
        let dims = [&[2 * goal_dim][..], &HIDDEN, &[2 * goal_dim]].concat();
        let mut net = MlpParams::new(&dims, Activation::Tanh, rng);
        let input = Affine::concat(&[goal_norm, goal_norm]);
        net.fold_input_affine(&input.offset, &input.scale);
        net.fold_output_affine(0, &goal_norm.offset, &goal_norm.scale);
        Self { net, goal_dim }
    }

    fn heads(&self, goals: &Tensor, targets: &Tensor) -> Result<HeadBatch> {
        let x = Tensor::concat_cols(&[goals, targets])?;
        HeadBatch::split(&self.net.forward(&x)?)
    }

    /// Deterministic landmark: the mean of the next-goal distribution given
    /// the current goal and the episode target.
    pub fn plan_landmark(&self, goal: &[f64], target_goal: &[f64]) -> Result<Vec<f64>> {
        if goal.len() != self.goal_dim || target_goal.len() != self.goal_dim {
            return Err(PilotError::Shape(format!(
                "goal dims ({}, {}) vs planner goal dim {}",
                goal.len(),
                target_goal.len(),
                self.goal_dim
            )));
        }
        let g = Tensor::from_rows(&[goal])?;
        let t = Tensor::from_rows(&[target_goal])?;
        Ok(self.heads(&g, &t)?.mean.into_vec())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistillReport {
    /// Negative log likelihood of held-out teacher targets after training.
    pub heldout_nll: f64,
    /// Mean distance between student landmarks and teacher next goals on
    /// the held-out set.
    pub heldout_mean_err: f64,
}

/// Distill the state planner into a goal planner by maximum likelihood:
/// states are drawn from the buffer, target goals from `goal_sampler`, and
/// the student fits the goal image of the teacher's planned next state.
/// Zero steps leave the student at its random initialization.
#[allow(clippy::too_many_arguments)]
pub fn distill_goal_planner(
    state_planner: &DecoupledPolicy,
    buffer: &ReplayBuffer,
    goal_spec: &GoalSpaceSpec,
    goal_norm: &Affine,
    goal_sampler: &mut dyn FnMut(&mut dyn RngCore) -> Vec<f64>,
    steps: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<(GoalPlanner, DistillReport)> {
    if buffer.is_empty() {
        return Err(PilotError::State("distillation from an empty buffer".into()));
    }
    let probe = buffer.iter().next().expect("non-empty");
    if probe.state.len() != state_planner.state_dim
        || goal_spec.goal_dim != state_planner.goal_dim
    {
        return Err(PilotError::Contract(format!(
            "teacher expects state dim {} / goal dim {}, buffer has {} / {}",
            state_planner.state_dim,
            state_planner.goal_dim,
            probe.state.len(),
            goal_spec.goal_dim
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xD15711);
    let mut student = GoalPlanner::new(goal_spec.goal_dim, goal_norm, &mut rng);
    let mut opt = AdamState::for_mlp(lr, &student.net);

    // Teacher inputs -> (student input goals, student targets) for one draw.
    let mut draw = |rng: &mut ChaCha12Rng,
                    n: usize|
     -> Result<(Tensor, Tensor, Tensor)> {
        let batch = buffer.sample_batch(n, &RelabelSpec::none(), rng)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let states = Tensor::from_rows(&states)?;
        let target_rows: Vec<Vec<f64>> = (0..n).map(|_| goal_sampler(rng)).collect();
        let target_refs: Vec<&[f64]> = target_rows.iter().map(Vec::as_slice).collect();
        let targets = Tensor::from_rows(&target_refs)?;
        let planned = state_planner.plan_states(&states, &targets)?;
        let goal_rows: Vec<Vec<f64>> = (0..n).map(|r| goal_spec.phi(states.row(r))).collect();
        let goal_refs: Vec<&[f64]> = goal_rows.iter().map(Vec::as_slice).collect();
        let goals = Tensor::from_rows(&goal_refs)?;
        let teacher_rows: Vec<Vec<f64>> = (0..n).map(|r| goal_spec.phi(planned.row(r))).collect();
        let teacher_refs: Vec<&[f64]> = teacher_rows.iter().map(Vec::as_slice).collect();
        let teacher_goals = Tensor::from_rows(&teacher_refs)?;
        Ok((goals, targets, teacher_goals))
    };

    // Fixed held-out set drawn before training.
    let heldout_n = 500.min(buffer.len());
    let (ho_goals, ho_targets, ho_teacher) = draw(&mut rng, heldout_n)?;

    for step in 0..steps {
        // Linear decay to a tenth of the base rate tightens the late fit.
        opt.set_learning_rate(lr * (1.0 - 0.9 * step as f64 / steps as f64));
        let (goals, targets, teacher_goals) = draw(&mut rng, batch_size)?;
        let x = Tensor::concat_cols(&[&goals, &targets])?;
        let (out, cache) = student.net.forward_cached(&x)?;
        let head = HeadBatch::split(&out)?;
        let (_, d_mean, d_ls) = head.nll_and_grads(&teacher_goals)?;
        let d_out = join_head_grads(&d_mean, &d_ls)?;
        let (grads, _) = student.net.backward_cached(&cache, &d_out)?;
        opt.step_mlp(&mut student.net, &grads)?;
    }

    let head = student.heads(&ho_goals, &ho_targets)?;
    let (heldout_nll, _, _) = head.nll_and_grads(&ho_teacher)?;
    let mut err = 0.0;
    for r in 0..heldout_n {
        err += crate::numerics::euclidean(head.mean.row(r), ho_teacher.row(r));
    }
    Ok((
        student,
        DistillReport {
            heldout_nll,
            heldout_mean_err: err / heldout_n as f64,
        },
    ))
}

/// Cosine similarity of two goal vectors; 0 for degenerate (near-zero)
/// inputs, which are logged rather than treated as errors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        log::debug!("degenerate goal in cosine bonus: |a|={na:.3e} |b|={nb:.3e}");
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Landmark-similarity reward: cosine of the achieved goal of `next_state`
/// and the planned landmark.
pub fn bonus_reward(next_state: &[f64], planned_goal: &[f64], spec: &GoalSpaceSpec) -> f64 {
    cosine_similarity(&spec.phi(next_state), planned_goal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusConfig {
    /// Bonus weight added on top of the sparse reward.
    pub beta: f64,
}

impl Default for BonusConfig {
    fn default() -> Self {
        Self { beta: 1.0 }
    }
}

/// Environment wrapper that augments stored rewards with the landmark
/// bonus: `r = r_sparse + beta * cos(phi(s'), landmark)`. The sparse
/// component stays available separately and success is unaffected.
pub struct BonusWrapped {
    inner: Box<dyn Env>,
    planner: GoalPlanner,
    beta: f64,
    current_achieved: Vec<f64>,
    desired_goal: Vec<f64>,
    degenerate_events: u64,
}

/// Wrap an environment with the landmark bonus. The planner must share the
/// environment's goal space.
pub fn wrap_env_with_bonus(
    env: Box<dyn Env>,
    planner: GoalPlanner,
    bonus: BonusConfig,
) -> Result<BonusWrapped> {
    if bonus.beta < 0.0 {
        return Err(PilotError::Config(format!(
            "bonus rate must be non-negative, got {}",
            bonus.beta
        )));
    }
    if planner.goal_dim != env.goal_spec().goal_dim {
        return Err(PilotError::Contract(format!(
            "goal planner dim {} vs env goal dim {}",
            planner.goal_dim,
            env.goal_spec().goal_dim
        )));
    }
    Ok(BonusWrapped {
        current_achieved: vec![0.0; planner.goal_dim],
        desired_goal: vec![0.0; planner.goal_dim],
        inner: env,
        planner,
        beta: bonus.beta,
        degenerate_events: 0,
    })
}

impl BonusWrapped {
    pub fn degenerate_events(&self) -> u64 {
        self.degenerate_events
    }
}

impl Env for BonusWrapped {
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
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
        self.inner.io_norm()
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> ResetOut {
        let out = self.inner.reset(rng);
        self.current_achieved = out.achieved_goal.clone();
        self.desired_goal = out.desired_goal.clone();
        out
    }

    fn reset_with_goal(&mut self, rng: &mut dyn RngCore, goal: &[f64]) -> ResetOut {
        let out = self.inner.reset_with_goal(rng, goal);
        self.current_achieved = out.achieved_goal.clone();
        self.desired_goal = out.desired_goal.clone();
        out
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let landmark = self
            .planner
            .plan_landmark(&self.current_achieved, &self.desired_goal)?;
        let mut r = self.inner.step(action)?;
        let cos = cosine_similarity(&r.achieved_goal, &landmark);
        if cos == 0.0 {
            let na = r.achieved_goal.iter().map(|x| x * x).sum::<f64>();
            let nb = landmark.iter().map(|x| x * x).sum::<f64>();
            if na < 1e-24 || nb < 1e-24 {
                self.degenerate_events += 1;
            }
        }
        r.bonus = self.beta * cos;
        r.reward = r.sparse_reward + r.bonus;
        self.current_achieved = r.achieved_goal.clone();
        Ok(r)
    }

    fn sample_goal(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.sample_goal(rng)
    }
}

pub struct TransferOutcome {
    pub policy: DecoupledPolicy,
    pub metrics: Vec<EvalPoint>,
}

/// Reuse a trained state planner on a task with the same state space but a
/// different action interface: the planner is copied and frozen, and only a
/// fresh inverse dynamics is fit (by interval MLE) inside the collection
/// loop. No planner or critic gradients run.
pub fn transfer_state_planner(
    source: &DecoupledPolicy,
    env: &mut dyn Env,
    cfg: &TrainConfig,
    seed: u64,
    on_eval: &mut dyn FnMut(&EvalPoint) -> Result<()>,
) -> Result<TransferOutcome> {
    if source.state_dim != env.obs_dim() {
        return Err(PilotError::Contract(format!(
            "source planner state dim {} vs target env obs dim {}",
            source.state_dim,
            env.obs_dim()
        )));
    }
    if source.goal_dim != env.goal_spec().goal_dim {
        return Err(PilotError::Contract(format!(
            "source planner goal dim {} vs target env goal dim {}",
            source.goal_dim,
            env.goal_spec().goal_dim
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut policy = source.with_fresh_inverse(env.action_dim(), &env.io_norm(), &mut rng);
    let frozen_planner = policy.planner.to_flat();
    let mut opt_inverse = AdamState::for_mlp(cfg.i_lr, &policy.inverse);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, env.goal_spec().clone());
    let mut eval_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5EED_0EA1u64);

    let mut metrics = Vec::new();
    let mut env_steps = 0usize;
    let mut next_eval = cfg.eval_interval;
    let mut epoch: u64 = 0;
    let mut trajectory_id: u64 = 0;
    let mut last_loss = None;

    while env_steps < cfg.total_env_steps {
        let (traj, _) =
            collect_episode(&policy, env, cfg.exploration_noise, trajectory_id, &mut rng)?;
        trajectory_id += 1;
        env_steps += traj.len();
        buffer.push(traj)?;

        for _ in 0..cfg.updates_per_episode {
            if epoch % cfg.delta == 0 {
                let loss = train_inverse_to_convergence(
                    &mut policy,
                    &buffer,
                    cfg,
                    &mut opt_inverse,
                    &mut rng,
                )?;
                policy.inverse_trained_at = Some(epoch);
                last_loss = Some(loss);
            }
            epoch += 1;
        }

        if env_steps >= next_eval || env_steps >= cfg.total_env_steps {
            let mut er = eval_rng.clone();
            let out = evaluate(&policy, env, cfg.eval_episodes, Some(&policy), &mut er)?;
            eval_rng = er;
            let point = EvalPoint {
                env_steps,
                success_rate: out.success_rate,
                planner_mse: out.planner_mse,
                inverse_loss: last_loss,
                critic_loss: None,
                bonus_mean: None,
            };
            on_eval(&point)?;
            metrics.push(point);
            while next_eval <= env_steps {
                next_eval += cfg.eval_interval;
            }
        }
    }

    debug_assert_eq!(policy.planner.to_flat(), frozen_planner);
    Ok(TransferOutcome { policy, metrics })
}

/// Landmark-following executor: a distilled goal planner paired with a
/// pretrained controller, queried with fresh landmarks every
/// `replan_every` steps.
pub struct LandmarkExecutor<'a> {
    pub goal_planner: &'a GoalPlanner,
    pub controller: &'a dyn GoalPolicy,
    pub replan_every: usize,
}

impl<'a> LandmarkExecutor<'a> {
    pub fn new(goal_planner: &'a GoalPlanner, controller: &'a dyn GoalPolicy) -> Self {
        Self {
            goal_planner,
            controller,
            replan_every: 1,
        }
    }
}

/// One zero-shot episode: the environment is reset (with `goal` as the
/// desired goal), and at every replanning point the controller is handed the
/// planner's landmark for the current achieved goal. No parameters are
/// written anywhere. Returns the visited positions (achieved goals) and
/// whether the sparse goal indicator fired.
pub fn zero_shot_rollout(
    exec: &LandmarkExecutor,
    env: &mut dyn Env,
    rng: &mut dyn RngCore,
    goal: &[f64],
) -> Result<(Vec<Vec<f64>>, bool)> {
    if exec.replan_every == 0 {
        return Err(PilotError::Config("replan_every must be at least 1".into()));
    }
    if exec.goal_planner.goal_dim != env.goal_spec().goal_dim {
        return Err(PilotError::Contract(format!(
            "goal planner dim {} vs env goal dim {}",
            exec.goal_planner.goal_dim,
            env.goal_spec().goal_dim
        )));
    }
    let reset = env.reset_with_goal(rng, goal);
    let mut obs = reset.obs;
    let mut achieved = reset.achieved_goal;
    let target = reset.desired_goal;
    let mut trajectory = vec![achieved.clone()];
    let mut landmark = exec.goal_planner.plan_landmark(&achieved, &target)?;
    let mut success = false;
    for t in 0.. {
        if t % exec.replan_every == 0 {
            landmark = exec.goal_planner.plan_landmark(&achieved, &target)?;
        }
        let action = exec.controller.det_action(&obs, &landmark)?;
        let r = env.step(&action)?;
        success |= r.success;
        obs = r.next_obs;
        achieved = r.achieved_goal;
        trajectory.push(achieved.clone());
        if r.done {
            break;
        }
    }
    Ok((trajectory, success))
}

/// Ablation arm: the controller chases the raw episode goal directly.
pub fn raw_goal_rollout(
    controller: &dyn GoalPolicy,
    env: &mut dyn Env,
    rng: &mut dyn RngCore,
    goal: &[f64],
) -> Result<(Vec<Vec<f64>>, bool)> {
    let reset = env.reset_with_goal(rng, goal);
    let mut obs = reset.obs;
    let target = reset.desired_goal;
    let mut trajectory = vec![reset.achieved_goal];
    let mut success = false;
    loop {
        let action = controller.det_action(&obs, &target)?;
        let r = env.step(&action)?;
        success |= r.success;
        obs = r.next_obs;
        trajectory.push(r.achieved_goal);
        if r.done {
            break;
        }
    }
    Ok((trajectory, success))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, PointMass};
    use crate::replay::Transition;
    use rand::Rng;

    #[test]
    fn cosine_bonus_hand_cases() {
        let spec = GoalSpaceSpec::position(1.0);
        // Identical directions.
        let same = bonus_reward(&[2.0, 3.0, 0.1, 0.0], &[2.0, 3.0], &spec);
        assert!((same - 1.0).abs() < 1e-12);
        // Orthogonal.
        assert_eq!(bonus_reward(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0], &spec), 0.0);
        // 45 degrees.
        let b = bonus_reward(&[1.0, 0.0, 0.0, 0.0], &[1.0, 1.0], &spec);
        assert!((b - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn degenerate_goals_give_zero_bonus() {
        let spec = GoalSpaceSpec::position(1.0);
        assert_eq!(bonus_reward(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0], &spec), 0.0);
        assert_eq!(bonus_reward(&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0], &spec), 0.0);
    }

    /// Scale invariance: bonus(s', c*g) == bonus(s', g) for positive c.
    #[test]
    fn cosine_is_scale_invariant() {
        let spec = GoalSpaceSpec::position(1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..200 {
            let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let base = bonus_reward(&s, &g, &spec);
            for c in [0.5, 3.0] {
                let scaled: Vec<f64> = g.iter().map(|x| x * c).collect();
                assert!((bonus_reward(&s, &scaled, &spec) - base).abs() < 1e-12);
            }
        }
    }

    fn norm10() -> Affine {
        Affine {
            offset: vec![5.0, 5.0],
            scale: vec![5.0, 5.0],
        }
    }

    fn dummy_planner(goal_dim: usize) -> GoalPlanner {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        GoalPlanner::new(goal_dim, &Affine::identity(goal_dim), &mut rng)
    }

    #[test]
    fn beta_zero_wrapper_is_the_identity_on_rewards() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut plain = PointMass::new();
        let mut wrapped = wrap_env_with_bonus(
            Box::new(PointMass::new()),
            dummy_planner(2),
            BonusConfig { beta: 0.0 },
        )
        .unwrap();
        let a = plain.reset(&mut ChaCha12Rng::seed_from_u64(5));
        let b = wrapped.reset(&mut ChaCha12Rng::seed_from_u64(5));
        assert_eq!(a, b);
        for _ in 0..30 {
            let action = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let ra = plain.step(&action).unwrap();
            let rb = wrapped.step(&action).unwrap();
            assert_eq!(ra.reward, rb.reward);
            assert_eq!(rb.bonus, 0.0);
        }
    }

    /// Wrapped reward stays within beta of the sparse reward and success
    /// never depends on the bonus.
    #[test]
    fn wrapped_reward_is_bounded_and_success_is_sparse() {
        let beta = 2.5;
        let mut wrapped = wrap_env_with_bonus(
            Box::new(PointMass::new()),
            dummy_planner(2),
            BonusConfig { beta },
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        wrapped.reset(&mut rng);
        for _ in 0..200 {
            let action = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let r = wrapped.step(&action).unwrap();
            assert!(r.reward >= r.sparse_reward - beta - 1e-12);
            assert!(r.reward <= r.sparse_reward + beta + 1e-12);
            assert_eq!(r.success, r.sparse_reward == 1.0);
            if r.done {
                wrapped.reset(&mut rng);
            }
        }
    }

    #[test]
    fn wrapper_rejects_goal_dim_mismatch() {
        let err = match wrap_env_with_bonus(
            Box::new(PointMass::new()),
            dummy_planner(3),
            BonusConfig::default(),
        ) {
            Err(e) => e,
            Ok(_) => panic!("expected a contract error"),
        };
        assert!(matches!(err, PilotError::Contract(_)));
    }

    fn identity_teacher() -> DecoupledPolicy {
        // Planner mean output equals the input state; log-std head at zero.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut p = DecoupledPolicy::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let sd = 4;
        let in_dim = sd + 2;
        let mut w = vec![0.0; 2 * sd * in_dim];
        for j in 0..sd {
            w[j * in_dim + j] = 1.0;
        }
        p.planner = MlpParams {
            layers: vec![crate::numerics::LinearLayer {
                weight: Tensor::matrix(2 * sd, in_dim, w).unwrap(),
                bias: Tensor::from_vec(vec![0.0; 2 * sd]),
            }],
            activation: Activation::Tanh,
        };
        p
    }

    fn random_buffer(seed: u64, n: usize) -> ReplayBuffer {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut buf = ReplayBuffer::new(n, GoalSpaceSpec::position(1.0));
        let mut traj = Vec::new();
        for i in 0..n {
            let s: Vec<f64> = vec![
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ];
            traj.push(Transition {
                achieved_goal: s[..2].to_vec(),
                next_state: s.clone(),
                state: s,
                action: vec![0.0, 0.0],
                desired_goal: vec![5.0, 5.0],
                reward: 0.0,
                done: i + 1 == n,
                trajectory_id: 0,
                step_index: i as u32,
            });
        }
        buf.push(traj).unwrap();
        buf
    }

    /// Identity teacher: the distilled planner reproduces the current goal.
    #[test]
    fn identity_teacher_distills_to_identity() {
        let teacher = identity_teacher();
        let buf = random_buffer(4, 600);
        let spec = GoalSpaceSpec::position(1.0);
        let mut sampler = |rng: &mut dyn RngCore| -> Vec<f64> {
            vec![
                rand::Rng::gen_range(rng, 0.0..10.0),
                rand::Rng::gen_range(rng, 0.0..10.0),
            ]
        };
        let (student, report) =
            distill_goal_planner(&teacher, &buf, &spec, &norm10(), &mut sampler, 6000, 128, 2e-3, 0)
                .unwrap();
        assert!(
            report.heldout_mean_err < 0.05,
            "held-out error {}",
            report.heldout_mean_err
        );
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let g = vec![rng.gen_range(0.5..9.5), rng.gen_range(0.5..9.5)];
            let gt = vec![rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            let lm = student.plan_landmark(&g, &gt).unwrap();
            assert!(
                crate::numerics::euclidean(&lm, &g) < 0.05,
                "landmark {lm:?} vs goal {g:?}"
            );
        }
    }

    #[test]
    fn zero_distillation_steps_leave_the_student_untouched() {
        let teacher = identity_teacher();
        let buf = random_buffer(4, 100);
        let spec = GoalSpaceSpec::position(1.0);
        let mut sampler = |_: &mut dyn RngCore| vec![5.0, 5.0];
        let (student, _) =
            distill_goal_planner(&teacher, &buf, &spec, &norm10(), &mut sampler, 0, 64, 1e-3, 7).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7 ^ 0xD15711);
        let fresh = GoalPlanner::new(2, &norm10(), &mut rng);
        assert_eq!(student.net.to_flat(), fresh.net.to_flat());
    }

    /// Distillation consistency on held-out states: student landmarks track
    /// the goal image of the teacher's mean prediction.
    #[test]
    fn distillation_consistency_against_the_teacher() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let teacher = DecoupledPolicy::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let buf = random_buffer(5, 600);
        let spec = GoalSpaceSpec::position(1.0);
        let mut sampler = |rng: &mut dyn RngCore| -> Vec<f64> {
            vec![
                rand::Rng::gen_range(rng, 0.0..10.0),
                rand::Rng::gen_range(rng, 0.0..10.0),
            ]
        };
        let (_, report) =
            distill_goal_planner(&teacher, &buf, &spec, &norm10(), &mut sampler, 4000, 128, 1e-3, 1)
                .unwrap();
        assert!(
            report.heldout_mean_err <= 0.1,
            "teacher-student gap {}",
            report.heldout_mean_err
        );
    }

    #[test]
    fn landmark_queries_are_deterministic() {
        let planner = dummy_planner(2);
        let a = planner.plan_landmark(&[1.0, 2.0], &[8.0, 9.0]).unwrap();
        let b = planner.plan_landmark(&[1.0, 2.0], &[8.0, 9.0]).unwrap();
        assert_eq!(a, b);
        assert!(planner.plan_landmark(&[1.0], &[8.0, 9.0]).is_err());
    }

    #[test]
    fn transfer_freezes_the_planner_bits() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let source = DecoupledPolicy::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let planner_before = source.planner.to_flat();
        let mut env = EnvKind::PointMassLiftedAction.build();
        let cfg = TrainConfig {
            total_env_steps: 600,
            eval_interval: 300,
            eval_episodes: 2,
            updates_per_episode: 2,
            delta: 4,
            inverse_budget: 20,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let out = transfer_state_planner(&source, env.as_mut(), &cfg, 3, &mut |_| Ok(())).unwrap();
        assert_eq!(out.policy.planner.to_flat(), planner_before);
        assert_eq!(out.policy.action_dim, 4);
        assert!(!out.metrics.is_empty());
    }

    #[test]
    fn transfer_rejects_state_dim_mismatch() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let source = DecoupledPolicy::new(6, 2, 2, &IoNorm::identity(6, 2), &mut rng);
        let mut env = EnvKind::PointMass.build();
        let err = match transfer_state_planner(&source, env.as_mut(), &TrainConfig::default(), 0, &mut |_| Ok(()))
        {
            Err(e) => e,
            Ok(_) => panic!("expected a contract error"),
        };
        assert!(matches!(err, PilotError::Contract(_)));
    }

    /// Zero-shot rollouts only read parameters; checksum the flats around a
    /// batch of rollouts.
    #[test]
    fn zero_shot_performs_no_parameter_writes() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let planner = dummy_planner(2);
        let controller = crate::udpo::BaselinePolicy::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let before = (planner.net.to_flat(), controller.actor.to_flat());
        let exec = LandmarkExecutor::new(&planner, &controller);
        let mut env = EnvKind::Maze2d.build();
        let goal = [1.0, 9.0];
        for seed in 0..5 {
            let mut ep_rng = ChaCha12Rng::seed_from_u64(seed);
            let (traj, _) = zero_shot_rollout(&exec, env.as_mut(), &mut ep_rng, &goal).unwrap();
            assert_eq!(traj.len(), env.episode_len() + 1);
        }
        assert_eq!(planner.net.to_flat(), before.0);
        assert_eq!(controller.actor.to_flat(), before.1);
    }
}
