//! Twin goal-conditioned action-value critics with soft target copies.

use rand::RngCore;

use crate::envs::{Affine, IoNorm};
use crate::error::Result;
use crate::numerics::{Activation, MlpParams, Tensor};
use crate::replay::Transition;
use crate::udpo::policy::{GoalPolicy, HIDDEN};

/// Soft target update rate.
pub const TAU: f64 = 0.005;

/// Q signal consumed by actor/planner updates: per-row value plus the
/// gradient of each row's value with respect to its own input row.
pub trait QFunction {
    fn q_and_input_grad(&self, x: &Tensor) -> Result<(Vec<f64>, Tensor)>;
}

#[derive(Debug, Clone)]
pub struct Critic {
    pub q1: MlpParams,
    pub q2: MlpParams,
    pub target1: MlpParams,
    pub target2: MlpParams,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
}

impl Critic {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        goal_dim: usize,
        norm: &IoNorm,
        rng: &mut dyn RngCore,
    ) -> Self {
        let dims = [&[state_dim + action_dim + goal_dim][..], &HIDDEN, &[1]].concat();
        let input = Affine::concat(&[&norm.obs, &Affine::identity(action_dim), &norm.goal]);
        let mut q1 = MlpParams::new(&dims, Activation::Tanh, rng);
        let mut q2 = MlpParams::new(&dims, Activation::Tanh, rng);
        q1.fold_input_affine(&input.offset, &input.scale);
        q2.fold_input_affine(&input.offset, &input.scale);
        Self {
            target1: q1.clone(),
            target2: q2.clone(),
            q1,
            q2,
            state_dim,
            action_dim,
            goal_dim,
        }
    }

    /// Polyak-average the online networks into the targets.
    pub fn soft_update(&mut self) {
        for (online, target) in [(&self.q1, &mut self.target1), (&self.q2, &mut self.target2)] {
            let online_flat = online.to_flat();
            let mut flat = target.to_flat();
            for (t, o) in flat.iter_mut().zip(&online_flat) {
                *t = (1.0 - TAU) * *t + TAU * o;
            }
            target.load_flat(&flat).expect("same architecture");
        }
    }

    fn input_rows(&self, batch: &[Transition]) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = batch
            .iter()
            .map(|t| {
                let mut row = Vec::with_capacity(self.state_dim + self.action_dim + self.goal_dim);
                row.extend_from_slice(&t.state);
                row.extend_from_slice(&t.action);
                row.extend_from_slice(&t.desired_goal);
                row
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        Tensor::from_rows(&refs)
    }

    /// Clipped double-Q bootstrap targets:
    /// `y = r + gamma * (1 - done) * min(Q1', Q2')(s', pi(s', g), g)`.
    pub fn td_targets(
        &self,
        policy: &dyn GoalPolicy,
        batch: &[Transition],
        gamma: f64,
    ) -> Result<Vec<f64>> {
        let next_rows: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        let goal_rows: Vec<&[f64]> = batch.iter().map(|t| t.desired_goal.as_slice()).collect();
        let next_states = Tensor::from_rows(&next_rows)?;
        let goals = Tensor::from_rows(&goal_rows)?;
        let next_actions = policy.det_actions(&next_states, &goals)?;
        let x = Tensor::concat_cols(&[&next_states, &next_actions, &goals])?;
        let q1 = self.target1.forward(&x)?;
        let q2 = self.target2.forward(&x)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let bootstrap = q1.data()[i].min(q2.data()[i]);
                let mask = if t.done { 0.0 } else { 1.0 };
                t.reward + gamma * mask * bootstrap
            })
            .collect())
    }

    /// Mean squared TD error of both critics against fixed targets, plus the
    /// parameter gradients of that loss.
    pub fn td_loss_and_grads(
        &self,
        batch: &[Transition],
        targets: &[f64],
    ) -> Result<(f64, crate::numerics::MlpGrads, crate::numerics::MlpGrads)> {
        let x = self.input_rows(batch)?;
        let b = batch.len() as f64;
        let mut total_loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        for net in [&self.q1, &self.q2] {
            let (pred, cache) = net.forward_cached(&x)?;
            let mut out_grad = Tensor::zeros(&[batch.len(), 1]);
            let mut loss = 0.0;
            for i in 0..batch.len() {
                let err = pred.data()[i] - targets[i];
                loss += err * err;
                out_grad.data_mut()[i] = 2.0 * err / b;
            }
            total_loss += loss / b;
            let (g, _) = net.backward_cached(&cache, &out_grad)?;
            grads.push(g);
        }
        let g2 = grads.pop().expect("two critics");
        let g1 = grads.pop().expect("two critics");
        Ok((total_loss / 2.0, g1, g2))
    }
}

impl QFunction for Critic {
    /// Actor-side signal: the first online critic.
    fn q_and_input_grad(&self, x: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        let (q, cache) = self.q1.forward_cached(x)?;
        let ones = Tensor::from_shape_vec(vec![x.rows(), 1], vec![1.0; x.rows()])?;
        let (_, input_grad) = self.q1.backward_cached(&cache, &ones)?;
        Ok((q.into_vec(), input_grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    struct StubPolicy;

    impl GoalPolicy for StubPolicy {
        fn obs_dim(&self) -> usize {
            4
        }
        fn action_dim(&self) -> usize {
            2
        }
        fn goal_dim(&self) -> usize {
            2
        }
        fn det_actions(&self, states: &Tensor, _goals: &Tensor) -> Result<Tensor> {
            Ok(Tensor::zeros(&[states.rows(), 2]))
        }
        fn explore_action(
            &self,
            _state: &[f64],
            _goal: &[f64],
            _sigma: f64,
            _rng: &mut dyn RngCore,
        ) -> Result<Vec<f64>> {
            Ok(vec![0.0, 0.0])
        }
    }

    fn transition(reward: f64, done: bool) -> Transition {
        Transition {
            state: vec![0.1, 0.2, 0.0, 0.0],
            action: vec![0.5, -0.5],
            next_state: vec![0.2, 0.3, 0.1, 0.1],
            achieved_goal: vec![0.2, 0.3],
            desired_goal: vec![1.0, 1.0],
            reward,
            done,
            trajectory_id: 0,
            step_index: 0,
        }
    }

    #[test]
    fn terminal_transitions_mask_the_bootstrap() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let critic = Critic::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let batch = vec![transition(1.0, true), transition(0.0, true)];
        let y = critic.td_targets(&StubPolicy, &batch, 0.99).unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn non_terminal_targets_bootstrap_the_min_target_critic() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let critic = Critic::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        let batch = vec![transition(0.0, false)];
        let y = critic.td_targets(&StubPolicy, &batch, 0.99).unwrap();

        let t = &batch[0];
        let x = Tensor::from_rows(&[&[
            t.next_state.as_slice(),
            &[0.0, 0.0][..],
            t.desired_goal.as_slice(),
        ]
        .concat()])
        .unwrap();
        let q1 = critic.target1.forward(&x).unwrap().data()[0];
        let q2 = critic.target2.forward(&x).unwrap().data()[0];
        assert!((y[0] - 0.99 * q1.min(q2)).abs() < 1e-12);
    }

    #[test]
    fn soft_update_is_a_convex_combination() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut critic = Critic::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        // Push the online critic away from the target, then blend.
        let mut flat = critic.q1.to_flat();
        for p in flat.iter_mut() {
            *p += 1.0;
        }
        critic.q1.load_flat(&flat).unwrap();
        let before_target = critic.target1.to_flat();
        critic.soft_update();
        for ((t, t0), o) in critic
            .target1
            .to_flat()
            .iter()
            .zip(&before_target)
            .zip(&flat)
        {
            assert!((t - ((1.0 - TAU) * t0 + TAU * o)).abs() < 1e-12);
        }
    }

    #[test]
    fn td_loss_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut critic = Critic::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        // Shrink to a small net for the finite-difference sweep.
        critic.q1 = MlpParams::new(&[8, 6, 1], Activation::Tanh, &mut rng);
        critic.q2 = MlpParams::new(&[8, 6, 1], Activation::Tanh, &mut rng);
        let batch = vec![transition(1.0, false), transition(0.0, true)];
        let targets = vec![0.3, -0.1];
        let (_, g1, _) = critic.td_loss_and_grads(&batch, &targets).unwrap();
        let analytic = MlpParams::grads_to_flat(&g1);

        let flat0 = critic.q1.to_flat();
        let numeric = finite_diff_grad(
            |p| {
                let mut c = critic.clone();
                c.q1.load_flat(p).unwrap();
                let (loss, _, _) = c.td_loss_and_grads(&batch, &targets)?;
                Ok(loss)
            },
            &flat0,
            1e-5,
        )
        .unwrap();
        // The shared loss halves each critic's MSE.
        let max = crate::numerics::max_rel_err(
            &analytic.iter().map(|g| g / 2.0).collect::<Vec<_>>(),
            &numeric,
        );
        assert!(max < 1e-6, "max rel err {max}");
    }
}
