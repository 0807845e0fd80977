//! Hand-derived gradients for the three training objectives that reach
//! through more than one network. Each function returns the scalar objective
//! so finite differences can pin the implementation.

use crate::error::Result;
use crate::numerics::gaussian::join_head_grads;
use crate::numerics::{HeadBatch, MlpGrads, MlpParams, Tensor};
use crate::udpo::critic::QFunction;

/// Pieces of the composite planner objective, reported for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct CompositeParts {
    /// Mean critic value of the replanned actions.
    pub mean_q: f64,
    /// Mean log likelihood of realized next states under the planner.
    pub legality_log_lik: f64,
}

/// Composite planner objective and its gradient with respect to the planner
/// parameters only:
///
/// `J(psi) = mean[ Q(s, a~, g) ] + lambda * mean[ log h(s' | s, g) ]`
///
/// where `s~' = mean_h + std_h * eps` is the reparameterized planned state
/// and `a~ = tanh(mean_I(s, s~'))` is the inverse-dynamics mean action for
/// it. Gradients flow through the critic input and the (frozen) inverse
/// dynamics back into the planner; inverse-dynamics and critic parameters
/// receive none.
pub fn planner_composite_grad(
    planner: &MlpParams,
    inverse: &MlpParams,
    q: &dyn QFunction,
    states: &Tensor,
    goals: &Tensor,
    next_states: &Tensor,
    noise: &Tensor,
    lambda: f64,
) -> Result<(f64, MlpGrads, CompositeParts)> {
    let batch = states.rows();
    let b = batch as f64;
    let state_dim = states.cols();

    // Planner forward.
    let x_h = Tensor::concat_cols(&[states, goals])?;
    let (out_h, cache_h) = planner.forward_cached(&x_h)?;
    let head_h = HeadBatch::split(&out_h)?;
    let planned = head_h.sample(noise)?;

    // Frozen inverse dynamics: deterministic mean action for planned states.
    let x_i = Tensor::concat_cols(&[states, &planned])?;
    let (out_i, cache_i) = inverse.forward_cached(&x_i)?;
    let head_i = HeadBatch::split(&out_i)?;
    let action = head_i.mean.map(f64::tanh);

    // Critic value of the replanned action.
    let x_q = Tensor::concat_cols(&[states, &action, goals])?;
    let (q_vals, dq_dx) = q.q_and_input_grad(&x_q)?;
    let mean_q = q_vals.iter().sum::<f64>() / b;

    // d(mean Q)/d(action), then back through the tanh into the inverse
    // dynamics mean head.
    let action_dim = action.cols();
    let mut d_pre = Tensor::zeros(&[batch, action_dim]);
    for r in 0..batch {
        let dq = &dq_dx.row(r)[state_dim..state_dim + action_dim];
        let a = action.row(r);
        for j in 0..action_dim {
            d_pre.row_mut(r)[j] = dq[j] / b * (1.0 - a[j] * a[j]);
        }
    }
    let d_out_i = join_head_grads(&d_pre, &Tensor::zeros(&[batch, action_dim]))?;
    let (_, d_x_i) = inverse.backward_cached(&cache_i, &d_out_i)?;
    let d_planned = d_x_i.col_slice(state_dim, state_dim);

    // Legality term: mean log likelihood of the realized next states.
    let (nll, d_mean_nll, d_ls_nll) = head_h.nll_and_grads(next_states)?;
    let legality_log_lik = -nll;

    // Combine both pathways into the planner head gradient (of J, ascent
    // direction): planned-state path plus the lambda-weighted MLE path.
    let mut d_mean_h = d_planned.clone();
    let mut d_ls_h = Tensor::zeros(&[batch, state_dim]);
    for r in 0..batch {
        let dm = d_mean_h.row_mut(r);
        for (j, dmj) in dm.iter_mut().enumerate() {
            *dmj -= lambda * d_mean_nll.row(r)[j];
        }
        let sigma_eps: Vec<f64> = head_h
            .log_std
            .row(r)
            .iter()
            .zip(noise.row(r))
            .map(|(s, n)| s.exp() * n)
            .collect();
        let dl = d_ls_h.row_mut(r);
        for j in 0..state_dim {
            dl[j] = d_planned.row(r)[j] * sigma_eps[j] * head_h.clamp_mask.row(r)[j]
                - lambda * d_ls_nll.row(r)[j];
        }
    }
    let d_out_h = join_head_grads(&d_mean_h, &d_ls_h)?;
    let (grads, _) = planner.backward_cached(&cache_h, &d_out_h)?;

    Ok((
        mean_q + lambda * legality_log_lik,
        grads,
        CompositeParts {
            mean_q,
            legality_log_lik,
        },
    ))
}

/// Negative log likelihood of pre-squash action targets under the
/// inverse-dynamics head, with its parameter gradients. Targets must already
/// be in `atanh` space.
pub fn inverse_nll_grad(
    inverse: &MlpParams,
    states: &Tensor,
    next_states: &Tensor,
    pre_squash_actions: &Tensor,
) -> Result<(f64, MlpGrads)> {
    let x = Tensor::concat_cols(&[states, next_states])?;
    let (out, cache) = inverse.forward_cached(&x)?;
    let head = HeadBatch::split(&out)?;
    let (nll, d_mean, d_ls) = head.nll_and_grads(pre_squash_actions)?;
    let d_out = join_head_grads(&d_mean, &d_ls)?;
    let (grads, _) = inverse.backward_cached(&cache, &d_out)?;
    Ok((nll, grads))
}

/// Deterministic-policy-gradient objective for the monolithic actor:
/// `J(theta) = mean[ Q(s, tanh(mean_theta(s, g)), g) ]`, returning the
/// objective and its gradient with respect to the actor parameters.
pub fn dpg_actor_grad(
    actor: &MlpParams,
    q: &dyn QFunction,
    states: &Tensor,
    goals: &Tensor,
) -> Result<(f64, MlpGrads)> {
    let batch = states.rows();
    let b = batch as f64;
    let state_dim = states.cols();
    let x_a = Tensor::concat_cols(&[states, goals])?;
    let (out, cache) = actor.forward_cached(&x_a)?;
    let head = HeadBatch::split(&out)?;
    let action = head.mean.map(f64::tanh);
    let action_dim = action.cols();

    let x_q = Tensor::concat_cols(&[states, &action, goals])?;
    let (q_vals, dq_dx) = q.q_and_input_grad(&x_q)?;
    let mean_q = q_vals.iter().sum::<f64>() / b;

    let mut d_pre = Tensor::zeros(&[batch, action_dim]);
    for r in 0..batch {
        let dq = &dq_dx.row(r)[state_dim..state_dim + action_dim];
        let a = action.row(r);
        for j in 0..action_dim {
            d_pre.row_mut(r)[j] = dq[j] / b * (1.0 - a[j] * a[j]);
        }
    }
    let d_out = join_head_grads(&d_pre, &Tensor::zeros(&[batch, action_dim]))?;
    let (grads, _) = actor.backward_cached(&cache, &d_out)?;
    Ok((mean_q, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gaussian::normal_vec;
    use crate::numerics::{finite_diff_grad, max_rel_err, Activation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Analytic quadratic critic: q(x) = -||x - c||^2.
    struct QuadraticQ {
        center: Vec<f64>,
    }

    impl QFunction for QuadraticQ {
        fn q_and_input_grad(&self, x: &Tensor) -> Result<(Vec<f64>, Tensor)> {
            let mut q = Vec::with_capacity(x.rows());
            let mut grad = Tensor::zeros(&[x.rows(), x.cols()]);
            for r in 0..x.rows() {
                let row = x.row(r);
                let mut v = 0.0;
                for (j, (xi, ci)) in row.iter().zip(&self.center).enumerate() {
                    let d = xi - ci;
                    v -= d * d;
                    grad.row_mut(r)[j] = -2.0 * d;
                }
                q.push(v);
            }
            Ok((q, grad))
        }
    }

    struct ZeroQ;

    impl QFunction for ZeroQ {
        fn q_and_input_grad(&self, x: &Tensor) -> Result<(Vec<f64>, Tensor)> {
            Ok((vec![0.0; x.rows()], Tensor::zeros(&[x.rows(), x.cols()])))
        }
    }

    fn small_setup(
        seed: u64,
        hidden: bool,
    ) -> (MlpParams, MlpParams, Tensor, Tensor, Tensor, Tensor) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (sd, ad, gd, b) = (3, 2, 2, 4);
        let planner = if hidden {
            MlpParams::new(&[sd + gd, 8, 2 * sd], Activation::Tanh, &mut rng)
        } else {
            MlpParams::new(&[sd + gd, 2 * sd], Activation::Tanh, &mut rng)
        };
        let inverse = if hidden {
            MlpParams::new(&[2 * sd, 8, 2 * ad], Activation::Tanh, &mut rng)
        } else {
            MlpParams::new(&[2 * sd, 2 * ad], Activation::Tanh, &mut rng)
        };
        let mk = |rng: &mut ChaCha12Rng, r: usize, c: usize| {
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let states = mk(&mut rng, b, sd);
        let goals = mk(&mut rng, b, gd);
        let next_states = mk(&mut rng, b, sd);
        let noise = Tensor::matrix(b, sd, normal_vec(&mut rng, b * sd)).unwrap();
        (planner, inverse, states, goals, next_states, noise)
    }

    /// Linear planner, fixed linear inverse dynamics, quadratic critic,
    /// lambda = 0: the analytic composite gradient matches finite
    /// differences tightly.
    #[test]
    fn linear_quadratic_composite_matches_finite_differences() {
        let (planner, inverse, states, goals, next_states, noise) = small_setup(11, false);
        let q = QuadraticQ {
            center: vec![0.3; 3 + 2 + 2],
        };
        let (_, grads, _) = planner_composite_grad(
            &planner, &inverse, &q, &states, &goals, &next_states, &noise, 0.0,
        )
        .unwrap();
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = planner.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                let (j, _, _) = planner_composite_grad(
                    &probe, &inverse, &q, &states, &goals, &next_states, &noise, 0.0,
                )?;
                Ok(j)
            },
            &planner.to_flat(),
            1e-5,
        )
        .unwrap();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "max rel err {err}");
    }

    /// Full nonlinear stack with both objective terms active.
    #[test]
    fn nonlinear_composite_matches_finite_differences() {
        for seed in 0..4 {
            let (planner, inverse, states, goals, next_states, noise) = small_setup(seed, true);
            let q = QuadraticQ {
                center: vec![-0.2; 7],
            };
            let lambda = 0.5;
            let (_, grads, _) = planner_composite_grad(
                &planner, &inverse, &q, &states, &goals, &next_states, &noise, lambda,
            )
            .unwrap();
            let analytic = MlpParams::grads_to_flat(&grads);
            let mut probe = planner.clone();
            let numeric = finite_diff_grad(
                |p| {
                    probe.load_flat(p).unwrap();
                    let (j, _, _) = planner_composite_grad(
                        &probe, &inverse, &q, &states, &goals, &next_states, &noise, lambda,
                    )?;
                    Ok(j)
                },
                &planner.to_flat(),
                1e-5,
            )
            .unwrap();
            let err = max_rel_err(&analytic, &numeric);
            assert!(err < 1e-3, "seed {seed}: max rel err {err}");
        }
    }

    /// With a zero critic the composite gradient is exactly lambda times the
    /// legality-term gradient (additive decomposition).
    #[test]
    fn zero_critic_reduces_to_the_legality_gradient() {
        let (planner, inverse, states, goals, next_states, noise) = small_setup(21, true);
        let lambda = 0.7;
        let (j_zero, g_zero, parts) = planner_composite_grad(
            &planner, &inverse, &ZeroQ, &states, &goals, &next_states, &noise, lambda,
        )
        .unwrap();
        assert_eq!(parts.mean_q, 0.0);
        assert!((j_zero - lambda * parts.legality_log_lik).abs() < 1e-12);

        // Pure MLE gradient of the legality term via the same machinery at
        // lambda = 1 and zero critic.
        let (_, g_mle, _) = planner_composite_grad(
            &planner, &inverse, &ZeroQ, &states, &goals, &next_states, &noise, 1.0,
        )
        .unwrap();
        let a = MlpParams::grads_to_flat(&g_zero);
        let b = MlpParams::grads_to_flat(&g_mle);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - lambda * y).abs() < 1e-12);
        }
    }

    /// Setting lambda to zero removes the legality contribution exactly.
    #[test]
    fn lambda_additivity_is_exact() {
        let (planner, inverse, states, goals, next_states, noise) = small_setup(33, true);
        let q = QuadraticQ {
            center: vec![0.1; 7],
        };
        let lambda = 0.9;
        let (_, g_full, _) = planner_composite_grad(
            &planner, &inverse, &q, &states, &goals, &next_states, &noise, lambda,
        )
        .unwrap();
        let (_, g_pg, _) = planner_composite_grad(
            &planner, &inverse, &q, &states, &goals, &next_states, &noise, 0.0,
        )
        .unwrap();
        let (_, g_mle, _) = planner_composite_grad(
            &planner, &inverse, &ZeroQ, &states, &goals, &next_states, &noise, 1.0,
        )
        .unwrap();
        let full = MlpParams::grads_to_flat(&g_full);
        let pg = MlpParams::grads_to_flat(&g_pg);
        let mle = MlpParams::grads_to_flat(&g_mle);
        for i in 0..full.len() {
            assert!(
                (full[i] - pg[i] - lambda * mle[i]).abs() < 1e-10,
                "coordinate {i}"
            );
        }
    }

    #[test]
    fn inverse_nll_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let inverse = MlpParams::new(&[6, 8, 4], Activation::Tanh, &mut rng);
        let states = Tensor::matrix(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let next_states =
            Tensor::matrix(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let targets =
            Tensor::matrix(3, 2, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (_, grads) = inverse_nll_grad(&inverse, &states, &next_states, &targets).unwrap();
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = inverse.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                let (nll, _) = inverse_nll_grad(&probe, &states, &next_states, &targets)?;
                Ok(nll)
            },
            &inverse.to_flat(),
            1e-5,
        )
        .unwrap();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn dpg_actor_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let actor = MlpParams::new(&[5, 8, 4], Activation::Tanh, &mut rng);
        let states = Tensor::matrix(3, 3, (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let goals = Tensor::matrix(3, 2, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let q = QuadraticQ {
            center: vec![0.25; 7],
        };
        let (_, grads) = dpg_actor_grad(&actor, &q, &states, &goals).unwrap();
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = actor.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                let (j, _) = dpg_actor_grad(&probe, &q, &states, &goals)?;
                Ok(j)
            },
            &actor.to_flat(),
            1e-5,
        )
        .unwrap();
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "max rel err {err}");
    }
}
