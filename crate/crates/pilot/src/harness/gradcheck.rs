//! The gradient-verification suite behind the `gradcheck` stage.
//!
//! Every analytic gradient in the crate is replayed against the central
//! finite-difference oracle over seeded random configurations: raw MLP
//! backprop (small nets exhaustively, production-width nets on a coordinate
//! sample), Gaussian log-density gradients, the composite planner objective
//! with frozen inverse dynamics, the inverse-dynamics likelihood, the critic
//! TD loss, and the actor pathway through the critic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::envs::IoNorm;
use crate::error::Result;
use crate::numerics::gaussian::normal_vec;
use crate::numerics::{
    dot, finite_diff_grad, max_rel_err, Activation, HeadBatch, MlpParams, Tensor,
};
use crate::replay::Transition;
use crate::udpo::critic::QFunction;
use crate::udpo::{dpg_actor_grad, inverse_nll_grad, planner_composite_grad, Critic};

pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradcheckEntry {
    pub name: &'static str,
    pub configs: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.max_rel_err < GRADCHECK_TOLERANCE)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let status = if e.max_rel_err < GRADCHECK_TOLERANCE {
                "ok"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "{:28} configs {:3}  max rel err {:.3e}  [{status}]\n",
                e.name, e.configs, e.max_rel_err
            ));
        }
        out.push_str(&format!(
            "tolerance {GRADCHECK_TOLERANCE:.0e}: {}\n",
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Small MLP critic used where the suite needs a differentiable Q.
struct MlpQ(MlpParams);

impl QFunction for MlpQ {
    fn q_and_input_grad(&self, x: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        let (q, cache) = self.0.forward_cached(x)?;
        let ones = Tensor::from_shape_vec(vec![x.rows(), 1], vec![1.0; x.rows()])?;
        let (_, input_grad) = self.0.backward_cached(&cache, &ones)?;
        Ok((q.into_vec(), input_grad))
    }
}

fn uniform(rng: &mut ChaCha12Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn check_mlp_backward_small(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xA100 + seed);
        let activation = if seed % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let net = MlpParams::new(&[5, 9, 7, 3], activation, &mut rng);
        let x = Tensor::matrix(2, 5, uniform(&mut rng, 10, -1.5, 1.5))?;
        let v = Tensor::matrix(2, 3, uniform(&mut rng, 6, -1.0, 1.0))?;
        let (grads, _) = net.backward(&x, &v)?;
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = net.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                Ok(dot(probe.forward(&x)?.data(), v.data()))
            },
            &net.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "mlp_backward_small",
        configs,
        max_rel_err: worst,
    })
}

/// Production-width network, finite-differenced on a random coordinate
/// sample (a full sweep over ~20k parameters is needless).
fn check_mlp_backward_full_width(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xB200 + seed);
        let net = MlpParams::new(&[6, 128, 128, 8], Activation::Tanh, &mut rng);
        let x = Tensor::from_vec(uniform(&mut rng, 6, -1.0, 1.0));
        let v = Tensor::from_vec(uniform(&mut rng, 8, -1.0, 1.0));
        let (grads, _) = net.backward(&x, &v)?;
        let analytic = MlpParams::grads_to_flat(&grads);
        let flat = net.to_flat();
        let n_coords = 400;
        let mut coords: Vec<usize> = (0..n_coords)
            .map(|_| rng.gen_range(0..flat.len()))
            .collect();
        coords.sort_unstable();
        coords.dedup();
        let mut probe = net.clone();
        let sub0: Vec<f64> = coords.iter().map(|&c| flat[c]).collect();
        let numeric_sub = finite_diff_grad(
            |sub| {
                let mut full = flat.clone();
                for (c, s) in coords.iter().zip(sub) {
                    full[*c] = *s;
                }
                probe.load_flat(&full).unwrap();
                Ok(dot(probe.forward(&x)?.data(), v.data()))
            },
            &sub0,
            1e-5,
        )?;
        let analytic_sub: Vec<f64> = coords.iter().map(|&c| analytic[c]).collect();
        worst = worst.max(max_rel_err(&analytic_sub, &numeric_sub));
    }
    Ok(GradcheckEntry {
        name: "mlp_backward_full_width",
        configs,
        max_rel_err: worst,
    })
}

fn check_gaussian_log_prob(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC300 + seed);
        let d = 4;
        // Raw head parameters stay inside the clamp to avoid its kink.
        let mut params = uniform(&mut rng, d, -1.0, 1.0);
        params.extend(uniform(&mut rng, d, -1.5, 1.0));
        let targets = Tensor::matrix(1, d, uniform(&mut rng, d, -2.0, 2.0))?;
        let head = HeadBatch::split(&Tensor::matrix(1, 2 * d, params.clone())?)?;
        let (_, d_mean, d_ls) = head.nll_and_grads(&targets)?;
        let mut analytic = d_mean.into_vec();
        analytic.extend(d_ls.into_vec());
        let numeric = finite_diff_grad(
            |p| {
                let head = HeadBatch::split(&Tensor::matrix(1, 2 * d, p.to_vec())?)?;
                let (nll, _, _) = head.nll_and_grads(&targets)?;
                Ok(nll)
            },
            &params,
            1e-6,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "gaussian_log_prob",
        configs,
        max_rel_err: worst,
    })
}

fn check_planner_composite(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    let (sd, ad, gd, b) = (3, 2, 2, 4);
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xD400 + seed);
        let planner = MlpParams::new(&[sd + gd, 10, 2 * sd], Activation::Tanh, &mut rng);
        let inverse = MlpParams::new(&[2 * sd, 10, 2 * ad], Activation::Tanh, &mut rng);
        let q = MlpQ(MlpParams::new(
            &[sd + ad + gd, 12, 1],
            Activation::Tanh,
            &mut rng,
        ));
        let states = Tensor::matrix(b, sd, uniform(&mut rng, b * sd, -1.0, 1.0))?;
        let goals = Tensor::matrix(b, gd, uniform(&mut rng, b * gd, -1.0, 1.0))?;
        let next_states = Tensor::matrix(b, sd, uniform(&mut rng, b * sd, -1.0, 1.0))?;
        let noise = Tensor::matrix(b, sd, normal_vec(&mut rng, b * sd))?;
        let lambda = rng.gen_range(0.0..1.0);
        let (_, grads, _) = planner_composite_grad(
            &planner,
            &inverse,
            &q,
            &states,
            &goals,
            &next_states,
            &noise,
            lambda,
        )?;
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = planner.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                let (j, _, _) = planner_composite_grad(
                    &probe,
                    &inverse,
                    &q,
                    &states,
                    &goals,
                    &next_states,
                    &noise,
                    lambda,
                )?;
                Ok(j)
            },
            &planner.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "planner_composite",
        configs,
        max_rel_err: worst,
    })
}

fn check_inverse_mle(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    let (sd, ad, b) = (3, 2, 4);
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xE500 + seed);
        let inverse = MlpParams::new(&[2 * sd, 10, 2 * ad], Activation::Tanh, &mut rng);
        let states = Tensor::matrix(b, sd, uniform(&mut rng, b * sd, -1.0, 1.0))?;
        let next_states = Tensor::matrix(b, sd, uniform(&mut rng, b * sd, -1.0, 1.0))?;
        let targets = Tensor::matrix(b, ad, uniform(&mut rng, b * ad, -1.5, 1.5))?;
        let (_, grads) = inverse_nll_grad(&inverse, &states, &next_states, &targets)?;
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = inverse.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                Ok(inverse_nll_grad(&probe, &states, &next_states, &targets)?.0)
            },
            &inverse.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "inverse_dynamics_mle",
        configs,
        max_rel_err: worst,
    })
}

fn check_critic_td(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xF600 + seed);
        let mut critic = Critic::new(4, 2, 2, &IoNorm::identity(4, 2), &mut rng);
        critic.q1 = MlpParams::new(&[8, 10, 1], Activation::Tanh, &mut rng);
        critic.q2 = MlpParams::new(&[8, 10, 1], Activation::Tanh, &mut rng);
        let batch: Vec<Transition> = (0..4)
            .map(|i| Transition {
                state: uniform(&mut rng, 4, -1.0, 1.0),
                action: uniform(&mut rng, 2, -1.0, 1.0),
                next_state: uniform(&mut rng, 4, -1.0, 1.0),
                achieved_goal: uniform(&mut rng, 2, -1.0, 1.0),
                desired_goal: uniform(&mut rng, 2, -1.0, 1.0),
                reward: if i % 2 == 0 { 1.0 } else { 0.0 },
                done: i % 3 == 0,
                trajectory_id: 0,
                step_index: i as u32,
            })
            .collect();
        let targets = uniform(&mut rng, 4, -0.5, 1.5);
        let (_, g1, _) = critic.td_loss_and_grads(&batch, &targets)?;
        let analytic = MlpParams::grads_to_flat(&g1);
        // Perturbing q1 leaves q2's loss constant, so differentiate twice
        // the reported (averaged) loss.
        let numeric = finite_diff_grad(
            |p| {
                let mut c = critic.clone();
                c.q1.load_flat(p).unwrap();
                let (loss, _, _) = c.td_loss_and_grads(&batch, &targets)?;
                Ok(2.0 * loss)
            },
            &critic.q1.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "critic_td_loss",
        configs,
        max_rel_err: worst,
    })
}

fn check_dpg_actor(configs: usize) -> Result<GradcheckEntry> {
    let mut worst = 0.0f64;
    let (sd, ad, gd, b) = (3, 2, 2, 4);
    for seed in 0..configs as u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAB70 + seed);
        let actor = MlpParams::new(&[sd + gd, 10, 2 * ad], Activation::Tanh, &mut rng);
        let q = MlpQ(MlpParams::new(
            &[sd + ad + gd, 12, 1],
            Activation::Tanh,
            &mut rng,
        ));
        let states = Tensor::matrix(b, sd, uniform(&mut rng, b * sd, -1.0, 1.0))?;
        let goals = Tensor::matrix(b, gd, uniform(&mut rng, b * gd, -1.0, 1.0))?;
        let (_, grads) = dpg_actor_grad(&actor, &q, &states, &goals)?;
        let analytic = MlpParams::grads_to_flat(&grads);
        let mut probe = actor.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.load_flat(p).unwrap();
                Ok(dpg_actor_grad(&probe, &q, &states, &goals)?.0)
            },
            &actor.to_flat(),
            1e-5,
        )?;
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    Ok(GradcheckEntry {
        name: "dpg_actor",
        configs,
        max_rel_err: worst,
    })
}

/// Run every gradient family at `configs` seeded configurations each.
pub fn run_gradient_suite(configs: usize) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        entries: vec![
            check_mlp_backward_small(configs)?,
            check_mlp_backward_full_width(2)?,
            check_gaussian_log_prob(configs)?,
            check_planner_composite(configs)?,
            check_inverse_mle(configs)?,
            check_critic_td(configs)?,
            check_dpg_actor(configs)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_with_a_handful_of_configs() {
        let report = run_gradient_suite(4).unwrap();
        assert!(report.passed(), "\n{}", report.render());
        assert_eq!(report.entries.len(), 7);
    }
}
