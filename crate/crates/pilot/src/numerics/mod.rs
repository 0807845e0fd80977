//! Minimal dense math: tensors, MLPs with manual backprop, Gaussian heads,
//! Adam, and the finite-difference oracle used to verify every analytic
//! gradient in the crate.
//!
//! Everything here is pure over explicit state — no hidden globals — so the
//! same inputs always produce the same outputs, and disjoint data can be
//! driven from multiple threads.

pub mod fd;
pub mod gaussian;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use fd::{finite_diff_grad, max_rel_err, rel_err};
pub use gaussian::{GaussianHead, HeadBatch, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{Activation, LinearLayer, MlpCache, MlpGrads, MlpParams};
pub use optim::AdamState;
pub use tensor::{dot, euclidean, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Backward/finite-difference agreement for every network role used in
    /// the crate (planner, inverse dynamics, goal planner, critic, baseline
    /// actor), 16 seeded draws each. Hidden widths are kept small so the
    /// full-vector finite-difference sweep stays fast; the full 128-wide
    /// shape is spot-checked in the gradient suite.
    #[test]
    fn network_roles_agree_with_finite_differences() {
        // (name, dims): in/out widths match the real desk-scale roles for a
        // 4-d state, 2-d action, 2-d goal setup.
        let roles: &[(&str, Vec<usize>)] = &[
            ("planner", vec![6, 16, 16, 8]),
            ("inverse_dynamics", vec![8, 16, 16, 4]),
            ("goal_planner", vec![4, 16, 16, 4]),
            ("critic", vec![8, 16, 16, 1]),
            ("baseline_actor", vec![6, 16, 16, 4]),
        ];
        for (name, dims) in roles {
            for draw in 0..16u64 {
                let mut rng = ChaCha12Rng::seed_from_u64(0x5EED + draw);
                let net = MlpParams::new(dims, Activation::Tanh, &mut rng);
                let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..*dims.last().unwrap())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                let xt = Tensor::from_vec(x);
                let vt = Tensor::from_vec(v);
                let (grads, _) = net.backward(&xt, &vt).unwrap();
                let analytic = MlpParams::grads_to_flat(&grads);

                let mut probe = net.clone();
                let numeric = finite_diff_grad(
                    |p| {
                        probe.load_flat(p).unwrap();
                        Ok(dot(probe.forward(&xt)?.data(), vt.data()))
                    },
                    &net.to_flat(),
                    1e-5,
                )
                .unwrap();
                let err = max_rel_err(&analytic, &numeric);
                assert!(err < 1e-5, "{name} draw {draw}: max rel err {err}");
            }
        }
    }
}
