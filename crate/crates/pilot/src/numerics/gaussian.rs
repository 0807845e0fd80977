//! Diagonal Gaussian distribution heads.
//!
//! Networks that parameterize a distribution emit `2*d` values per row: the
//! first `d` are the mean, the last `d` the raw log standard deviation, which
//! is clamped to `[LOG_STD_MIN, LOG_STD_MAX]` before use. Sampling uses the
//! reparameterization `mean + exp(log_std) * noise` so gradients flow through
//! both halves.

use crate::error::{PilotError, Result};
use crate::numerics::tensor::Tensor;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.837877066409345; // ln(2*pi)

#[derive(Debug, Clone)]
pub struct GaussianHead {
    mean: Vec<f64>,
    log_std: Vec<f64>,
}

impl GaussianHead {
    /// Log stds are clamped into `[LOG_STD_MIN, LOG_STD_MAX]` on entry.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(PilotError::Shape(format!(
                "mean length {} vs log_std length {}",
                mean.len(),
                log_std.len()
            )));
        }
        let log_std = log_std
            .into_iter()
            .map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok(Self { mean, log_std })
    }

    /// Split one `2*d` network output row into a head.
    pub fn from_output_row(row: &[f64]) -> Result<Self> {
        if row.len() % 2 != 0 {
            return Err(PilotError::Shape(format!(
                "head output length {} is odd",
                row.len()
            )));
        }
        let d = row.len() / 2;
        Self::new(row[..d].to_vec(), row[d..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    /// Reparameterized sample `mean + exp(log_std) ⊙ noise`. Zero noise
    /// returns the mean bit-exactly.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        if noise.len() != self.mean.len() {
            return Err(PilotError::Shape(format!(
                "noise length {} vs head dim {}",
                noise.len(),
                self.mean.len()
            )));
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_std)
            .zip(noise)
            .map(|((m, s), n)| m + s.exp() * n)
            .collect())
    }

    /// Sum over dimensions of the diagonal Gaussian log density.
    pub fn log_prob(&self, value: &[f64]) -> Result<f64> {
        if value.len() != self.mean.len() {
            return Err(PilotError::Shape(format!(
                "value length {} vs head dim {}",
                value.len(),
                self.mean.len()
            )));
        }
        let mut lp = 0.0;
        for ((m, s), v) in self.mean.iter().zip(&self.log_std).zip(value) {
            let z = (v - m) * (-s).exp();
            lp += -0.5 * LN_2PI - s - 0.5 * z * z;
        }
        Ok(lp)
    }
}

/// Batched view of network head outputs: means, clamped log stds, and a
/// pass-through mask (1 where the clamp is inactive) for backprop.
pub struct HeadBatch {
    pub mean: Tensor,
    pub log_std: Tensor,
    pub clamp_mask: Tensor,
}

impl HeadBatch {
    /// Split a `[batch, 2*d]` network output into head components.
    pub fn split(net_out: &Tensor) -> Result<Self> {
        let width = net_out.cols();
        if width % 2 != 0 {
            return Err(PilotError::Shape(format!(
                "head output width {width} is odd"
            )));
        }
        let d = width / 2;
        let mean = net_out.col_slice(0, d);
        let raw = net_out.col_slice(d, d);
        let mut log_std = raw.clone();
        let mut mask = raw.clone();
        for (s, m) in log_std
            .data_mut()
            .iter_mut()
            .zip(mask.data_mut().iter_mut())
        {
            if *s <= LOG_STD_MIN {
                *s = LOG_STD_MIN;
                *m = 0.0;
            } else if *s >= LOG_STD_MAX {
                *s = LOG_STD_MAX;
                *m = 0.0;
            } else {
                *m = 1.0;
            }
        }
        Ok(Self {
            mean,
            log_std,
            clamp_mask: mask,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn rows(&self) -> usize {
        self.mean.rows()
    }

    /// Reparameterized samples, one row per batch entry.
    pub fn sample(&self, noise: &Tensor) -> Result<Tensor> {
        if noise.shape() != self.mean.shape() {
            return Err(PilotError::Shape(format!(
                "noise shape {:?} vs head shape {:?}",
                noise.shape(),
                self.mean.shape()
            )));
        }
        let mut out = self.mean.clone();
        for ((o, s), n) in out
            .data_mut()
            .iter_mut()
            .zip(self.log_std.data())
            .zip(noise.data())
        {
            *o += s.exp() * n;
        }
        Ok(out)
    }

    /// Mean (over rows) negative log likelihood of `targets`, plus its
    /// gradients with respect to the raw network output halves. The log-std
    /// gradient already includes the clamp mask.
    pub fn nll_and_grads(&self, targets: &Tensor) -> Result<(f64, Tensor, Tensor)> {
        if targets.shape() != self.mean.shape() {
            return Err(PilotError::Shape(format!(
                "target shape {:?} vs head shape {:?}",
                targets.shape(),
                self.mean.shape()
            )));
        }
        let rows = self.rows() as f64;
        let mut d_mean = Tensor::zeros(self.mean.shape());
        let mut d_log_std = Tensor::zeros(self.mean.shape());
        let mut nll = 0.0;
        let n = self.mean.len();
        for i in 0..n {
            let m = self.mean.data()[i];
            let s = self.log_std.data()[i];
            let y = targets.data()[i];
            let inv_var = (-2.0 * s).exp();
            let resid = y - m;
            nll += 0.5 * LN_2PI + s + 0.5 * resid * resid * inv_var;
            d_mean.data_mut()[i] = -resid * inv_var / rows;
            d_log_std.data_mut()[i] =
                (1.0 - resid * resid * inv_var) * self.clamp_mask.data()[i] / rows;
        }
        Ok((nll / rows, d_mean, d_log_std))
    }
}

/// Reassemble `[d_mean | d_log_std]` into a gradient for the raw `2*d`
/// network output.
pub fn join_head_grads(d_mean: &Tensor, d_log_std: &Tensor) -> Result<Tensor> {
    Tensor::concat_cols(&[d_mean, d_log_std])
}

/// Standard normal draw via Box-Muller, so no extra distribution crate is
/// needed and streams stay reproducible across platforms.
pub fn standard_normal(rng: &mut dyn rand::RngCore) -> f64 {
    use rand::Rng;
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_vec(rng: &mut dyn rand::RngCore, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}
