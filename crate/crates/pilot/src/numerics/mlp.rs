//! Multilayer perceptrons with hand-written reverse-mode gradients.
//!
//! Layers are dense `y = W x + b` with the configured activation on every
//! hidden layer and a linear output. Weights are `[out, in]` row-major so the
//! forward pass is a sequence of contiguous dot products. `backward` returns
//! the exact gradient of `sum(output * output_grad)` with respect to every
//! parameter and the input; batch averaging is the caller's job (scale
//! `output_grad` by `1/batch`).

use rand::Rng;

use crate::error::{PilotError, Result};
use crate::numerics::tensor::{axpy, dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// `[out, in]` row-major.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub layers: Vec<LinearLayer>,
    pub activation: Activation,
}

/// Per-layer parameter gradients, same shapes as the layers themselves.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| Tensor::zeros(l.weight.shape()))
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| Tensor::zeros(l.bias.shape()))
                .collect(),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.weights.iter().map(Tensor::sq_norm).sum::<f64>()
            + self.biases.iter().map(Tensor::sq_norm).sum::<f64>()
    }

    /// `self += scale * other`, used to combine objective terms.
    pub fn accumulate(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            axpy(scale, b.data(), a.data_mut());
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            axpy(scale, b.data(), a.data_mut());
        }
    }
}

/// Activations of every layer (index 0 is the input) kept for backprop.
pub struct MlpCache {
    acts: Vec<Tensor>,
}

impl MlpCache {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache always holds the input")
    }
}

impl MlpParams {
    /// Build an MLP with the given layer widths (`dims[0]` is the input
    /// width, `dims.last()` the output width). Weights and biases are drawn
    /// uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least one layer");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
            layers.push(LinearLayer {
                weight: Tensor::matrix(fan_out, fan_in, weight).expect("sized above"),
                bias: Tensor::from_vec(bias),
            });
        }
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(LinearLayer::out_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(PilotError::LayerShape {
                layer: 0,
                expected: self.input_dim(),
                got: input.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a `[batch, in]` matrix (or a bare `[in]` vector,
    /// treated as one row). Rows are independent.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, MlpCache)> {
        self.check_input(input)?;
        let batch = input.rows();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let first = Tensor::matrix(batch, input.cols(), input.data().to_vec())?;
        acts.push(first);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().expect("pushed above");
            let out_dim = layer.out_dim();
            let mut out = Tensor::zeros(&[batch, out_dim]);
            for b in 0..batch {
                let x = prev.row(b);
                let o = out.row_mut(b);
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj = layer.bias.data()[j] + dot(layer.weight.row(j), x);
                }
                if li != last {
                    for oj in o.iter_mut() {
                        *oj = self.activation.apply(*oj);
                    }
                }
            }
            acts.push(out);
        }
        let output = acts.last().expect("pushed above").clone();
        Ok((output, MlpCache { acts }))
    }

    /// Reverse-mode gradients of `sum(output * output_grad)`. Recomputes the
    /// forward pass internally; use [`MlpParams::backward_cached`] when the
    /// activations are already at hand.
    pub fn backward(&self, input: &Tensor, output_grad: &Tensor) -> Result<(MlpGrads, Tensor)> {
        let (_, cache) = self.forward_cached(input)?;
        self.backward_cached(&cache, output_grad)
    }

    pub fn backward_cached(
        &self,
        cache: &MlpCache,
        output_grad: &Tensor,
    ) -> Result<(MlpGrads, Tensor)> {
        let out = cache.output();
        if output_grad.cols() != out.cols() || output_grad.rows() != out.rows() {
            return Err(PilotError::Shape(format!(
                "output_grad shape {:?} does not match output {:?}",
                output_grad.shape(),
                out.shape()
            )));
        }
        let batch = out.rows();
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = Tensor::matrix(batch, out.cols(), output_grad.data().to_vec())?;
        let last = self.layers.len() - 1;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            // Output layer is linear; hidden layers fold in the activation
            // derivative (computable from the cached activations).
            if li != last {
                let act = &cache.acts[li + 1];
                for b in 0..batch {
                    let y = act.row(b);
                    for (d, yj) in delta.row_mut(b).iter_mut().zip(y) {
                        *d *= self.activation.deriv_from_output(*yj);
                    }
                }
            }
            let prev = &cache.acts[li];
            let dw = &mut grads.weights[li];
            let db = grads.biases[li].data_mut();
            for b in 0..batch {
                let d = delta.row(b);
                let x = prev.row(b);
                for (j, &dj) in d.iter().enumerate() {
                    if dj != 0.0 {
                        axpy(dj, x, dw.row_mut(j));
                    }
                    db[j] += dj;
                }
            }
            // Propagate to the previous layer (delta = delta * W); after the
            // first layer this is the input gradient.
            let mut prev_delta = Tensor::zeros(&[batch, layer.in_dim()]);
            for b in 0..batch {
                let d = delta.row(b);
                let pd = prev_delta.row_mut(b);
                for (j, &dj) in d.iter().enumerate() {
                    if dj != 0.0 {
                        axpy(dj, layer.weight.row(j), pd);
                    }
                }
            }
            delta = prev_delta;
        }
        Ok((grads, delta))
    }

    /// Fold an affine input normalization `(x - offset) / scale` into the
    /// first layer, so the network consumes raw inputs but starts out as if
    /// it saw normalized ones. Keeps tanh layers out of saturation when raw
    /// coordinates are large.
    pub fn fold_input_affine(&mut self, offset: &[f64], scale: &[f64]) {
        let layer = &mut self.layers[0];
        let in_dim = layer.weight.shape()[1];
        assert_eq!(offset.len(), in_dim);
        assert_eq!(scale.len(), in_dim);
        let out_dim = layer.weight.shape()[0];
        for j in 0..out_dim {
            let row = layer.weight.row_mut(j);
            let mut shift = 0.0;
            for i in 0..in_dim {
                row[i] /= scale[i];
                shift += row[i] * offset[i];
            }
            layer.bias.data_mut()[j] -= shift;
        }
    }

    /// Fold an affine output map `y_j = scale_j * net_j + offset_j` into a
    /// contiguous block of output rows starting at `row_start` (the output
    /// layer is linear). Used so heads that predict raw coordinates start
    /// centered on the coordinate range.
    pub fn fold_output_affine(&mut self, row_start: usize, offset: &[f64], scale: &[f64]) {
        let layer = self.layers.last_mut().expect("at least one layer");
        assert!(row_start + offset.len() <= layer.weight.shape()[0]);
        for (k, (&off, &sc)) in offset.iter().zip(scale).enumerate() {
            let j = row_start + k;
            for w in layer.weight.row_mut(j) {
                *w *= sc;
            }
            let b = &mut layer.bias.data_mut()[j];
            *b = *b * sc + off;
        }
    }

    /// Flatten all parameters (layer order, weight then bias) into one vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend_from_slice(l.weight.data());
            flat.extend_from_slice(l.bias.data());
        }
        flat
    }

    /// Load parameters from a flat vector produced by [`MlpParams::to_flat`].
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(PilotError::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weight.data_mut();
            w.copy_from_slice(&flat[off..off + w.len()]);
            off += w.len();
            let b = l.bias.data_mut();
            b.copy_from_slice(&flat[off..off + b.len()]);
            off += b.len();
        }
        Ok(())
    }

    /// Flatten gradients in the same order as [`MlpParams::to_flat`].
    pub fn grads_to_flat(grads: &MlpGrads) -> Vec<f64> {
        let mut flat = Vec::new();
        for (w, b) in grads.weights.iter().zip(&grads.biases) {
            flat.extend_from_slice(w.data());
            flat.extend_from_slice(b.data());
        }
        flat
    }
}
