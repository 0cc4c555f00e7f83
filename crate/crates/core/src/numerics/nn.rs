//! Multi-layer perceptrons: the only network family in this pipeline.
//!
//! Parameters live in plain [`Tensor`]s owned by the model. A training step
//! binds them onto a fresh [`Tape`] as trainable leaves, builds the forward
//! graph, and pulls gradients out by parameter name. Inference uses
//! [`Mlp::forward`], which shares the same kernels and is therefore
//! bit-identical to the taped path.

use super::kernels;
use super::rng::StreamRng;
use super::tape::{Tape, VarId};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Tanh,
    Sigmoid,
    /// No nonlinearity (output layers).
    Identity,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => kernels::relu(x),
            Activation::Silu => kernels::silu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => kernels::sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn apply_taped(&self, tape: &mut Tape, x: VarId) -> VarId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Silu => tape.silu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor, // [in, out]
    pub bias: Tensor,   // [out]
}

impl Linear {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut StreamRng) -> Self {
        // Kaiming-uniform bound; adequate for every activation used here.
        let bound = (6.0 / fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| rng.range_f64(-bound, bound)).collect();
        Linear {
            weight: Tensor { shape: vec![fan_in, fan_out], data: weights, requires_grad: true },
            bias: Tensor { shape: vec![fan_out], data: vec![0.0; fan_out], requires_grad: true },
        }
    }
}

/// Fully connected network with one activation between layers and an
/// optional final activation.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Tape handles for one bound copy of an [`Mlp`]'s parameters.
pub struct BoundMlp {
    ids: Vec<(VarId, VarId)>, // (weight, bias) per layer
    hidden_activation: Activation,
    output_activation: Activation,
}

impl Mlp {
    /// `dims` is the full width sequence, e.g. `[in, h1, h2, out]`. Layer
    /// initialization draws from per-layer substreams of `rng`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &StreamRng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut layer_rng = rng.substream(&format!("layer{}", i));
                Linear::new(w[0], w[1], &mut layer_rng)
            })
            .collect();
        Mlp { layers, hidden_activation: hidden, output_activation: output }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.shape[0]
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.shape[1]
    }

    /// Tape-free forward pass over `[N, in]` input rows.
    pub fn forward(&self, input: &Tensor) -> Tensor {
        self.forward_upto(input, self.layers.len())
    }

    /// Tape-free forward pass through the first `depth` layers. The
    /// activation applied after layer `i` is the hidden activation except at
    /// the final layer of the full network.
    pub fn forward_upto(&self, input: &Tensor, depth: usize) -> Tensor {
        let rows = input.rows();
        let mut x = input.data.clone();
        let mut width = input.width();
        for (i, layer) in self.layers.iter().take(depth).enumerate() {
            let (k, n) = (layer.weight.shape[0], layer.weight.shape[1]);
            assert_eq!(width, k, "input width {} does not match layer {} fan-in {}", width, i, k);
            let mut y = kernels::matmul(&x, &layer.weight.data, rows, k, n);
            let act = if i + 1 == self.layers.len() { self.output_activation } else { self.hidden_activation };
            for row in y.chunks_exact_mut(n) {
                for (v, b) in row.iter_mut().zip(&layer.bias.data) {
                    *v = act.apply(*v + b);
                }
            }
            x = y;
            width = n;
        }
        Tensor { shape: vec![rows, width], data: x, requires_grad: false }
    }

    /// Register all parameters on `tape` as trainable leaves.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let ids = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        BoundMlp {
            ids,
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }

    /// Named views of all parameters, prefixed `prefix.`.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &l.weight));
            out.push((format!("{prefix}.{i}.bias"), &l.bias));
        }
        out
    }

    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
            out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
        }
        out
    }
}

impl BoundMlp {
    /// Build the forward graph on `tape` starting from `input`.
    pub fn forward(&self, tape: &mut Tape, input: VarId) -> Result<VarId> {
        let mut x = input;
        let last = self.ids.len() - 1;
        for (i, &(w, b)) in self.ids.iter().enumerate() {
            x = tape.affine(x, w, b)?;
            let act = if i == last { self.output_activation } else { self.hidden_activation };
            x = act.apply_taped(tape, x);
        }
        Ok(x)
    }

    /// Gradient lookup pairs `(name, id)` matching [`Mlp::named_params`].
    pub fn named_ids(&self, prefix: &str) -> Vec<(String, VarId)> {
        let mut out = Vec::with_capacity(self.ids.len() * 2);
        for (i, &(w, b)) in self.ids.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), w));
            out.push((format!("{prefix}.{i}.bias"), b));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taped_and_plain_forward_agree_bitwise() {
        let rng = StreamRng::new(11);
        let mlp = Mlp::new(&[3, 5, 2], Activation::Silu, Activation::Identity, &rng);
        let input = Tensor::new(vec![4, 3], (0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();

        let plain = mlp.forward(&input);

        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape);
        let x = tape.leaf(input);
        let y = bound.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data, plain.data);
        assert_eq!(tape.value(y).shape, plain.shape);
    }

    #[test]
    fn same_seed_same_init() {
        let a = Mlp::new(&[4, 3], Activation::Relu, Activation::Identity, &StreamRng::new(5));
        let b = Mlp::new(&[4, 3], Activation::Relu, Activation::Identity, &StreamRng::new(5));
        assert_eq!(a.layers[0].weight.data, b.layers[0].weight.data);
    }
}
