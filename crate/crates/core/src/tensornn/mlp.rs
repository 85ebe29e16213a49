//! Fully connected networks with cached activations for manual backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{join_name, DenseMatrix, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Silu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Silu => z * sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer followed by an element-wise activation.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub grad_weight: DenseMatrix,
    pub grad_bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Config(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weight.rows()
            )));
        }
        let (rows, cols) = (weight.rows(), weight.cols());
        Ok(Self {
            weight,
            grad_weight: DenseMatrix::zeros(rows, cols),
            grad_bias: vec![0.0; bias.len()],
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        let weight = DenseMatrix::from_vec(fan_out, fan_in, data).expect("shape");
        Dense::new(weight, vec![0.0; fan_out], activation).expect("shape")
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Per-call record of layer inputs and pre-activations.
///
/// A network applied to many inputs (one per graph edge, say) keeps one trace per
/// application and hands each back to [`Mlp::backward_traced`].
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    cache: Option<MlpTrace>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    /// `widths` lists every layer boundary, input first. Hidden layers use
    /// `hidden`, the last layer uses `output`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid MLP widths {widths:?}")));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { hidden };
                Dense::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    /// Single affine layer `y = act(Wx + b)` with the given parameters.
    pub fn single(weight: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        Self::from_layers(vec![Dense::new(weight, bias, activation)?])
    }

    /// A network that ignores its input and always outputs `value`.
    pub fn constant(in_dim: usize, value: &[f64]) -> Self {
        let weight = DenseMatrix::zeros(value.len(), in_dim);
        Self::single(weight, value.to_vec(), Activation::Identity).expect("shape")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn is_smooth(&self) -> bool {
        self.layers.iter().all(|l| l.activation.is_smooth())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "MLP expects input of width {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Forward pass that caches activations for a following [`Mlp::backward`].
    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        let (out, trace) = self.forward_traced(input)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFault("non-finite MLP output".into()));
        }
        self.cache = Some(trace);
        Ok(out)
    }

    /// Backward pass against the cached forward. Accumulates parameter gradients and
    /// returns the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Vec<f64>> {
        let trace = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("backward called without a cached forward".into()))?;
        if upstream.len() != self.output_dim() {
            self.cache = Some(trace);
            return Err(Error::Config(format!(
                "upstream gradient has width {}, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        Ok(self.backward_traced(&trace, upstream))
    }

    /// Forward pass without touching internal state.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.weight.matvec_unchecked(&a);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi = layer.activation.apply(*zi + b);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_traced(&self, input: &[f64]) -> Result<(Vec<f64>, MlpTrace)> {
        self.check_input(input)?;
        let mut trace = MlpTrace {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
        };
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.weight.matvec_unchecked(&a);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
            trace.inputs.push(a);
            trace.preacts.push(z);
            a = next;
        }
        Ok((a, trace))
    }

    /// Backward through a recorded trace, accumulating into the gradient buffers.
    pub fn backward_traced(&mut self, trace: &MlpTrace, upstream: &[f64]) -> Vec<f64> {
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            for (d, &z) in delta.iter_mut().zip(&trace.preacts[l]) {
                *d *= layer.activation.derivative(z);
            }
            layer.grad_weight.add_outer(&delta, &trace.inputs[l]);
            for (g, d) in layer.grad_bias.iter_mut().zip(&delta) {
                *g += d;
            }
            delta = layer.weight.matvec_transposed_unchecked(&delta);
        }
        delta
    }

    /// Input gradient through a recorded trace, leaving parameter gradients alone.
    pub fn input_gradient(&self, trace: &MlpTrace, upstream: &[f64]) -> Vec<f64> {
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            for (d, &z) in delta.iter_mut().zip(&trace.preacts[l]) {
                *d *= layer.activation.derivative(z);
            }
            delta = layer.weight.matvec_transposed_unchecked(&delta);
        }
        delta
    }
}

impl Parameterized for Mlp {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64], &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            f(
                &join_name(prefix, &format!("{i}/w")),
                layer.weight.as_mut_slice(),
                layer.grad_weight.as_mut_slice(),
            );
            f(
                &join_name(prefix, &format!("{i}/b")),
                &mut layer.bias,
                &mut layer.grad_bias,
            );
        }
    }
}
