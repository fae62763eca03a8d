//! Small dense networks with hand-written backpropagation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => v.iter_mut().for_each(|x| *x = libm::tanh(*x)),
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        }
    }

    /// Multiplies `dy` by the derivative, given the activated output `y`.
    pub fn backprop(self, y: &[f64], dy: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => dy.iter_mut().zip(y).for_each(|(d, y)| *d *= 1.0 - y * y),
            Activation::Relu => dy.iter_mut().zip(y).for_each(|(d, y)| {
                if *y <= 0.0 {
                    *d = 0.0
                }
            }),
        }
    }
}

/// `y = W x + b`, with `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Weights uniform in `±√(3 / inputs)`, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = libm::sqrt(3.0 / inputs as f64);
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    /// Accumulates `∂/∂W += dy xᵀ`, `∂/∂b += dy`, and returns `Wᵀ dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for ((row, grow), (&d, gb)) in self
            .weights
            .chunks_exact(self.inputs)
            .zip(grad.weights.chunks_exact_mut(self.inputs))
            .zip(dy.iter().zip(grad.bias.iter_mut()))
        {
            if d == 0.0 {
                continue;
            }
            *gb += d;
            axpy(d, x, grow);
            axpy(d, row, &mut dx);
        }
        dx
    }

    /// `Wᵀ dy` alone.
    pub fn backward_input(&self, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (row, &d) in self.weights.chunks_exact(self.inputs).zip(dy) {
            if d != 0.0 {
                axpy(d, row, &mut dx);
            }
        }
        dx
    }

    pub fn zeroed(&self) -> Dense {
        Dense::zeros(self.inputs, self.outputs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Stack of dense layers, each followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activations: Vec<Activation>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Config(
                "an MLP needs one activation per layer and at least two sizes".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        Ok(Mlp {
            layers: sizes.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect(),
            activations: activations.to_vec(),
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.inputs()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            h = layer.forward(&h);
            act.apply(&mut h);
        }
        h
    }

    /// Activations of every layer, input first.
    pub fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(x.to_vec());
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut h = layer.forward(out.last().unwrap());
            act.apply(&mut h);
            out.push(h);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `∂/∂x`.
    pub fn backward(&self, trace: &[Vec<f64>], dy: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let mut d = dy.to_vec();
        for k in (0..self.layers.len()).rev() {
            self.activations[k].backprop(&trace[k + 1], &mut d);
            d = self.layers[k].backward(&trace[k], &d, &mut grad.layers[k]);
        }
        d
    }

    /// Vector-Jacobian product with respect to the input only.
    pub fn backward_input(&self, trace: &[Vec<f64>], dy: &[f64]) -> Vec<f64> {
        let mut d = dy.to_vec();
        for k in (0..self.layers.len()).rev() {
            self.activations[k].backprop(&trace[k + 1], &mut d);
            d = self.layers[k].backward_input(&d);
        }
        d
    }

    pub fn zeroed(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(Dense::zeroed).collect(),
            activations: self.activations.clone(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
