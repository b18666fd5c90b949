use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{join, ParamMatrix, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer `activation(W x + b)` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamMatrix,
    pub bias: ParamMatrix,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: ParamMatrix::uniform(outputs, inputs, bound, rng),
            bias: ParamMatrix::zeros(1, outputs),
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { weight: ParamMatrix::zeros(outputs, inputs), bias: ParamMatrix::zeros(1, outputs), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs(), "dense input has wrong dimension");
        let cols = self.inputs();
        self.weight
            .values
            .chunks_exact(cols)
            .zip(&self.bias.values)
            .map(|(row, b)| self.activation.apply(b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()))
            .collect()
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, DenseCache) {
        let output = self.forward(x);
        (output.clone(), DenseCache { input: x.to_vec(), output })
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, cache: &DenseCache, dy: &[f64]) -> Vec<f64> {
        let cols = self.inputs();
        let mut dx = vec![0.0; cols];
        let rows = self.weight.values.chunks_exact(cols).zip(self.weight.grad.chunks_exact_mut(cols));
        for (o, (w_row, g_row)) in rows.enumerate() {
            let dz = dy[o] * self.activation.derivative_from_output(cache.output[o]);
            if dz == 0.0 {
                continue;
            }
            self.bias.grad[o] += dz;
            for ((g, &xi), (d, &w)) in g_row.iter_mut().zip(&cache.input).zip(dx.iter_mut().zip(w_row)) {
                *g += dz * xi;
                *d += dz * w;
            }
        }
        dx
    }
}

impl Parameters for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Stack of dense layers: tanh on hidden layers, identity on the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct MlpCache(Vec<DenseCache>);

impl Mlp {
    /// `sizes = [input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { Activation::Identity } else { Activation::Tanh };
                Dense::new(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h);
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (out, cache) = layer.forward_cached(&h);
            caches.push(cache);
            h = out;
        }
        (h, MlpCache(caches))
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &[f64]) -> Vec<f64> {
        let mut d = dy.to_vec();
        for (layer, c) in self.layers.iter_mut().zip(&cache.0).rev() {
            d = layer.backward(c, &d);
        }
        d
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        for (k, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &k.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &k.to_string()), f);
        }
    }
}
