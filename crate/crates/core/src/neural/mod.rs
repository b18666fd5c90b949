//! Small differentiable blocks with hand-written reverse passes.
//!
//! Every block stores its parameters in [`ParamMatrix`] values that carry a
//! gradient accumulator of the same shape. A forward call with a cache
//! records what the reverse pass needs; `backward` consumes the cache, adds
//! into the parameter gradients and returns the gradient with respect to the
//! block input. Forward passes only read parameters, so any number of them
//! may share a network; backward passes and updates need `&mut`.

mod attention;
pub mod checkpoint;
mod dense;
mod layer_norm;
mod lstm;
pub mod optim;

pub use attention::{Attention, AttentionCache};
pub use dense::{Activation, Dense, DenseCache, Mlp, MlpCache};
pub use layer_norm::{LayerNorm, LayerNormCache, LAYER_NORM_EPS};
pub use lstm::{LstmCache, LstmCell};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major matrix of parameters with a same-shape gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMatrix {
    rows: usize,
    cols: usize,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl ParamMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols], grad: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, values: vec![value; rows * cols], grad: vec![0.0; rows * cols] }
    }

    /// Entries drawn uniformly from `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let values = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, cols, values, grad: vec![0.0; rows * cols] }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "values do not match shape {rows}x{cols}");
        Self { rows, cols, values, grad: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn zero_grad(&mut self) {
        if self.grad.len() != self.values.len() {
            self.grad = vec![0.0; self.values.len()];
        } else {
            self.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Named traversal over every parameter matrix of a model, in a fixed order.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.len());
        n
    }

    fn grad_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, p| s += p.grad.iter().map(|g| g * g).sum::<f64>());
        s.sqrt()
    }

    fn scale_grads(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, p| p.grad.iter_mut().for_each(|g| *g *= factor));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit("", &mut |_, p| ok &= p.is_finite());
        ok
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite-difference oracle for unit tests.
    use super::{ParamMatrix, Parameters};

    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    fn nudge<M: Parameters>(model: &mut M, index: usize, delta: f64) {
        let mut seen = 0;
        model.visit_mut("", &mut |_, p: &mut ParamMatrix| {
            if index >= seen && index < seen + p.len() {
                p.values[index - seen] += delta;
            }
            seen += p.len();
        });
    }

    /// Largest relative error between the accumulated gradients of `analytic`
    /// and central differences of `loss` around `model`.
    pub fn max_param_error<M: Parameters + Clone>(model: &M, analytic: &M, loss: impl Fn(&M) -> f64, h: f64) -> f64 {
        let mut grads = Vec::new();
        analytic.visit("", &mut |_, p| grads.extend_from_slice(&p.grad));
        let mut worst = 0.0f64;
        for (k, &g) in grads.iter().enumerate() {
            let mut plus = model.clone();
            nudge(&mut plus, k, h);
            let mut minus = model.clone();
            nudge(&mut minus, k, -h);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(g, numeric));
        }
        worst
    }

    pub fn max_input_error(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64, h: f64) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..x.len() {
            let mut plus = x.to_vec();
            plus[k] += h;
            let mut minus = x.to_vec();
            minus[k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k], numeric));
        }
        worst
    }
}
