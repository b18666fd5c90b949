use super::{join, ParamMatrix, Parameters};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `(x - mean) / sqrt(var + eps) * gain + bias` over a single vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamMatrix,
    pub bias: ParamMatrix,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "layer norm needs at least two features");
        Self { gain: ParamMatrix::filled(1, dim, 1.0), bias: ParamMatrix::zeros(1, dim) }
    }

    pub fn dim(&self) -> usize {
        self.gain.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        assert_eq!(x.len(), self.dim(), "layer norm input has wrong dimension");
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let out =
            normalized.iter().zip(&self.gain.values).zip(&self.bias.values).map(|((xh, g), b)| xh * g + b).collect();
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &[f64]) -> Vec<f64> {
        let n = dy.len() as f64;
        let mut dxhat = vec![0.0; dy.len()];
        for k in 0..dy.len() {
            self.gain.grad[k] += dy[k] * cache.normalized[k];
            self.bias.grad[k] += dy[k];
            dxhat[k] = dy[k] * self.gain.values[k];
        }
        let sum: f64 = dxhat.iter().sum();
        let dot: f64 = dxhat.iter().zip(&cache.normalized).map(|(a, b)| a * b).sum();
        dxhat.iter().zip(&cache.normalized).map(|(d, xh)| cache.inv_std / n * (n * d - sum - xh * dot)).collect()
    }
}

impl Parameters for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_input_maps_to_zero() {
        let ln = LayerNorm::new(4);
        assert_eq!(ln.forward(&[2.5; 4]), vec![0.0; 4]);
    }

    #[test]
    fn output_is_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ln = LayerNorm::new(16);
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y = ln.forward(&x);
        let mean = y.iter().sum::<f64>() / 16.0;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut ln = LayerNorm::new(5);
            ln.gain.values.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
            ln.bias.values.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |l: &LayerNorm, x: &[f64]| l.forward(x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let mut analytic = ln.clone();
            analytic.zero_grad();
            let (_, cache) = analytic.forward_cached(&x);
            let dx = analytic.backward(&cache, &w);
            assert!(fd::max_param_error(&ln, &analytic, |l| loss(l, &x), 1e-5) <= 1e-5);
            assert!(fd::max_input_error(&x, &dx, |x| loss(&ln, x), 1e-5) <= 1e-5);
        }
    }
}
