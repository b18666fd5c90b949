use rand::Rng;

use super::{join, softmax_in_place, ParamMatrix, Parameters};

/// Single-head scaled dot-product self-attention,
/// `softmax((X Wq)(X Wk)^T / sqrt(d_k)) (X Wv)`.
///
/// Projections are stored `d_model x d_k` (resp. `d_v`) so rows of `X`
/// multiply from the left. Sequences are flattened row-major, `d_model`
/// values per element.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub w_q: ParamMatrix,
    pub w_k: ParamMatrix,
    pub w_v: ParamMatrix,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    n: usize,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
}

impl AttentionCache {
    /// Row-stochastic `n x n` attention weights.
    pub fn weights(&self) -> &[f64] {
        &self.probs
    }
}

/// `x (n x a) * w (a x b)`.
fn matmul(x: &[f64], n: usize, w: &ParamMatrix) -> Vec<f64> {
    let (a, b) = (w.rows(), w.cols());
    let mut out = vec![0.0; n * b];
    for r in 0..n {
        let o = &mut out[r * b..(r + 1) * b];
        for (xi, wrow) in x[r * a..(r + 1) * a].iter().zip(w.values.chunks_exact(b)) {
            for (ov, wv) in o.iter_mut().zip(wrow) {
                *ov += xi * wv;
            }
        }
    }
    out
}

/// Accumulates `x^T dy` into `w.grad` and returns `dy w^T`.
fn matmul_backward(x: &[f64], n: usize, w: &mut ParamMatrix, dy: &[f64]) -> Vec<f64> {
    let (a, b) = (w.rows(), w.cols());
    let mut dx = vec![0.0; n * a];
    for r in 0..n {
        let dyr = &dy[r * b..(r + 1) * b];
        let xr = &x[r * a..(r + 1) * a];
        let dxr = &mut dx[r * a..(r + 1) * a];
        for i in 0..a {
            let wrow = &w.values[i * b..(i + 1) * b];
            let grow = &mut w.grad[i * b..(i + 1) * b];
            let mut acc = 0.0;
            for j in 0..b {
                grow[j] += xr[i] * dyr[j];
                acc += dyr[j] * wrow[j];
            }
            dxr[i] = acc;
        }
    }
    dx
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(d_model: usize, d_k: usize, d_v: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_model as f64).sqrt();
        Self {
            w_q: ParamMatrix::uniform(d_model, d_k, bound, rng),
            w_k: ParamMatrix::uniform(d_model, d_k, bound, rng),
            w_v: ParamMatrix::uniform(d_model, d_v, bound, rng),
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_k(&self) -> usize {
        self.w_q.cols()
    }

    pub fn d_v(&self) -> usize {
        self.w_v.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, AttentionCache) {
        let dm = self.d_model();
        assert!(!x.is_empty() && x.len().is_multiple_of(dm), "attention input must hold n >= 1 rows of d_model");
        let n = x.len() / dm;
        let (dk, dv) = (self.d_k(), self.d_v());
        let q = matmul(x, n, &self.w_q);
        let k = matmul(x, n, &self.w_k);
        let v = matmul(x, n, &self.w_v);
        let scale = 1.0 / (dk as f64).sqrt();
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            let qi = &q[i * dk..(i + 1) * dk];
            let row = &mut probs[i * n..(i + 1) * n];
            for (j, s) in row.iter_mut().enumerate() {
                *s = qi.iter().zip(&k[j * dk..(j + 1) * dk]).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
        }
        let mut out = vec![0.0; n * dv];
        for i in 0..n {
            let o = &mut out[i * dv..(i + 1) * dv];
            for j in 0..n {
                let p = probs[i * n + j];
                for (ov, vv) in o.iter_mut().zip(&v[j * dv..(j + 1) * dv]) {
                    *ov += p * vv;
                }
            }
        }
        (out, AttentionCache { n, x: x.to_vec(), q, k, v, probs })
    }

    pub fn backward(&mut self, cache: &AttentionCache, dy: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let (dk, dv) = (self.d_k(), self.d_v());
        let scale = 1.0 / (dk as f64).sqrt();
        // dV = P^T dY ; dP = dY V^T
        let mut d_v = vec![0.0; n * dv];
        let mut d_scores = vec![0.0; n * n];
        for i in 0..n {
            let dyi = &dy[i * dv..(i + 1) * dv];
            for j in 0..n {
                let p = cache.probs[i * n + j];
                let vj = &cache.v[j * dv..(j + 1) * dv];
                let mut dp = 0.0;
                for ((dvv, &vv), &g) in d_v[j * dv..(j + 1) * dv].iter_mut().zip(vj).zip(dyi) {
                    *dvv += p * g;
                    dp += g * vv;
                }
                d_scores[i * n + j] = dp;
            }
            // softmax backward, then the 1/sqrt(d_k) scale
            let row_p = &cache.probs[i * n..(i + 1) * n];
            let row_d = &mut d_scores[i * n..(i + 1) * n];
            let dot: f64 = row_p.iter().zip(row_d.iter()).map(|(p, d)| p * d).sum();
            for (d, p) in row_d.iter_mut().zip(row_p) {
                *d = p * (*d - dot) * scale;
            }
        }
        let mut d_q = vec![0.0; n * dk];
        let mut d_k = vec![0.0; n * dk];
        for i in 0..n {
            for j in 0..n {
                let s = d_scores[i * n + j];
                if s == 0.0 {
                    continue;
                }
                for c in 0..dk {
                    d_q[i * dk + c] += s * cache.k[j * dk + c];
                    d_k[j * dk + c] += s * cache.q[i * dk + c];
                }
            }
        }
        let mut dx = matmul_backward(&cache.x, n, &mut self.w_q, &d_q);
        for (a, b) in dx.iter_mut().zip(matmul_backward(&cache.x, n, &mut self.w_k, &d_k)) {
            *a += b;
        }
        for (a, b) in dx.iter_mut().zip(matmul_backward(&cache.x, n, &mut self.w_v, &d_v)) {
            *a += b;
        }
        dx
    }
}

impl Parameters for Attention {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        f(&join(prefix, "w_q"), &self.w_q);
        f(&join(prefix, "w_k"), &self.w_k);
        f(&join(prefix, "w_v"), &self.w_v);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        f(&join(prefix, "w_q"), &mut self.w_q);
        f(&join(prefix, "w_k"), &mut self.w_k);
        f(&join(prefix, "w_v"), &mut self.w_v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::fd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<f64> {
        (0..n * d).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn single_row_reduces_to_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let att = Attention::new(5, 3, 4, &mut rng);
        let x = random_x(&mut rng, 1, 5, 1.0);
        assert_eq!(att.forward(&x), matmul(&x, 1, &att.w_v));
    }

    #[test]
    fn rows_are_stochastic_and_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let att = Attention::new(4, 4, 4, &mut rng);
        let x = random_x(&mut rng, 6, 4, 1e3);
        let (out, cache) = att.forward_cached(&x);
        assert!(out.iter().all(|v| v.is_finite()));
        for row in cache.weights().chunks(6) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let att = Attention::new(3, 2, 3, &mut rng);
        let x = random_x(&mut rng, 4, 3, 1.0);
        let perm = [2, 0, 3, 1];
        let px: Vec<f64> = perm.iter().flat_map(|&r| x[r * 3..r * 3 + 3].to_vec()).collect();
        let y = att.forward(&x);
        let py = att.forward(&px);
        for (k, &r) in perm.iter().enumerate() {
            for c in 0..3 {
                assert!((py[k * 3 + c] - y[r * 3 + c]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let att = Attention::new(4, 3, 2, &mut rng);
            let x = random_x(&mut rng, 4, 4, 1.0);
            let w = random_x(&mut rng, 4, 2, 1.0);
            let loss = |a: &Attention, x: &[f64]| a.forward(x).iter().zip(&w).map(|(p, q)| p * q).sum::<f64>();
            let mut analytic = att.clone();
            analytic.zero_grad();
            let (_, cache) = analytic.forward_cached(&x);
            let dx = analytic.backward(&cache, &w);
            assert!(fd::max_param_error(&att, &analytic, |a| loss(a, &x), 1e-5) <= 1e-5);
            assert!(fd::max_input_error(&x, &dx, |x| loss(&att, x), 1e-5) <= 1e-5);
        }
    }
}
