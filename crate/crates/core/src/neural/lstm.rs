use rand::Rng;

use super::{join, sigmoid, ParamMatrix, Parameters};

/// LSTM cell with the usual input/forget/output gates and tanh candidate.
///
/// Gate rows are stacked `[input, forget, candidate, output]` in `w_ih`
/// (`4H x I`), `w_hh` (`4H x H`) and `bias` (`1 x 4H`). A sequence always
/// starts from zero hidden and cell states.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: ParamMatrix,
    pub w_hh: ParamMatrix,
    pub bias: ParamMatrix,
    input_size: usize,
    hidden_size: usize,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// activated gates, `[i, f, g, o]` each of length H
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        let mut bias = ParamMatrix::zeros(1, 4 * hidden_size);
        bias.values[hidden_size..2 * hidden_size].iter_mut().for_each(|b| *b = 1.0);
        Self {
            w_ih: ParamMatrix::uniform(4 * hidden_size, input_size, bound, rng),
            w_hh: ParamMatrix::uniform(4 * hidden_size, hidden_size, bound, rng),
            bias,
            input_size,
            hidden_size,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            w_ih: ParamMatrix::zeros(4 * hidden_size, input_size),
            w_hh: ParamMatrix::zeros(4 * hidden_size, hidden_size),
            bias: ParamMatrix::zeros(1, 4 * hidden_size),
            input_size,
            hidden_size,
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    fn check_len(&self, inputs: &[f64]) {
        assert!(
            inputs.len().is_multiple_of(self.input_size),
            "sequence length {} is not a multiple of the input size {}",
            inputs.len(),
            self.input_size
        );
    }

    /// Pre-activation gates for one step, written into `z`.
    fn gate_inputs(&self, x: &[f64], h: &[f64], z: &mut [f64]) {
        let hs = self.hidden_size;
        let w_ih = self.w_ih.values.chunks_exact(self.input_size);
        let w_hh = self.w_hh.values.chunks_exact(hs);
        for (((zr, wi), wh), b) in z.iter_mut().zip(w_ih).zip(w_hh).zip(&self.bias.values) {
            let a: f64 = wi.iter().zip(x).map(|(w, v)| w * v).sum();
            let r: f64 = wh.iter().zip(h).map(|(w, v)| w * v).sum();
            *zr = b + a + r;
        }
    }

    fn activate(&self, z: &mut [f64]) {
        let hs = self.hidden_size;
        for (k, v) in z.iter_mut().enumerate() {
            *v = if (2 * hs..3 * hs).contains(&k) { v.tanh() } else { sigmoid(*v) };
        }
    }

    /// Final hidden state after feeding `inputs` (flattened, `input_size` per step).
    pub fn forward_sequence(&self, inputs: &[f64]) -> Vec<f64> {
        self.check_len(inputs);
        let hs = self.hidden_size;
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        let mut z = vec![0.0; 4 * hs];
        for x in inputs.chunks_exact(self.input_size) {
            self.gate_inputs(x, &h, &mut z);
            self.activate(&mut z);
            for k in 0..hs {
                c[k] = z[hs + k] * c[k] + z[k] * z[2 * hs + k];
                h[k] = z[3 * hs + k] * c[k].tanh();
            }
        }
        h
    }

    pub fn forward_cached(&self, inputs: &[f64]) -> (Vec<f64>, LstmCache) {
        self.check_len(inputs);
        let hs = self.hidden_size;
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        let mut steps = Vec::with_capacity(inputs.len() / self.input_size);
        for x in inputs.chunks_exact(self.input_size) {
            let mut gates = vec![0.0; 4 * hs];
            self.gate_inputs(x, &h, &mut gates);
            self.activate(&mut gates);
            let mut c_new = vec![0.0; hs];
            let mut h_new = vec![0.0; hs];
            let mut tanh_c = vec![0.0; hs];
            for k in 0..hs {
                c_new[k] = gates[hs + k] * c[k] + gates[k] * gates[2 * hs + k];
                tanh_c[k] = c_new[k].tanh();
                h_new[k] = gates[3 * hs + k] * tanh_c[k];
            }
            steps.push(StepCache { x: x.to_vec(), h_prev: h, c_prev: c, gates, tanh_c });
            h = h_new;
            c = c_new;
        }
        (h, LstmCache { steps })
    }

    /// Back-propagation through time from `dh` on the final hidden state.
    /// Returns the gradient with respect to the flattened inputs.
    pub fn backward(&mut self, cache: &LstmCache, dh_final: &[f64]) -> Vec<f64> {
        let hs = self.hidden_size;
        let is = self.input_size;
        let mut dx_all = vec![0.0; cache.steps.len() * is];
        let mut dh = dh_final.to_vec();
        let mut dc = vec![0.0; hs];
        let mut dz = vec![0.0; 4 * hs];
        for (t, step) in cache.steps.iter().enumerate().rev() {
            let g = &step.gates;
            for k in 0..hs {
                let (i, f, cand, o) = (g[k], g[hs + k], g[2 * hs + k], g[3 * hs + k]);
                let tc = step.tanh_c[k];
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                let d_i = dc[k] * cand;
                let d_g = dc[k] * i;
                let d_f = dc[k] * step.c_prev[k];
                dz[k] = d_i * i * (1.0 - i);
                dz[hs + k] = d_f * f * (1.0 - f);
                dz[2 * hs + k] = d_g * (1.0 - cand * cand);
                dz[3 * hs + k] = d_o * o * (1.0 - o);
                dc[k] *= f;
            }
            let dx = &mut dx_all[t * is..(t + 1) * is];
            let mut dh_prev = vec![0.0; hs];
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                self.bias.grad[r] += d;
                let wi = &self.w_ih.values[r * is..(r + 1) * is];
                let gi = &mut self.w_ih.grad[r * is..(r + 1) * is];
                for ((gw, &xv), (dxv, &w)) in gi.iter_mut().zip(&step.x).zip(dx.iter_mut().zip(wi)) {
                    *gw += d * xv;
                    *dxv += d * w;
                }
                let wh = &self.w_hh.values[r * hs..(r + 1) * hs];
                let gh = &mut self.w_hh.grad[r * hs..(r + 1) * hs];
                for ((gw, &hv), (dhv, &w)) in gh.iter_mut().zip(&step.h_prev).zip(dh_prev.iter_mut().zip(wh)) {
                    *gw += d * hv;
                    *dhv += d * w;
                }
            }
            dh = dh_prev;
        }
        dx_all
    }
}

impl Parameters for LstmCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        f(&join(prefix, "w_ih"), &self.w_ih);
        f(&join(prefix, "w_hh"), &self.w_hh);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        f(&join(prefix, "w_ih"), &mut self.w_ih);
        f(&join(prefix, "w_hh"), &mut self.w_hh);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::fd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_outputs_zero() {
        let cell = LstmCell::zeros(2, 4);
        assert_eq!(cell.forward_sequence(&[0.3, -1.0, 2.0, 0.5, 9.0, 9.0]), vec![0.0; 4]);
    }

    #[test]
    fn empty_sequence_is_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(2, 5, &mut rng);
        assert_eq!(cell.forward_sequence(&[]), vec![0.0; 5]);
        let (h, cache) = cell.forward_cached(&[]);
        assert_eq!(h, vec![0.0; 5]);
        let mut c = cell.clone();
        assert!(c.backward(&cache, &[1.0; 5]).is_empty());
    }

    #[test]
    fn cached_and_plain_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = LstmCell::new(2, 6, &mut rng);
        let seq: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_eq!(cell.forward_sequence(&seq), cell.forward_cached(&seq).0);
    }

    #[test]
    fn order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell = LstmCell::new(2, 4, &mut rng);
        let seq = [0.5, -0.2, -0.9, 0.4, 0.1, 0.8];
        let rev = [0.1, 0.8, -0.9, 0.4, 0.5, -0.2];
        let a = cell.forward_sequence(&seq);
        let b = cell.forward_sequence(&rev);
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let mut cell = LstmCell::new(2, 4, &mut rng);
            cell.w_ih.values.iter_mut().for_each(|w| *w *= 2.0);
            let seq: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |c: &LstmCell, s: &[f64]| c.forward_sequence(s).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let mut analytic = cell.clone();
            analytic.zero_grad();
            let (_, cache) = analytic.forward_cached(&seq);
            let dx = analytic.backward(&cache, &w);
            assert!(fd::max_param_error(&cell, &analytic, |c| loss(c, &seq), 1e-5) <= 1e-5);
            assert!(fd::max_input_error(&seq, &dx, |s| loss(&cell, s), 1e-5) <= 1e-5);
        }
    }
}
