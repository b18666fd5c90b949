//! The shared Gaussian actor and the attention value-decomposition critic.
//!
//! The actor reads one agent's observation: an LSTM folds the relative
//! positions of the other agents (farthest first) into a hidden vector, which
//! is concatenated with the agent's own state and mapped by a tanh MLP to the
//! mean of a diagonal Gaussian. The standard deviation is a free, state
//! independent parameter. All agents share one actor.
//!
//! The critic sees every agent's state row. Rows are embedded, mixed by one
//! self-attention block with a residual connection and layer norm, and a
//! shared MLP maps each mixed row to that agent's local value. The global
//! value is their sum.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::clamp_norm;
use crate::env::{Observation, STATE_DIM};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::neural::checkpoint::Checkpoint;
use crate::neural::{
    join, Activation, Attention, AttentionCache, Dense, DenseCache, LayerNorm, LayerNormCache, LstmCache, LstmCell,
    Mlp, MlpCache, ParamMatrix, Parameters,
};

pub const ACTION_DIM: usize = 2;
pub const ACTOR_NAMESPACE: &str = "actor";
pub const CRITIC_NAMESPACE: &str = "critic";
pub const MIN_STD: f64 = 1e-4;
pub const MAX_STD: f64 = 10.0;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorConfig {
    pub lstm_hidden: usize,
    pub trunk: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self { lstm_hidden: 64, trunk: vec![64, 64], init_log_std: -0.5 }
    }
}

impl ActorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lstm_hidden == 0 || self.trunk.contains(&0) {
            return Err(Error::invalid("actor layer sizes must be positive"));
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::invalid("init_log_std must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    pub d_model: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub value_hidden: Vec<usize>,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { d_model: 64, d_k: 32, d_v: 64, value_hidden: vec![64, 64] }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 || self.d_k == 0 || self.value_hidden.contains(&0) {
            return Err(Error::invalid("critic layer sizes must be positive (d_model >= 2)"));
        }
        if self.d_v != self.d_model {
            return Err(Error::invalid(format!(
                "the residual connection needs d_v == d_model, got d_v = {} and d_model = {}",
                self.d_v, self.d_model
            )));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over 2-D accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Vec2,
    pub std: [f64; ACTION_DIM],
}

impl GaussianPolicy {
    pub fn log_prob(&self, a: Vec2) -> f64 {
        self.log_prob_with_grads(a).0
    }

    /// Log density at `a` with its derivatives with respect to the mean and
    /// to the log standard deviations.
    pub fn log_prob_with_grads(&self, a: Vec2) -> (f64, [f64; ACTION_DIM], [f64; ACTION_DIM]) {
        let diff = [a.x - self.mean.x, a.y - self.mean.y];
        let mut lp = 0.0;
        let mut d_mean = [0.0; ACTION_DIM];
        let mut d_log_std = [0.0; ACTION_DIM];
        for k in 0..ACTION_DIM {
            let z = diff[k] / self.std[k];
            lp += -0.5 * z * z - self.std[k].ln() - 0.5 * LN_2PI;
            d_mean[k] = z / self.std[k];
            d_log_std[k] = z * z - 1.0;
        }
        (lp, d_mean, d_log_std)
    }

    pub fn entropy(&self) -> f64 {
        self.std.iter().map(|s| 0.5 + 0.5 * LN_2PI + s.ln()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    /// Raw Gaussian draw; the log-probability refers to this value.
    pub raw: Vec2,
    /// `raw` clamped to the acceleration bound, as fed to the environment.
    pub applied: Vec2,
    pub log_prob: f64,
}

pub fn sample_action<R: Rng + ?Sized>(policy: &GaussianPolicy, rng: &mut R, a_max: f64) -> SampledAction {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    let raw = Vec2::new(policy.mean.x + policy.std[0] * zx, policy.mean.y + policy.std[1] * zy);
    SampledAction { raw, applied: clamp_norm(raw, a_max), log_prob: policy.log_prob(raw) }
}

pub fn deterministic_action(policy: &GaussianPolicy, a_max: f64) -> Vec2 {
    clamp_norm(policy.mean, a_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    config: ActorConfig,
    pub lstm: LstmCell,
    /// Hidden tanh layers followed by the identity mean head.
    pub trunk: Mlp,
    pub log_std: ParamMatrix,
}

#[derive(Debug, Clone)]
pub struct ActorCache {
    lstm: LstmCache,
    trunk: MlpCache,
    log_std_clamped: [bool; ACTION_DIM],
}

fn flatten_others(obs: &Observation) -> Vec<f64> {
    obs.others.iter().flat_map(|v| [v.x, v.y]).collect()
}

impl ActorNet {
    pub fn new<R: Rng + ?Sized>(config: ActorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let lstm = LstmCell::new(2, config.lstm_hidden, rng);
        let mut sizes = vec![config.lstm_hidden + STATE_DIM];
        sizes.extend(&config.trunk);
        sizes.push(ACTION_DIM);
        let trunk = Mlp::new(&sizes, rng);
        let log_std = ParamMatrix::filled(1, ACTION_DIM, config.init_log_std);
        Ok(Self { config, lstm, trunk, log_std })
    }

    pub fn config(&self) -> &ActorConfig {
        &self.config
    }

    fn std(&self) -> ([f64; ACTION_DIM], [bool; ACTION_DIM]) {
        let (lo, hi) = (MIN_STD.ln(), MAX_STD.ln());
        let mut std = [0.0; ACTION_DIM];
        let mut clamped = [false; ACTION_DIM];
        for k in 0..ACTION_DIM {
            let l = self.log_std.values[k];
            clamped[k] = !(lo..=hi).contains(&l);
            std[k] = l.clamp(lo, hi).exp();
        }
        (std, clamped)
    }

    pub fn forward(&self, obs: &Observation) -> GaussianPolicy {
        let mut input = self.lstm.forward_sequence(&flatten_others(obs));
        input.extend_from_slice(&obs.own);
        let mean = self.trunk.forward(&input);
        GaussianPolicy { mean: Vec2::new(mean[0], mean[1]), std: self.std().0 }
    }

    pub fn forward_cached(&self, obs: &Observation) -> (GaussianPolicy, ActorCache) {
        let (mut input, lstm) = self.lstm.forward_cached(&flatten_others(obs));
        input.extend_from_slice(&obs.own);
        let (mean, trunk) = self.trunk.forward_cached(&input);
        let (std, log_std_clamped) = self.std();
        (GaussianPolicy { mean: Vec2::new(mean[0], mean[1]), std }, ActorCache { lstm, trunk, log_std_clamped })
    }

    /// Accumulates parameter gradients given the loss derivatives with
    /// respect to the policy mean and the (unclamped) log standard deviation.
    pub fn backward(&mut self, cache: &ActorCache, d_mean: [f64; ACTION_DIM], d_log_std: [f64; ACTION_DIM]) {
        let d_input = self.trunk.backward(&cache.trunk, &d_mean);
        let h = self.lstm.hidden_size();
        self.lstm.backward(&cache.lstm, &d_input[..h]);
        for k in 0..ACTION_DIM {
            if !cache.log_std_clamped[k] {
                self.log_std.grad[k] += d_log_std[k];
            }
        }
    }
}

impl ActorNet {
    /// Stores the parameters under the actor namespace together with the
    /// layer configuration needed to rebuild the network.
    pub fn save_into(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.set_metadata("actor_config", &self.config)?;
        ckpt.insert_params(ACTOR_NAMESPACE, self);
        Ok(())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ActorConfig = ckpt.metadata("actor_config")?;
        let mut actor = Self::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        ckpt.load_params(ACTOR_NAMESPACE, &mut actor)?;
        Ok(actor)
    }
}

impl Parameters for ActorNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.trunk.visit(&join(prefix, "trunk"), f);
        f(&join(prefix, "log_std"), &self.log_std);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.trunk.visit_mut(&join(prefix, "trunk"), f);
        f(&join(prefix, "log_std"), &mut self.log_std);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    config: CriticConfig,
    pub embed: Dense,
    pub attention: Attention,
    pub norm: LayerNorm,
    pub value: Mlp,
}

#[derive(Debug, Clone)]
pub struct CriticCache {
    embed: Vec<DenseCache>,
    attention: AttentionCache,
    norm: Vec<LayerNormCache>,
    value: Vec<MlpCache>,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(config: CriticConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let embed = Dense::new(STATE_DIM, config.d_model, Activation::Identity, rng);
        let attention = Attention::new(config.d_model, config.d_k, config.d_v, rng);
        let norm = LayerNorm::new(config.d_model);
        let mut sizes = vec![config.d_model];
        sizes.extend(&config.value_hidden);
        sizes.push(1);
        let value = Mlp::new(&sizes, rng);
        Ok(Self { config, embed, attention, norm, value })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    /// Local value of every agent, in row order.
    pub fn values(&self, states: &[[f64; STATE_DIM]]) -> Result<Vec<f64>> {
        Ok(self.values_cached(states)?.0)
    }

    pub fn values_cached(&self, states: &[[f64; STATE_DIM]]) -> Result<(Vec<f64>, CriticCache)> {
        if states.is_empty() {
            return Err(Error::invalid("the critic needs at least one agent"));
        }
        let dm = self.config.d_model;
        let mut embedded = Vec::with_capacity(states.len() * dm);
        let mut embed = Vec::with_capacity(states.len());
        for s in states {
            let (e, c) = self.embed.forward_cached(s);
            embedded.extend(e);
            embed.push(c);
        }
        let (mixed, attention) = self.attention.forward_cached(&embedded);
        let mut norm = Vec::with_capacity(states.len());
        let mut value = Vec::with_capacity(states.len());
        let mut out = Vec::with_capacity(states.len());
        for (e, a) in embedded.chunks_exact(dm).zip(mixed.chunks_exact(dm)) {
            let residual: Vec<f64> = e.iter().zip(a).map(|(x, y)| x + y).collect();
            let (z, nc) = self.norm.forward_cached(&residual);
            let (v, vc) = self.value.forward_cached(&z);
            out.push(v[0]);
            norm.push(nc);
            value.push(vc);
        }
        Ok((out, CriticCache { embed, attention, norm, value }))
    }

    pub fn backward(&mut self, cache: &CriticCache, d_values: &[f64]) {
        let dm = self.config.d_model;
        let n = cache.embed.len();
        let mut d_embedded = vec![0.0; n * dm];
        let mut d_mixed = vec![0.0; n * dm];
        for i in 0..n {
            let dz = self.value.backward(&cache.value[i], &[d_values[i]]);
            let dr = self.norm.backward(&cache.norm[i], &dz);
            d_embedded[i * dm..(i + 1) * dm].copy_from_slice(&dr);
            d_mixed[i * dm..(i + 1) * dm].copy_from_slice(&dr);
        }
        let d_att = self.attention.backward(&cache.attention, &d_mixed);
        for (d, a) in d_embedded.iter_mut().zip(d_att) {
            *d += a;
        }
        for (i, c) in cache.embed.iter().enumerate() {
            self.embed.backward(c, &d_embedded[i * dm..(i + 1) * dm]);
        }
    }
}

impl CriticNet {
    pub fn save_into(&self, ckpt: &mut Checkpoint) -> Result<()> {
        ckpt.set_metadata("critic_config", &self.config)?;
        ckpt.insert_params(CRITIC_NAMESPACE, self);
        Ok(())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: CriticConfig = ckpt.metadata("critic_config")?;
        let mut critic = Self::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        ckpt.load_params(CRITIC_NAMESPACE, &mut critic)?;
        Ok(critic)
    }
}

impl Parameters for CriticNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &ParamMatrix)) {
        self.embed.visit(&join(prefix, "embed"), f);
        self.attention.visit(&join(prefix, "attention"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.value.visit(&join(prefix, "value"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamMatrix)) {
        self.embed.visit_mut(&join(prefix, "embed"), f);
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
    }
}

/// Global value as the sum of local values.
pub fn value_sum(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("value_sum needs at least one value"));
    }
    Ok(values.iter().sum())
}
