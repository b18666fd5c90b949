use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{accumulate_bc_gradients, accumulate_critic_gradients, critic_loss, ValueSample};
use super::returns::monte_carlo_returns;
use super::{derive_seed, Trajectory};
use crate::controller::{run_episode, ClassicalController};
use crate::env::{observe, CoverageEnv, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::nets::{ActorNet, CriticNet};
use crate::neural::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::neural::Parameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPair {
    pub obs: Observation,
    pub action: Vec2,
}

/// Observation / expert-action pairs recorded from the classical controller.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpertDataset {
    pub pairs: Vec<ExpertPair>,
}

impl ExpertDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Seed of the initial state of expert episode `episode` in environment `env`.
pub fn expert_episode_seed(seed: u64, env: usize, episode: usize) -> u64 {
    derive_seed(seed, &[0xE, env as u64, episode as u64])
}

/// Rolls out the classical controller `episodes` times in each environment
/// and keeps every agent's `(observation, action)` at every `stride`-th step.
pub fn generate_expert_dataset(envs: &[EnvConfig], episodes: usize, stride: usize, seed: u64) -> Result<ExpertDataset> {
    Ok(ExpertDataset { pairs: expert_rollouts(envs, episodes, stride, seed, |_, _| Ok(()))? })
}

/// Expert pairs plus the same episodes as reward trajectories, for critic
/// pre-training.
pub fn generate_expert_data(
    envs: &[EnvConfig],
    episodes: usize,
    stride: usize,
    seed: u64,
) -> Result<(ExpertDataset, Vec<Trajectory>)> {
    let mut trajectories = Vec::new();
    let pairs = expert_rollouts(envs, episodes, stride, seed, |t, _| {
        trajectories.push(t);
        Ok(())
    })?;
    Ok((ExpertDataset { pairs }, trajectories))
}

fn expert_rollouts(
    envs: &[EnvConfig],
    episodes: usize,
    stride: usize,
    seed: u64,
    mut sink: impl FnMut(Trajectory, usize) -> Result<()>,
) -> Result<Vec<ExpertPair>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let mut pairs = Vec::new();
    for (k, cfg) in envs.iter().enumerate() {
        let mut env = CoverageEnv::new(cfg.clone()).map_err(|e| Error::Env { env_id: k, source: Box::new(e) })?;
        for e in 0..episodes {
            let ep_seed = expert_episode_seed(seed, k, e);
            env.reset(ep_seed).map_err(|err| Error::Env { env_id: k, source: Box::new(err) })?;
            let episode = run_episode(&mut env, &mut ClassicalController)
                .map_err(|err| Error::Env { env_id: k, source: Box::new(err) })?;
            for (t, actions) in episode.actions.iter().enumerate().step_by(stride) {
                for (i, &action) in actions.iter().enumerate() {
                    pairs.push(ExpertPair { obs: observe(i, &episode.states[t], &cfg.poly), action });
                }
            }
            sink(Trajectory::from_episode(k, ep_seed, &episode, &cfg.poly), k)?;
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 256, lr: 1e-3, optimizer: OptimizerKind::Sgd, max_grad_norm: None, seed: 0 }
    }
}

impl FitConfig {
    fn optimizer(&self) -> Result<Optimizer> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Optimizer::new(OptimizerConfig { kind: self.optimizer, lr: self.lr, max_grad_norm: self.max_grad_norm })
    }
}

/// Mean `|a - mu(o)|^2` over the dataset.
pub fn bc_loss(actor: &ActorNet, data: &ExpertDataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let sum: f64 = data
        .pairs
        .iter()
        .map(|p| {
            let d = actor.forward(&p.obs).mean - p.action;
            d.dot(d)
        })
        .sum();
    sum / data.len() as f64
}

/// Regresses the policy mean onto the expert actions with shuffled
/// minibatches. Entry 0 of the returned curve is the dataset loss before
/// training, entry `e` the dataset loss after epoch `e`.
pub fn bc_pretrain(actor: &mut ActorNet, data: &ExpertDataset, cfg: &FitConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("behaviour cloning needs a non-empty dataset"));
    }
    let mut opt = cfg.optimizer()?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = vec![bc_loss(actor, data)];
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xBC, epoch as u64]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Observation, Vec2)> =
                chunk.iter().map(|&k| (&data.pairs[k].obs, data.pairs[k].action)).collect();
            actor.zero_grad();
            accumulate_bc_gradients(&batch, actor);
            opt.step(actor);
        }
        let loss = bc_loss(actor, data);
        if !loss.is_finite() || !actor.all_finite() {
            return Err(Error::NonFinite { what: "behaviour cloning loss".into(), iteration: epoch });
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// One value sample per time step with per-agent Monte-Carlo targets.
pub fn value_samples(trajectories: &[Trajectory], gamma: f64) -> Vec<ValueSample> {
    let mut out = Vec::new();
    for traj in trajectories {
        let returns = monte_carlo_returns(&traj.rewards, gamma);
        for (states, targets) in traj.states.iter().zip(returns) {
            out.push(ValueSample { states: states.clone(), targets });
        }
    }
    out
}

/// Fits the local values to per-agent Monte-Carlo returns by MSE. The curve
/// follows the same convention as [`bc_pretrain`]; `batch_size` counts time
/// steps.
pub fn critic_pretrain(
    critic: &mut CriticNet,
    trajectories: &[Trajectory],
    gamma: f64,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let samples = value_samples(trajectories, gamma);
    if samples.is_empty() {
        return Err(Error::invalid("critic pre-training needs at least one time step"));
    }
    let mut opt = cfg.optimizer()?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = vec![critic_loss(&samples, critic)?];
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0xC1, epoch as u64]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ValueSample> = chunk.iter().map(|&k| samples[k].clone()).collect();
            critic.zero_grad();
            accumulate_critic_gradients(&batch, critic)?;
            opt.step(critic);
        }
        let loss = critic_loss(&samples, critic)?;
        if !loss.is_finite() || !critic.all_finite() {
            return Err(Error::NonFinite { what: "critic pre-training loss".into(), iteration: epoch });
        }
        curve.push(loss);
    }
    Ok(curve)
}
