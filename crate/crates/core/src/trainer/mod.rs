//! Behaviour-cloning pre-training and the clipped multi-agent PPO loop.
//!
//! Every random draw is seeded from the training seed and the position of
//! the draw (iteration, environment, trajectory, epoch), never from a shared
//! stream. Resuming from a checkpoint therefore only needs the parameters,
//! the optimizer state and the iteration counter to reproduce the remaining
//! run bit for bit.

mod expert;
mod losses;
mod returns;

pub use expert::{
    bc_loss, bc_pretrain, critic_pretrain, expert_episode_seed, generate_expert_data, generate_expert_dataset,
    value_samples, ExpertDataset, ExpertPair, FitConfig,
};
pub use losses::{
    accumulate_bc_gradients, accumulate_critic_gradients, accumulate_policy_gradients, clipped_surrogate, critic_loss,
    ppo_clip_loss, PolicySample, PolicyStats, ValueSample,
};
pub use returns::{discounted_returns, individual_advantages, monte_carlo_returns, normalize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::Episode;
use crate::env::{observe_all, state_matrix, CoverageEnv, EnvConfig, Observation, STATE_DIM};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};
use crate::nets::{sample_action, ActorConfig, ActorNet, CriticConfig, CriticNet};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::neural::Parameters;

/// Mixes `parts` into `base` with splitmix64 rounds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// One episode as seen by the learner. Per-step tables are indexed
/// `[t][agent]` and cover the `T` decision steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub env_id: usize,
    pub n: usize,
    pub seed: u64,
    pub states: Vec<Vec<[f64; STATE_DIM]>>,
    pub observations: Vec<Vec<Observation>>,
    /// Raw sampled actions (before the acceleration clamp).
    pub actions: Vec<Vec<Vec2>>,
    pub log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub final_potential: f64,
}

impl Trajectory {
    /// Wraps a controller episode. Log-probabilities are zero and values are
    /// absent because no policy or critic was involved.
    pub fn from_episode(env_id: usize, seed: u64, episode: &Episode, poly: &Polygon) -> Self {
        let steps = episode.actions.len();
        let decision_states = &episode.states[..steps];
        let n = episode.states[0].len();
        Self {
            env_id,
            n,
            seed,
            states: decision_states.iter().map(|s| state_matrix(s, poly)).collect(),
            observations: decision_states.iter().map(|s| observe_all(s, poly)).collect(),
            actions: episode.actions.clone(),
            log_probs: vec![vec![0.0; n]; steps],
            rewards: episode.rewards.clone(),
            values: vec![Vec::new(); steps],
            final_potential: *episode.potential.last().unwrap_or(&0.0),
        }
    }

    pub fn steps(&self) -> usize {
        self.rewards.len()
    }

    /// Undiscounted sum of the global reward.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().map(|r| r.iter().sum::<f64>()).sum()
    }
}

fn env_error(env_id: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Env { env_id, source: Box::new(e) }
}

/// Seed of rollout `traj` in environment `env` at `iteration`.
pub fn rollout_seed(seed: u64, iteration: usize, env: usize, traj: usize) -> u64 {
    derive_seed(seed, &[0x7, iteration as u64, env as u64, traj as u64])
}

/// Samples `trajectories_per_env` episodes from every environment with the
/// current stochastic actor, recording critic values along the way.
pub fn collect_rollouts(
    envs: &[EnvConfig],
    actor: &ActorNet,
    critic: &CriticNet,
    trajectories_per_env: usize,
    seed: u64,
    iteration: usize,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(envs.len() * trajectories_per_env);
    for (k, cfg) in envs.iter().enumerate() {
        let mut env = CoverageEnv::new(cfg.clone()).map_err(env_error(k))?;
        let a_max = cfg.dynamics.a_max;
        for j in 0..trajectories_per_env {
            let s = rollout_seed(seed, iteration, k, j);
            env.reset(derive_seed(s, &[0])).map_err(env_error(k))?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s, &[1]));
            let steps = env.total_steps();
            let mut traj = Trajectory {
                env_id: k,
                n: cfg.n,
                seed: s,
                states: Vec::with_capacity(steps),
                observations: Vec::with_capacity(steps),
                actions: Vec::with_capacity(steps),
                log_probs: Vec::with_capacity(steps),
                rewards: Vec::with_capacity(steps),
                values: Vec::with_capacity(steps),
                final_potential: 0.0,
            };
            while !env.is_done() {
                let states = env.state_matrix();
                let values = critic.values(&states).map_err(env_error(k))?;
                let observations = env.observe_all();
                let mut raw = Vec::with_capacity(cfg.n);
                let mut applied = Vec::with_capacity(cfg.n);
                let mut log_probs = Vec::with_capacity(cfg.n);
                for obs in &observations {
                    let sample = sample_action(&actor.forward(obs), &mut rng, a_max);
                    raw.push(sample.raw);
                    applied.push(sample.applied);
                    log_probs.push(sample.log_prob);
                }
                let step = env.step(&applied).map_err(env_error(k))?;
                traj.states.push(states);
                traj.observations.push(observations);
                traj.actions.push(raw);
                traj.log_probs.push(log_probs);
                traj.rewards.push(step.individual_rewards);
                traj.values.push(values);
            }
            traj.final_potential = env.total_potential();
            out.push(traj);
        }
    }
    Ok(out)
}

/// Optional supervised warm start from classical-controller rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    /// Environments for expert rollouts; the training environments if absent.
    pub envs: Option<Vec<EnvConfig>>,
    /// Expert episodes per environment.
    pub episodes: usize,
    /// Keep every `stride`-th step of each expert episode.
    pub stride: usize,
    pub bc: Option<FitConfig>,
    pub critic: Option<FitConfig>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { envs: None, episodes: 10, stride: 1, bc: Some(FitConfig::default()), critic: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub optimizer: OptimizerKind,
    pub max_grad_norm: Option<f64>,
    pub iterations: usize,
    pub envs: Vec<EnvConfig>,
    pub trajectories_per_env: usize,
    pub update_epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coeff: f64,
    pub normalize_advantages: bool,
    pub seed: u64,
    pub actor: ActorConfig,
    pub critic: CriticConfig,
    pub pretrain: Option<PretrainConfig>,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            clip_eps: 0.2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            optimizer: OptimizerKind::Sgd,
            max_grad_norm: None,
            iterations: 20,
            envs: vec![EnvConfig::new(Polygon::unit_square(), 3)],
            trajectories_per_env: 4,
            update_epochs: 10,
            minibatch_size: 256,
            entropy_coeff: 0.0,
            normalize_advantages: true,
            seed: 0,
            actor: ActorConfig::default(),
            critic: CriticConfig::default(),
            pretrain: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.clip_eps) {
            return Err(Error::invalid(format!("clip_eps must lie in [0, 1), got {}", self.clip_eps)));
        }
        if self.envs.is_empty() {
            return Err(Error::invalid("training needs at least one environment"));
        }
        if self.trajectories_per_env == 0 || self.minibatch_size == 0 {
            return Err(Error::invalid("trajectories_per_env and minibatch_size must be positive"));
        }
        if !self.entropy_coeff.is_finite() {
            return Err(Error::invalid("entropy_coeff must be finite"));
        }
        for (k, env) in self.envs.iter().enumerate() {
            env.validate().map_err(env_error(k))?;
        }
        if let Some(p) = &self.pretrain {
            if p.stride == 0 {
                return Err(Error::invalid("pretrain.stride must be at least 1"));
            }
        }
        self.actor.validate()?;
        self.critic.validate()?;
        self.actor_optimizer().validate()?;
        self.critic_optimizer().validate()
    }

    pub fn actor_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { kind: self.optimizer, lr: self.actor_lr, max_grad_norm: self.max_grad_norm }
    }

    pub fn critic_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig { kind: self.optimizer, lr: self.critic_lr, max_grad_norm: self.max_grad_norm }
    }
}

/// Summary of one training iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Mean over sampled episodes of the undiscounted global return.
    pub mean_return: f64,
    pub mean_final_potential: f64,
    /// Mean clipped surrogate over all minibatches, before each update.
    pub policy_objective: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iteration,mean_return,mean_final_potential,policy_objective,critic_loss,\
entropy,clip_fraction,actor_grad_norm,critic_grad_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_return,
            self.mean_final_potential,
            self.policy_objective,
            self.critic_loss,
            self.entropy,
            self.clip_fraction,
            self.actor_grad_norm,
            self.critic_grad_norm
        )
    }

    fn is_finite(&self) -> bool {
        [
            self.mean_return,
            self.mean_final_potential,
            self.policy_objective,
            self.critic_loss,
            self.entropy,
            self.actor_grad_norm,
            self.critic_grad_norm,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    pub pairs: usize,
    pub bc_curve: Vec<f64>,
    pub critic_curve: Vec<f64>,
}

/// Training state: networks, optimizers and the number of finished
/// iterations.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    pub actor: ActorNet,
    pub critic: CriticNet,
    actor_opt: Optimizer,
    critic_opt: Optimizer,
    iteration: usize,
}

const CHECKPOINT_KIND: &str = "train";

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let actor =
            ActorNet::new(config.actor.clone(), &mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0xA])))?;
        let critic =
            CriticNet::new(config.critic.clone(), &mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0xC])))?;
        let actor_opt = Optimizer::new(config.actor_optimizer())?;
        let critic_opt = Optimizer::new(config.critic_optimizer())?;
        Ok(Self { config, actor, critic, actor_opt, critic_opt, iteration: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Number of finished iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Runs the configured warm start (a no-op without `pretrain`).
    pub fn pretrain(&mut self) -> Result<PretrainReport> {
        let Some(p) = self.config.pretrain.clone() else {
            return Ok(PretrainReport::default());
        };
        let envs = p.envs.as_ref().unwrap_or(&self.config.envs);
        let (data, trajectories) = generate_expert_data(envs, p.episodes, p.stride, self.config.seed)?;
        let mut report = PretrainReport { pairs: data.len(), ..PretrainReport::default() };
        if let Some(fit) = &p.bc {
            report.bc_curve = bc_pretrain(&mut self.actor, &data, fit)?;
        }
        if let Some(fit) = &p.critic {
            report.critic_curve = critic_pretrain(&mut self.critic, &trajectories, self.config.gamma, fit)?;
        }
        Ok(report)
    }

    /// One collect / evaluate / update cycle. If any loss or parameter turns
    /// non-finite the networks and optimizers are restored to their state
    /// before the call and an error is returned.
    pub fn run_iteration(&mut self) -> Result<IterationMetrics> {
        let cfg = self.config.clone();
        let iter = self.iteration;
        let trajectories =
            collect_rollouts(&cfg.envs, &self.actor, &self.critic, cfg.trajectories_per_env, cfg.seed, iter)?;
        let episodes = trajectories.len() as f64;
        let mean_return = trajectories.iter().map(Trajectory::total_return).sum::<f64>() / episodes;
        let mean_final_potential = trajectories.iter().map(|t| t.final_potential).sum::<f64>() / episodes;

        let value_batch = value_samples(&trajectories, cfg.gamma);
        let mut policy_batch = Vec::new();
        for traj in trajectories {
            let advantages = individual_advantages(&traj, cfg.gamma);
            let rows = traj.observations.into_iter().zip(traj.actions).zip(traj.log_probs).zip(advantages);
            for (((obs_row, act_row), lp_row), adv_row) in rows {
                for (((obs, action), old_log_prob), advantage) in
                    obs_row.into_iter().zip(act_row).zip(lp_row).zip(adv_row)
                {
                    policy_batch.push(PolicySample { obs, action, old_log_prob, advantage });
                }
            }
        }
        if cfg.normalize_advantages {
            let mut adv: Vec<f64> = policy_batch.iter().map(|s| s.advantage).collect();
            normalize(&mut adv);
            for (s, a) in policy_batch.iter_mut().zip(adv) {
                s.advantage = a;
            }
        }

        let snapshot = (self.actor.clone(), self.critic.clone(), self.actor_opt.clone(), self.critic_opt.clone());
        let minibatches = policy_batch.len().div_ceil(cfg.minibatch_size).max(1);
        let value_chunk = value_batch.len().div_ceil(minibatches).max(1);
        let mut policy_order: Vec<usize> = (0..policy_batch.len()).collect();
        let mut value_order: Vec<usize> = (0..value_batch.len()).collect();
        let mut sums = [0.0f64; 6];
        let mut updates = 0usize;
        let mut failure = None;
        'epochs: for epoch in 0..cfg.update_epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x5, iter as u64, epoch as u64]));
            policy_order.shuffle(&mut rng);
            value_order.shuffle(&mut rng);
            let value_chunks = value_order.chunks(value_chunk);
            for (p_idx, v_idx) in policy_order.chunks(cfg.minibatch_size).zip(value_chunks) {
                let pb: Vec<PolicySample> = p_idx.iter().map(|&k| policy_batch[k].clone()).collect();
                self.actor.zero_grad();
                let stats = accumulate_policy_gradients(&pb, &mut self.actor, cfg.clip_eps, cfg.entropy_coeff);
                let actor_norm = self.actor_opt.step(&mut self.actor);

                let vb: Vec<ValueSample> = v_idx.iter().map(|&k| value_batch[k].clone()).collect();
                self.critic.zero_grad();
                let closs = accumulate_critic_gradients(&vb, &mut self.critic)?;
                let critic_norm = self.critic_opt.step(&mut self.critic);

                let values = [stats.objective, closs, stats.entropy, stats.clip_fraction, actor_norm, critic_norm];
                if values.iter().any(|v| !v.is_finite()) || !self.actor.all_finite() || !self.critic.all_finite() {
                    failure = Some(format!("update at epoch {epoch}"));
                    break 'epochs;
                }
                for (s, v) in sums.iter_mut().zip(values) {
                    *s += v;
                }
                updates += 1;
            }
        }
        let u = updates.max(1) as f64;
        let metrics = IterationMetrics {
            iteration: iter,
            mean_return,
            mean_final_potential,
            policy_objective: sums[0] / u,
            critic_loss: sums[1] / u,
            entropy: sums[2] / u,
            clip_fraction: sums[3] / u,
            actor_grad_norm: sums[4] / u,
            critic_grad_norm: sums[5] / u,
        };
        if failure.is_none() && !metrics.is_finite() {
            failure = Some("iteration metrics".into());
        }
        if let Some(what) = failure {
            (self.actor, self.critic, self.actor_opt, self.critic_opt) = snapshot;
            return Err(Error::NonFinite { what, iteration: iter });
        }
        self.iteration += 1;
        Ok(metrics)
    }

    /// Runs the remaining iterations, handing each metrics row to `on_iteration`.
    pub fn run(&mut self, mut on_iteration: impl FnMut(&Self, &IterationMetrics) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let m = self.run_iteration()?;
            on_iteration(self, &m)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new();
        ckpt.set_metadata("kind", &CHECKPOINT_KIND)?;
        ckpt.set_metadata("iteration", &self.iteration)?;
        ckpt.set_metadata("train_config", &self.config)?;
        ckpt.set_metadata("actor_optimizer", &self.actor_opt)?;
        ckpt.set_metadata("critic_optimizer", &self.critic_opt)?;
        self.actor.save_into(&mut ckpt)?;
        self.critic.save_into(&mut ckpt)?;
        Ok(ckpt)
    }

    /// Restores a training checkpoint. `config` overrides the stored
    /// configuration (e.g. to extend `iterations`); network shapes must match.
    pub fn from_checkpoint(ckpt: &Checkpoint, config: Option<TrainConfig>) -> Result<Self> {
        let stored: TrainConfig = ckpt.metadata("train_config")?;
        let config = config.unwrap_or(stored);
        let mut trainer = Self::new(config)?;
        if trainer.actor.config() != &ckpt.metadata::<ActorConfig>("actor_config")?
            || trainer.critic.config() != &ckpt.metadata::<CriticConfig>("critic_config")?
        {
            return Err(Error::Checkpoint("network configuration differs from the checkpoint".into()));
        }
        ckpt.load_params(crate::nets::ACTOR_NAMESPACE, &mut trainer.actor)?;
        ckpt.load_params(crate::nets::CRITIC_NAMESPACE, &mut trainer.critic)?;
        trainer.actor_opt = ckpt.metadata("actor_optimizer")?;
        trainer.critic_opt = ckpt.metadata("critic_optimizer")?;
        trainer.iteration = ckpt.metadata("iteration")?;
        Ok(trainer)
    }
}

/// Pre-trains (if configured) and runs every iteration.
pub fn train(config: TrainConfig) -> Result<(Trainer, PretrainReport, Vec<IterationMetrics>)> {
    let mut trainer = Trainer::new(config)?;
    let report = trainer.pretrain()?;
    let mut metrics = Vec::new();
    trainer.run(|_, m| {
        metrics.push(*m);
        Ok(())
    })?;
    Ok((trainer, report, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::value_sum;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            iterations: 2,
            envs: vec![EnvConfig::new(Polygon::unit_square(), 2).with_horizon(0.4)],
            trajectories_per_env: 2,
            update_epochs: 2,
            minibatch_size: 16,
            actor: ActorConfig { lstm_hidden: 4, trunk: vec![8], init_log_std: -0.5 },
            critic: CriticConfig { d_model: 4, d_k: 4, d_v: 4, value_hidden: vec![8] },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn derived_seeds_differ_by_position() {
        let a = derive_seed(1, &[2, 3]);
        assert_eq!(a, derive_seed(1, &[2, 3]));
        assert_ne!(a, derive_seed(1, &[3, 2]));
        assert_ne!(a, derive_seed(2, &[2, 3]));
    }

    #[test]
    fn rollout_counts_and_shapes() {
        let mut cfg = tiny_config();
        cfg.envs.push(EnvConfig::new(Polygon::regular(6, 1.0).unwrap(), 3).with_horizon(0.2));
        let t = Trainer::new(cfg.clone()).unwrap();
        let trajs = collect_rollouts(&cfg.envs, &t.actor, &t.critic, 3, 0, 0).unwrap();
        assert_eq!(trajs.len(), 6);
        for tr in &trajs {
            let steps = if tr.env_id == 0 { 20 } else { 10 };
            assert_eq!(tr.steps(), steps);
            for t in 0..steps {
                assert_eq!(tr.states[t].len(), tr.n);
                assert_eq!(tr.observations[t].len(), tr.n);
                assert_eq!(tr.values[t].len(), tr.n);
                assert_eq!(tr.log_probs[t].len(), tr.n);
            }
        }
        let again = collect_rollouts(&cfg.envs, &t.actor, &t.critic, 3, 0, 0).unwrap();
        assert_eq!(trajs, again);
    }

    #[test]
    fn rollout_values_come_from_the_critic() {
        let cfg = tiny_config();
        let t = Trainer::new(cfg.clone()).unwrap();
        let trajs = collect_rollouts(&cfg.envs, &t.actor, &t.critic, 1, 5, 0).unwrap();
        for (s, v) in trajs[0].states.iter().zip(&trajs[0].values) {
            assert_eq!(&t.critic.values(s).unwrap(), v);
        }
    }

    #[test]
    fn advantages_are_additive() {
        let cfg = tiny_config();
        let t = Trainer::new(cfg.clone()).unwrap();
        let trajs = collect_rollouts(&cfg.envs, &t.actor, &t.critic, 1, 2, 0).unwrap();
        let tr = &trajs[0];
        let adv = individual_advantages(tr, 0.99);
        let g = monte_carlo_returns(&tr.rewards, 0.99);
        let global: Vec<f64> = tr.rewards.iter().map(|r| r.iter().sum()).collect();
        let g_global = discounted_returns(&global, 0.99);
        for s in 0..tr.steps() {
            let lhs: f64 = adv[s].iter().sum();
            let rhs = g[s].iter().sum::<f64>() - value_sum(&tr.values[s]).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12);
            assert!((g[s].iter().sum::<f64>() - g_global[s]).abs() <= 1e-10 * g_global[s].abs().max(1.0));
        }
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let mut c = tiny_config();
        c.gamma = 1.0;
        assert!(Trainer::new(c).is_err());
        let mut c = tiny_config();
        c.clip_eps = -0.1;
        assert!(Trainer::new(c).is_err());
        let mut c = tiny_config();
        c.envs.clear();
        assert!(Trainer::new(c).is_err());
    }

    #[test]
    fn iterations_emit_finite_metrics() {
        let (trainer, report, metrics) = train(tiny_config()).unwrap();
        assert_eq!(report, PretrainReport::default());
        assert_eq!(metrics.len(), 2);
        assert_eq!(trainer.iteration(), 2);
        assert!(metrics.iter().all(|m| m.is_finite()));
        assert_eq!(metrics[1].iteration, 1);
    }

    #[test]
    fn resume_is_bit_exact() {
        let mut cfg = tiny_config();
        cfg.iterations = 3;
        cfg.optimizer = OptimizerKind::adam();
        let (_, _, full) = train(cfg.clone()).unwrap();

        let mut first = Trainer::new(cfg.clone()).unwrap();
        first.run_iteration().unwrap();
        let text = first.to_checkpoint().unwrap().to_json().unwrap();
        let mut resumed = Trainer::from_checkpoint(&Checkpoint::from_json(&text).unwrap(), None).unwrap();
        let rest: Vec<_> = (0..2).map(|_| resumed.run_iteration().unwrap()).collect();
        for (a, b) in full[1..].iter().zip(&rest) {
            assert_eq!(a.csv_row(), b.csv_row());
        }
    }

    #[test]
    fn non_finite_update_restores_previous_state() {
        let mut cfg = tiny_config();
        cfg.entropy_coeff = 1e300;
        let mut t = Trainer::new(cfg).unwrap();
        let before = t.actor.clone();
        let err = t.run_iteration().unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
        assert_eq!(t.actor, before);
        assert_eq!(t.iteration(), 0);
    }

    #[test]
    fn pretraining_runs_when_configured() {
        let mut cfg = tiny_config();
        cfg.pretrain = Some(PretrainConfig {
            episodes: 1,
            bc: Some(FitConfig { epochs: 2, batch_size: 8, ..FitConfig::default() }),
            critic: Some(FitConfig { epochs: 2, batch_size: 4, ..FitConfig::default() }),
            ..PretrainConfig::default()
        });
        let mut t = Trainer::new(cfg).unwrap();
        let report = t.pretrain().unwrap();
        assert_eq!(report.pairs, 2 * 20);
        assert_eq!(report.bc_curve.len(), 3);
        assert_eq!(report.critic_curve.len(), 3);
    }
}
