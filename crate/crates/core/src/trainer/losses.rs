use crate::env::{Observation, STATE_DIM};
use crate::error::Result;
use crate::geometry::Vec2;
use crate::nets::{ActorNet, CriticNet};

/// One `(t, i)` entry of a policy update batch.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub obs: Observation,
    /// Raw (pre-clamp) sampled action.
    pub action: Vec2,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// All agents' state rows at one time step with their value targets.
#[derive(Debug, Clone)]
pub struct ValueSample {
    pub states: Vec<[f64; STATE_DIM]>,
    pub targets: Vec<f64>,
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Whether the clip branch is active, i.e. the surrogate is flat in `ratio`.
fn clipped(ratio: f64, advantage: f64, eps: f64) -> bool {
    (advantage >= 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps)
}

/// Mean clipped surrogate over the batch (to be maximised).
pub fn ppo_clip_loss(batch: &[PolicySample], actor: &ActorNet, clip_eps: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|s| {
            let ratio = (actor.forward(&s.obs).log_prob(s.action) - s.old_log_prob).exp();
            clipped_surrogate(ratio, s.advantage, clip_eps)
        })
        .sum();
    total / batch.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyStats {
    pub objective: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Accumulates the gradient of `-(surrogate + entropy_coeff * entropy)` into
/// the actor, so that an optimizer descent step ascends the objective.
pub fn accumulate_policy_gradients(
    batch: &[PolicySample],
    actor: &mut ActorNet,
    clip_eps: f64,
    entropy_coeff: f64,
) -> PolicyStats {
    if batch.is_empty() {
        return PolicyStats::default();
    }
    let scale = 1.0 / batch.len() as f64;
    let mut stats = PolicyStats::default();
    let mut clipped_count = 0usize;
    for s in batch {
        let (policy, cache) = actor.forward_cached(&s.obs);
        let (lp, d_mean, d_log_std) = policy.log_prob_with_grads(s.action);
        let ratio = (lp - s.old_log_prob).exp();
        stats.objective += clipped_surrogate(ratio, s.advantage, clip_eps) * scale;
        stats.entropy += policy.entropy() * scale;
        let w = if clipped(ratio, s.advantage, clip_eps) {
            clipped_count += 1;
            0.0
        } else {
            -ratio * s.advantage * scale
        };
        let dm = [w * d_mean[0], w * d_mean[1]];
        let ds = [w * d_log_std[0] - entropy_coeff * scale, w * d_log_std[1] - entropy_coeff * scale];
        actor.backward(&cache, dm, ds);
    }
    stats.clip_fraction = clipped_count as f64 * scale;
    stats
}

/// Mean squared error between local values and targets over all `(t, i)`.
pub fn critic_loss(batch: &[ValueSample], critic: &CriticNet) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in batch {
        let v = critic.values(&s.states)?;
        sum += v.iter().zip(&s.targets).map(|(v, t)| (v - t) * (v - t)).sum::<f64>();
        count += v.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Accumulates the gradient of [`critic_loss`] into the critic and returns
/// the loss.
pub fn accumulate_critic_gradients(batch: &[ValueSample], critic: &mut CriticNet) -> Result<f64> {
    let count: usize = batch.iter().map(|s| s.states.len()).sum();
    if count == 0 {
        return Ok(0.0);
    }
    let scale = 1.0 / count as f64;
    let mut loss = 0.0;
    for s in batch {
        let (v, cache) = critic.values_cached(&s.states)?;
        let d: Vec<f64> = v.iter().zip(&s.targets).map(|(v, t)| 2.0 * (v - t) * scale).collect();
        loss += v.iter().zip(&s.targets).map(|(v, t)| (v - t) * (v - t)).sum::<f64>() * scale;
        critic.backward(&cache, &d);
    }
    Ok(loss)
}

/// Accumulates the gradient of the behaviour-cloning loss
/// `mean |a - mu(o)|^2` and returns the loss.
pub fn accumulate_bc_gradients(batch: &[(&Observation, Vec2)], actor: &mut ActorNet) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (obs, target) in batch {
        let (policy, cache) = actor.forward_cached(obs);
        let diff = policy.mean - *target;
        loss += diff.dot(diff) * scale;
        actor.backward(&cache, [2.0 * diff.x * scale, 2.0 * diff.y * scale], [0.0; 2]);
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SwarmState;
    use crate::env::{observe, state_matrix};
    use crate::geometry::Polygon;
    use crate::nets::{ActorConfig, CriticConfig};
    use crate::neural::{fd, Parameters};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn actor(rng: &mut ChaCha8Rng) -> ActorNet {
        ActorNet::new(ActorConfig { lstm_hidden: 4, trunk: vec![5], init_log_std: -0.2 }, rng).unwrap()
    }

    fn critic(rng: &mut ChaCha8Rng) -> CriticNet {
        CriticNet::new(CriticConfig { d_model: 4, d_k: 3, d_v: 4, value_hidden: vec![4] }, rng).unwrap()
    }

    fn swarm(rng: &mut ChaCha8Rng, n: usize) -> SwarmState {
        SwarmState::at_rest(
            &(0..n).map(|_| Vec2::new(rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2))).collect::<Vec<_>>(),
        )
    }

    fn policy_batch(rng: &mut ChaCha8Rng, a: &ActorNet, len: usize) -> Vec<PolicySample> {
        let sq = Polygon::unit_square();
        (0..len)
            .map(|_| {
                let obs = observe(0, &swarm(rng, 3), &sq);
                let action = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let old_log_prob = a.forward(&obs).log_prob(action) + rng.gen_range(-0.5..0.5);
                PolicySample { obs, action, old_log_prob, advantage: rng.gen_range(-2.0..2.0) }
            })
            .collect()
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
        assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn objective_at_old_policy_is_mean_advantage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = actor(&mut rng);
        let mut batch = policy_batch(&mut rng, &a, 10);
        for s in &mut batch {
            s.old_log_prob = a.forward(&s.obs).log_prob(s.action);
        }
        let mean_adv = batch.iter().map(|s| s.advantage).sum::<f64>() / 10.0;
        assert!((ppo_clip_loss(&batch, &a, 0.2) - mean_adv).abs() < 1e-12);
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = actor(&mut rng);
            let batch = policy_batch(&mut rng, &a, 6);
            // keep every ratio away from the clip kinks
            if batch.iter().any(|s| {
                let r = (a.forward(&s.obs).log_prob(s.action) - s.old_log_prob).exp();
                (r - 1.3).abs() < 1e-3 || (r - 0.7).abs() < 1e-3
            }) {
                continue;
            }
            let mut analytic = a.clone();
            analytic.zero_grad();
            accumulate_policy_gradients(&batch, &mut analytic, 0.3, 0.05);
            let loss = |m: &ActorNet| {
                let entropy = m.forward(&batch[0].obs).entropy();
                -(ppo_clip_loss(&batch, m, 0.3) + 0.05 * entropy)
            };
            let err = fd::max_param_error(&a, &analytic, loss, 1e-6);
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn clipped_gradient_equals_unclipped_at_old_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = actor(&mut rng);
        let mut batch = policy_batch(&mut rng, &a, 8);
        for s in &mut batch {
            s.old_log_prob = a.forward(&s.obs).log_prob(s.action);
        }
        let mut clipped = a.clone();
        clipped.zero_grad();
        accumulate_policy_gradients(&batch, &mut clipped, 0.2, 0.0);
        let mut plain = a.clone();
        plain.zero_grad();
        accumulate_policy_gradients(&batch, &mut plain, 1e9, 0.0);
        let grads = |m: &ActorNet| {
            let mut g = Vec::new();
            m.visit("", &mut |_, p| g.extend_from_slice(&p.grad));
            g
        };
        assert_eq!(grads(&clipped), grads(&plain));
    }

    #[test]
    fn critic_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = critic(&mut rng);
        let states = state_matrix(&swarm(&mut rng, 2), &Polygon::unit_square());
        let values = c.values(&states).unwrap();
        let exact = ValueSample { states: states.clone(), targets: values.clone() };
        assert_eq!(critic_loss(&[exact], &c).unwrap(), 0.0);
        let shifted = ValueSample { states, targets: vec![values[0], values[1] + 2.0] };
        assert!((critic_loss(&[shifted], &c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sq = Polygon::unit_square();
        for _ in 0..10 {
            let c = critic(&mut rng);
            let batch: Vec<ValueSample> = (0..3)
                .map(|k| ValueSample {
                    states: state_matrix(&swarm(&mut rng, k + 1), &sq),
                    targets: (0..=k).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                })
                .collect();
            let mut analytic = c.clone();
            analytic.zero_grad();
            let loss = accumulate_critic_gradients(&batch, &mut analytic).unwrap();
            assert!((loss - critic_loss(&batch, &c).unwrap()).abs() < 1e-12);
            let err = fd::max_param_error(&c, &analytic, |m| critic_loss(&batch, m).unwrap(), 1e-5);
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn bc_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sq = Polygon::unit_square();
        let a = actor(&mut rng);
        let obs: Vec<Observation> = (0..4).map(|_| observe(1, &swarm(&mut rng, 3), &sq)).collect();
        let batch: Vec<(&Observation, Vec2)> =
            obs.iter().map(|o| (o, Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
        let mut analytic = a.clone();
        analytic.zero_grad();
        accumulate_bc_gradients(&batch, &mut analytic);
        let loss = |m: &ActorNet| {
            batch.iter().map(|(o, t)| (m.forward(o).mean - *t).dot(m.forward(o).mean - *t)).sum::<f64>() / 4.0
        };
        assert!(fd::max_param_error(&a, &analytic, loss, 1e-5) <= 1e-5);
    }
}
