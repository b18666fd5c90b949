//! Closed-loop controllers and single-episode rollouts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::SwarmState;
use crate::env::CoverageEnv;
use crate::error::Result;
use crate::geometry::Vec2;
use crate::nets::{deterministic_action, sample_action, ActorNet};
use crate::potentials::classical_control;

/// Maps the current environment state to one acceleration per agent.
pub trait Controller {
    fn name(&self) -> &str;
    fn actions(&mut self, env: &CoverageEnv) -> Vec<Vec2>;
}

/// The damped potential-gradient law.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicalController;

impl Controller for ClassicalController {
    fn name(&self) -> &str {
        "classical"
    }

    fn actions(&mut self, env: &CoverageEnv) -> Vec<Vec2> {
        classical_control(env.state(), env.poly(), env.params(), env.config().dynamics.a_max)
    }
}

/// Never accelerates.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn name(&self) -> &str {
        "zero"
    }

    fn actions(&mut self, env: &CoverageEnv) -> Vec<Vec2> {
        vec![Vec2::new(0.0, 0.0); env.n()]
    }
}

/// A trained actor shared by every agent. Uses the policy mean unless a
/// sampling seed is given.
#[derive(Debug, Clone)]
pub struct PolicyController {
    name: String,
    actor: ActorNet,
    rng: Option<ChaCha8Rng>,
}

impl PolicyController {
    pub fn deterministic(actor: ActorNet) -> Self {
        Self { name: "policy".into(), actor, rng: None }
    }

    pub fn stochastic(actor: ActorNet, seed: u64) -> Self {
        Self { name: "policy".into(), actor, rng: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor
    }
}

impl Controller for PolicyController {
    fn name(&self) -> &str {
        &self.name
    }

    fn actions(&mut self, env: &CoverageEnv) -> Vec<Vec2> {
        let a_max = env.config().dynamics.a_max;
        env.observe_all()
            .iter()
            .map(|obs| {
                let policy = self.actor.forward(obs);
                match self.rng.as_mut() {
                    Some(rng) => sample_action(&policy, rng, a_max).applied,
                    None => deterministic_action(&policy, a_max),
                }
            })
            .collect()
    }
}

/// Everything observed during one episode. `states` and `potential` have one
/// more entry than `actions` and `rewards` (the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<SwarmState>,
    pub actions: Vec<Vec<Vec2>>,
    pub rewards: Vec<Vec<f64>>,
    pub potential: Vec<f64>,
}

impl Episode {
    /// Undiscounted sum of the global reward.
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().map(|r| r.iter().sum::<f64>()).sum()
    }
}

/// Runs the environment from its current state to the horizon.
pub fn run_episode(env: &mut CoverageEnv, controller: &mut dyn Controller) -> Result<Episode> {
    let steps = env.total_steps() - env.elapsed_steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    let mut potential = Vec::with_capacity(steps + 1);
    states.push(env.state().clone());
    potential.push(env.total_potential());
    while !env.is_done() {
        let a = controller.actions(env);
        let step = env.step(&a)?;
        actions.push(a);
        rewards.push(step.individual_rewards);
        states.push(step.next);
        potential.push(env.total_potential());
    }
    Ok(Episode { states, actions, rewards, potential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::geometry::Polygon;
    use crate::nets::ActorConfig;

    fn env(n: usize, horizon: f64) -> CoverageEnv {
        CoverageEnv::new(EnvConfig::new(Polygon::unit_square(), n).with_horizon(horizon)).unwrap()
    }

    #[test]
    fn episode_lengths() {
        let mut e = env(4, 2.0);
        let ep = run_episode(&mut e, &mut ClassicalController).unwrap();
        assert_eq!(ep.actions.len(), 100);
        assert_eq!(ep.rewards.len(), 100);
        assert_eq!(ep.states.len(), 101);
        assert_eq!(ep.potential.len(), 101);
        assert!(e.is_done());
    }

    #[test]
    fn zero_controller_keeps_agents_still() {
        let mut e = env(3, 1.0);
        let start = e.state().clone();
        let ep = run_episode(&mut e, &mut ZeroController).unwrap();
        assert_eq!(ep.states.last().unwrap(), &start);
    }

    #[test]
    fn classical_actions_respect_the_bound() {
        let mut e = env(5, 3.0);
        let ep = run_episode(&mut e, &mut ClassicalController).unwrap();
        assert!(ep.actions.iter().flatten().all(|a| a.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn policy_runs_for_any_swarm_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = ActorNet::new(ActorConfig { lstm_hidden: 8, trunk: vec![8], init_log_std: 0.0 }, &mut rng).unwrap();
        for n in 1..=6 {
            let mut e = env(n, 0.2);
            let mut c = PolicyController::stochastic(actor.clone(), 3);
            let ep = run_episode(&mut e, &mut c).unwrap();
            assert!(ep.actions.iter().all(|a| a.len() == n));
        }
    }
}
