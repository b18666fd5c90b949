//! The coverage environment: line initialisation below the domain,
//! per-agent observations, potential-shaped rewards and the fixed-horizon
//! episode lifecycle, plus the subcover and success metrics.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_step, DynamicsConfig, SwarmState};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};
use crate::potentials::{individual_potential, PotentialParams};

/// Length of the per-agent internal state vector.
pub const STATE_DIM: usize = 8;

pub const DEFAULT_HORIZON: f64 = 30.0;
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.15;

const MAX_PLACEMENT_RETRIES: usize = 100;
const LINE_JITTER: f64 = 0.1;

/// Local observation of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `(p_x, p_y, v_x, v_y, dhat_x, dhat_y, |d|, indicator)`
    pub own: [f64; STATE_DIM],
    /// Relative positions `p_i - p_j` of the other agents, farthest first.
    pub others: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    /// Jittered horizontal line below the domain.
    #[default]
    Line,
    /// Fixed positions, zero velocity.
    Positions(Vec<Vec2>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub poly: Polygon,
    pub n: usize,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    /// Episode length in seconds.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Damping of the classical controller.
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default)]
    pub init: InitSpec,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_gamma() -> f64 {
    0.99
}

fn default_damping() -> f64 {
    PotentialParams::DEFAULT_DAMPING
}

impl EnvConfig {
    pub fn new(poly: Polygon, n: usize) -> Self {
        Self {
            poly,
            n,
            dynamics: DynamicsConfig::default(),
            horizon: DEFAULT_HORIZON,
            gamma: default_gamma(),
            seed: 0,
            damping: default_damping(),
            init: InitSpec::Line,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_dynamics(mut self, dynamics: DynamicsConfig) -> Self {
        self.dynamics = dynamics;
        self
    }

    pub fn with_init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("environment needs at least one agent"));
        }
        self.dynamics.validate()?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if let InitSpec::Positions(p) = &self.init {
            if p.len() != self.n {
                return Err(Error::LengthMismatch { expected: self.n, got: p.len() });
            }
        }
        self.steps().map(|_| ())
    }

    /// Number of control steps in one episode.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.horizon / self.dynamics.dt;
        let steps = ratio.round();
        if !(steps >= 1.0) || (ratio - steps).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "horizon {} is not an integral multiple of dt {}",
                self.horizon, self.dynamics.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn params(&self) -> Result<PotentialParams> {
        PotentialParams::new(self.poly.coverage_radius(self.n)?, self.damping)
    }
}

/// Initial swarm for `cfg`: evenly spaced at `r_d` on a horizontal line one
/// `r_d` below the domain's bounding box, jittered by up to `0.1 r_d` per axis.
pub fn reset(cfg: &EnvConfig, seed: u64) -> Result<SwarmState> {
    if let InitSpec::Positions(p) = &cfg.init {
        return Ok(SwarmState::at_rest(p));
    }
    let r_d = cfg.poly.coverage_radius(cfg.n)?;
    let (lo, hi) = cfg.poly.bounding_box();
    let cx = 0.5 * (lo.x + hi.x);
    let y = lo.y - r_d;
    let mid = (cfg.n as f64 - 1.0) / 2.0;
    let jitter = LINE_JITTER * r_d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_PLACEMENT_RETRIES {
        let positions: Vec<Vec2> = (0..cfg.n)
            .map(|k| {
                let base = Vec2::new(cx + (k as f64 - mid) * r_d, y);
                base + Vec2::new(rng.gen_range(-jitter..=jitter), rng.gen_range(-jitter..=jitter))
            })
            .collect();
        if positions.iter().all(|&p| !cfg.poly.contains(p)) {
            return Ok(SwarmState::at_rest(&positions));
        }
    }
    Err(Error::Placement { retries: MAX_PLACEMENT_RETRIES })
}

/// Internal state row `s_i` of agent `i`.
pub fn agent_state(i: usize, swarm: &SwarmState, poly: &Polygon) -> [f64; STATE_DIM] {
    let agent = swarm.agents[i];
    let proj = poly.project_to_boundary(agent.p);
    let dir = proj.direction();
    [agent.p.x, agent.p.y, agent.v.x, agent.v.y, dir.x, dir.y, proj.distance, proj.indicator()]
}

/// Rows `s_1 .. s_n` stacked: the centralised state seen by the critic.
pub fn state_matrix(swarm: &SwarmState, poly: &Polygon) -> Vec<[f64; STATE_DIM]> {
    (0..swarm.len()).map(|i| agent_state(i, swarm, poly)).collect()
}

/// Observation of agent `i`. Other agents are sorted by the norm of the
/// relative position, descending; equal norms keep ascending agent index.
pub fn observe(i: usize, swarm: &SwarmState, poly: &Polygon) -> Observation {
    let pi = swarm.agents[i].p;
    let mut others: Vec<(usize, Vec2, f64)> = swarm
        .agents
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, a)| {
            let rel = pi - a.p;
            (j, rel, rel.norm())
        })
        .collect();
    others.sort_by(|a, b| match b.2.total_cmp(&a.2) {
        Ordering::Equal => a.0.cmp(&b.0),
        ord => ord,
    });
    Observation { own: agent_state(i, swarm, poly), others: others.into_iter().map(|(_, v, _)| v).collect() }
}

pub fn observe_all(swarm: &SwarmState, poly: &Polygon) -> Vec<Observation> {
    (0..swarm.len()).map(|i| observe(i, swarm, poly)).collect()
}

/// Supremum of the total potential over configurations with every agent
/// inside the domain: every agent on the boundary and all agents coincident.
pub fn saturation_constant(n: usize, r_d: f64) -> f64 {
    let n = n as f64;
    let r2 = r_d * r_d;
    n * r2 / 4.0 + n * (n - 1.0) * r2 / 2.0
}

pub fn individual_reward(i: usize, next: &SwarmState, poly: &Polygon, params: &PotentialParams, m: f64) -> f64 {
    if poly.contains(next.agents[i].p) {
        -individual_potential(i, next, poly, params)
    } else {
        -m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: SwarmState,
    pub individual_rewards: Vec<f64>,
    pub global_reward: f64,
    pub done: bool,
}

/// Integrates one control step and scores the resulting state.
pub fn transition(
    swarm: &SwarmState,
    actions: &[Vec2],
    poly: &Polygon,
    dynamics: &DynamicsConfig,
    params: &PotentialParams,
    m: f64,
) -> Result<(SwarmState, Vec<f64>, f64)> {
    let next = integrate_step(swarm, actions, dynamics)?;
    let rewards: Vec<f64> = (0..next.len()).map(|i| individual_reward(i, &next, poly, params, m)).collect();
    let global = rewards.iter().sum();
    Ok((next, rewards, global))
}

/// A single environment instance that owns its state and step counter.
#[derive(Debug, Clone)]
pub struct CoverageEnv {
    cfg: EnvConfig,
    params: PotentialParams,
    saturation: f64,
    total_steps: usize,
    elapsed: usize,
    state: SwarmState,
}

impl CoverageEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.params()?;
        let saturation = saturation_constant(cfg.n, params.r_d);
        let total_steps = cfg.steps()?;
        let state = reset(&cfg, cfg.seed)?;
        Ok(Self { cfg, params, saturation, total_steps, elapsed: 0, state })
    }

    pub fn reset(&mut self, seed: u64) -> Result<&SwarmState> {
        self.state = reset(&self.cfg, seed)?;
        self.elapsed = 0;
        Ok(&self.state)
    }

    /// Restarts the episode from an explicit state.
    pub fn reset_to(&mut self, state: SwarmState) -> Result<()> {
        if state.len() != self.cfg.n {
            return Err(Error::LengthMismatch { expected: self.cfg.n, got: state.len() });
        }
        self.state = state;
        self.elapsed = 0;
        Ok(())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &PotentialParams {
        &self.params
    }

    pub fn poly(&self) -> &Polygon {
        &self.cfg.poly
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn saturation(&self) -> f64 {
        self.saturation
    }

    pub fn state(&self) -> &SwarmState {
        &self.state
    }

    pub fn elapsed_steps(&self) -> usize {
        self.elapsed
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn is_done(&self) -> bool {
        self.elapsed >= self.total_steps
    }

    pub fn time(&self) -> f64 {
        self.elapsed as f64 * self.cfg.dynamics.dt
    }

    pub fn observe(&self, i: usize) -> Observation {
        observe(i, &self.state, &self.cfg.poly)
    }

    pub fn observe_all(&self) -> Vec<Observation> {
        observe_all(&self.state, &self.cfg.poly)
    }

    pub fn state_matrix(&self) -> Vec<[f64; STATE_DIM]> {
        state_matrix(&self.state, &self.cfg.poly)
    }

    pub fn total_potential(&self) -> f64 {
        crate::potentials::total_potential(&self.state, &self.cfg.poly, &self.params)
    }

    pub fn step(&mut self, actions: &[Vec2]) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::invalid("episode already finished; reset first"));
        }
        let (next, individual_rewards, global_reward) =
            transition(&self.state, actions, &self.cfg.poly, &self.cfg.dynamics, &self.params, self.saturation)?;
        self.state = next.clone();
        self.elapsed += 1;
        Ok(StepResult { next, individual_rewards, global_reward, done: self.is_done() })
    }
}

/// Whether the swarm is an `l`-subcover of `poly`.
pub fn is_subcover(swarm: &SwarmState, poly: &Polygon, l: f64) -> bool {
    let agents = &swarm.agents;
    agents.iter().all(|a| poly.ball_in_domain(a.p, l / 2.0))
        && agents.iter().enumerate().all(|(i, a)| agents[i + 1..].iter().all(|b| a.p.distance(b.p) >= l - 1e-9))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub success: bool,
    /// Earliest time after which the potential stays below the threshold.
    pub time: Option<f64>,
}

/// Success iff the potential stays below `threshold` from some `t* < horizon`
/// on. `trace[k]` is the potential at time `k * dt`.
pub fn success_and_convergence(trace: &[f64], dt: f64, threshold: f64) -> Convergence {
    let fail = Convergence { success: false, time: None };
    if trace.len() < 2 {
        return fail;
    }
    let horizon_index = trace.len() - 1;
    let first = match trace.iter().rposition(|&phi| !(phi < threshold)) {
        None => 0,
        Some(k) => k + 1,
    };
    if first >= horizon_index {
        return fail;
    }
    Convergence { success: true, time: Some(first as f64 * dt) }
}
