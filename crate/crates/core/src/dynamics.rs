//! Double-integrator agents with norm-saturated velocity and acceleration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub p: Vec2,
    pub v: Vec2,
}

impl AgentState {
    pub fn at_rest(p: Vec2) -> Self {
        Self { p, v: Vec2::ZERO }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub agents: Vec<AgentState>,
}

impl SwarmState {
    pub fn at_rest(positions: &[Vec2]) -> Self {
        Self { agents: positions.iter().copied().map(AgentState::at_rest).collect() }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.agents.iter().map(|a| a.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// m/s
    pub v_max: f64,
    /// m/s²
    pub a_max: f64,
    /// s
    pub dt: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { v_max: 1.0, a_max: 1.0, dt: 0.02 }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("v_max", self.v_max), ("a_max", self.a_max), ("dt", self.dt)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Rescales `vec` onto the ball of radius `max`, keeping its direction.
pub fn clamp_norm(vec: Vec2, max: f64) -> Vec2 {
    let norm = vec.norm();
    if norm <= max {
        vec
    } else {
        vec * (max / norm)
    }
}

/// One semi-implicit Euler step: saturate the acceleration, update and
/// saturate the velocity, then move with the new velocity.
pub fn integrate_step(state: &SwarmState, accels: &[Vec2], cfg: &DynamicsConfig) -> Result<SwarmState> {
    if accels.len() != state.len() {
        return Err(Error::LengthMismatch { expected: state.len(), got: accels.len() });
    }
    let agents = state
        .agents
        .iter()
        .zip(accels)
        .map(|(agent, &a)| {
            let a = clamp_norm(a, cfg.a_max);
            let v = clamp_norm(agent.v + a * cfg.dt, cfg.v_max);
            AgentState { p: agent.p + v * cfg.dt, v }
        })
        .collect();
    Ok(SwarmState { agents })
}
