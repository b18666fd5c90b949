//! Multi-agent coverage control workbench.
//!
//! Agents with saturated double-integrator dynamics must spread over a
//! polygonal domain until they form an `r_d`-subcover. The crate provides the
//! potential-shaped environment, a classical gradient controller, an
//! LSTM-based shared actor with a self-attention value-decomposition critic,
//! behaviour-cloning pre-training and a clipped MAPPO trainer, plus the
//! simulation and evaluation harness behind the `swarmcov` binary.

pub mod controller;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod nets;
pub mod neural;
pub mod potentials;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{Polygon, Vec2};
