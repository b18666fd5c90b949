//! File-based entry points behind the `swarmcov` binary: simulation,
//! evaluation tables, training runs and export of stored runs.
//!
//! Every command writes plain CSV, JSON and SVG files whose bytes depend only
//! on the configuration and seed.

mod evaluate;
mod export;
mod simulate;
pub mod svg;
mod train;

pub use evaluate::{
    cmd_evaluate, overshoot, wilson_interval, CellSummary, EvaluateConfig, RunRecord, SeedSpec, RUNS_FILE,
    SUMMARY_TEXT_FILE, TABLE_FILE, TRACES_DIR,
};
pub use export::{cmd_export, ExportConfig, ExportReport, MERGED_FILE};
pub use simulate::{
    cmd_simulate, SimulateConfig, SimulateReport, FRAMES_DIR, POLYGON_FILE, POTENTIAL_FILE, SUMMARY_FILE,
    TRAJECTORY_FILE,
};
pub use train::{
    cmd_train, TrainReport, TrainRun, CHECKPOINT_DIR, CONFIG_FILE, FINAL_CHECKPOINT, LAST_GOOD_CHECKPOINT,
    METRICS_FILE, PRETRAIN_FILE,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::controller::{ClassicalController, Controller, PolicyController, ZeroController};
use crate::dynamics::DynamicsConfig;
use crate::env::{EnvConfig, InitSpec, DEFAULT_HORIZON};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};
use crate::nets::ActorNet;
use crate::neural::checkpoint::Checkpoint;
use crate::potentials::PotentialParams;

/// Which controller drives the agents: `classical`, `zero`, or the path of
/// a checkpoint holding an actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
#[derive(Default)]
pub enum ControllerSpec {
    #[default]
    Classical,
    Zero,
    Checkpoint(PathBuf),
}

impl FromStr for ControllerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" => Err(Error::invalid("empty controller name")),
            "classical" => Ok(ControllerSpec::Classical),
            "zero" => Ok(ControllerSpec::Zero),
            path => Ok(ControllerSpec::Checkpoint(PathBuf::from(path))),
        }
    }
}

impl TryFrom<String> for ControllerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ControllerSpec> for String {
    fn from(c: ControllerSpec) -> String {
        c.to_string()
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::Classical => f.write_str("classical"),
            ControllerSpec::Zero => f.write_str("zero"),
            ControllerSpec::Checkpoint(p) => write!(f, "{}", p.display()),
        }
    }
}

impl ControllerSpec {
    /// Short label for tables: the controller name or the checkpoint file stem.
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Checkpoint(p) => {
                p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "policy".into())
            }
            other => other.to_string(),
        }
    }

    /// Builds the controller. Policies act with their mean unless
    /// `sample_seed` is given.
    pub fn build(&self, sample_seed: Option<u64>) -> Result<Box<dyn Controller>> {
        Ok(match self {
            ControllerSpec::Classical => Box::new(ClassicalController),
            ControllerSpec::Zero => Box::new(ZeroController),
            ControllerSpec::Checkpoint(path) => {
                let actor = load_actor(path)?;
                let c = match sample_seed {
                    Some(seed) => PolicyController::stochastic(actor, seed),
                    None => PolicyController::deterministic(actor),
                };
                Box::new(c.with_name(self.label()))
            }
        })
    }
}

pub fn load_actor(path: &Path) -> Result<ActorNet> {
    let ckpt = Checkpoint::load(path)?;
    ActorNet::from_checkpoint(&ckpt).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// A domain description for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    UnitSquare,
    Regular {
        sides: usize,
        area: f64,
    },
    Random {
        sides: usize,
        irregularity: f64,
        area: f64,
        seed: u64,
    },
    Vertices {
        vertices: Vec<Vec2>,
    },
    /// JSON file holding a list of `[x, y]` vertices.
    File {
        path: PathBuf,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Polygon> {
        match self {
            DomainSpec::UnitSquare => Ok(Polygon::unit_square()),
            DomainSpec::Regular { sides, area } => Polygon::regular(*sides, *area),
            DomainSpec::Random { sides, irregularity, area, seed } => {
                Polygon::random(*seed, *sides, *irregularity, *area)
            }
            DomainSpec::Vertices { vertices } => Polygon::new(vertices.clone()),
            DomainSpec::File { path } => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let vertices: Vec<Vec2> = serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidPolygon(format!("{}: expected a list of [x, y] vertices ({e})", path.display()))
                })?;
                Polygon::new(vertices).map_err(|e| Error::InvalidPolygon(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DomainSpec::UnitSquare => "unit_square".into(),
            DomainSpec::Regular { sides, .. } => format!("regular{sides}"),
            DomainSpec::Random { sides, seed, .. } => format!("random{sides}_s{seed}"),
            DomainSpec::Vertices { vertices } => format!("polygon{}", vertices.len()),
            DomainSpec::File { path } => {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "file".into())
            }
        }
    }
}

/// Environment settings shared by every domain and agent count of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSettings {
    pub dynamics: DynamicsConfig,
    /// Episode length in seconds.
    pub horizon: f64,
    /// Damping of the classical controller.
    pub damping: f64,
    pub init: InitSpec,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            horizon: DEFAULT_HORIZON,
            damping: PotentialParams::DEFAULT_DAMPING,
            init: InitSpec::Line,
        }
    }
}

impl EnvSettings {
    pub fn env_config(&self, poly: Polygon, n: usize) -> Result<EnvConfig> {
        let mut cfg = EnvConfig::new(poly, n)
            .with_horizon(self.horizon)
            .with_dynamics(self.dynamics)
            .with_init(self.init.clone());
        cfg.damping = self.damping;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a JSON configuration file.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}
