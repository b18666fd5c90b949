use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::svg::{frame_steps, render_frame, View};
use super::{create_dir, write_file, write_json, ControllerSpec, DomainSpec, EnvSettings};
use crate::controller::{run_episode, Episode};
use crate::env::{success_and_convergence, CoverageEnv, DEFAULT_SUCCESS_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{Polygon, Vec2};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const POTENTIAL_FILE: &str = "potential.csv";
pub const POLYGON_FILE: &str = "polygon.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const FRAMES_DIR: &str = "frames";

const TRAJECTORY_HEADER: &str = "step,agent,p_x,p_y,v_x,v_y,a_x,a_y,reward";
const POTENTIAL_HEADER: &str = "step,time_s,phi";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub domain: DomainSpec,
    pub n: usize,
    #[serde(flatten)]
    pub env: EnvSettings,
    /// Seed of the initial line placement.
    pub seed: u64,
    pub controller: ControllerSpec,
    /// Sample policy actions with this seed instead of using the mean.
    pub sample_seed: Option<u64>,
    pub threshold: f64,
    pub frames: bool,
    /// Seconds between frames.
    pub frame_interval: f64,
    /// Length of the dashed tails in seconds.
    pub tail: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::UnitSquare,
            n: 9,
            env: EnvSettings::default(),
            seed: 0,
            controller: ControllerSpec::Classical,
            sample_seed: None,
            threshold: DEFAULT_SUCCESS_THRESHOLD,
            frames: true,
            frame_interval: 1.0,
            tail: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub controller: String,
    pub n: usize,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    pub success: bool,
    pub convergence_time: Option<f64>,
    pub initial_potential: f64,
    pub final_potential: f64,
    pub total_return: f64,
    pub frames: usize,
}

/// Runs one episode and writes the trajectory, potential trace, polygon,
/// summary and (optionally) SVG frames into `out`.
pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path) -> Result<SimulateReport> {
    let poly = cfg.domain.build()?;
    let env_cfg = cfg.env.env_config(poly.clone(), cfg.n)?;
    if !(cfg.frame_interval > 0.0) || !(cfg.tail >= 0.0) {
        return Err(Error::invalid("frame_interval must be positive and tail non-negative"));
    }
    let mut controller = cfg.controller.build(cfg.sample_seed)?;
    let mut env = CoverageEnv::new(env_cfg)?;
    env.reset(cfg.seed)?;
    let episode = run_episode(&mut env, controller.as_mut())?;
    let dt = cfg.env.dynamics.dt;

    create_dir(out)?;
    write_file(&out.join(TRAJECTORY_FILE), trajectory_csv(&episode))?;
    write_file(&out.join(POTENTIAL_FILE), potential_csv(&episode.potential, dt))?;
    write_json(&out.join(POLYGON_FILE), &poly.vertices())?;

    let mut frames = 0;
    if cfg.frames {
        let positions: Vec<Vec<Vec2>> = episode.states.iter().map(|s| s.positions().collect()).collect();
        frames = write_frames(&out.join(FRAMES_DIR), &poly, &positions, dt, cfg.frame_interval, cfg.tail)?;
    }

    let conv = success_and_convergence(&episode.potential, dt, cfg.threshold);
    let report = SimulateReport {
        controller: controller.name().to_string(),
        n: cfg.n,
        seed: cfg.seed,
        steps: episode.actions.len(),
        dt,
        success: conv.success,
        convergence_time: conv.time,
        initial_potential: episode.potential[0],
        final_potential: *episode.potential.last().expect("trace has at least one entry"),
        total_return: episode.total_return(),
        frames,
    };
    write_json(&out.join(SUMMARY_FILE), &report)?;
    Ok(report)
}

/// `time = step * dt`, rounded to 1e-9 s so the column prints cleanly.
pub(crate) fn step_time(step: usize, dt: f64) -> f64 {
    (step as f64 * dt * 1e9).round() / 1e9
}

pub(crate) fn trajectory_csv(episode: &Episode) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (step, state) in episode.states.iter().enumerate() {
        for (i, a) in state.agents.iter().enumerate() {
            let _ = write!(s, "{step},{i},{},{},{},{}", a.p.x, a.p.y, a.v.x, a.v.y);
            match (episode.actions.get(step), episode.rewards.get(step)) {
                (Some(acts), Some(rew)) => {
                    let _ = writeln!(s, ",{},{},{}", acts[i].x, acts[i].y, rew[i]);
                }
                _ => s.push_str(",,,\n"),
            }
        }
    }
    s
}

pub(crate) fn potential_csv(trace: &[f64], dt: f64) -> String {
    let mut s = String::from(POTENTIAL_HEADER);
    s.push('\n');
    for (k, phi) in trace.iter().enumerate() {
        let _ = writeln!(s, "{k},{},{phi}", step_time(k, dt));
    }
    s
}

/// Writes frames every `interval` seconds; returns how many were written.
pub(crate) fn write_frames(
    dir: &Path,
    poly: &Polygon,
    positions: &[Vec<Vec2>],
    dt: f64,
    interval: f64,
    tail: f64,
) -> Result<usize> {
    create_dir(dir)?;
    let n = positions.first().map_or(0, Vec::len);
    let view = View::fit(poly, positions.iter().flatten());
    let every = ((interval / dt).round() as usize).max(1);
    let tail_steps = (tail / dt).round() as usize;
    let marker = 0.25 * poly.coverage_radius(n.max(1))?;
    let steps = frame_steps(positions.len().saturating_sub(1), every);
    for (idx, &k) in steps.iter().enumerate() {
        let svg = render_frame(&view, poly, positions, k, tail_steps, step_time(k, dt), marker);
        write_file(&dir.join(format!("frame_{idx:04}.svg")), svg)?;
    }
    Ok(steps.len())
}

fn parse_field(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("{}:{}: cannot parse {field:?} as a number", path.display(), line + 1)))
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(Error::invalid(format!("{}: expected header {header:?}", path.display()))),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k, l.split(',').map(str::to_string).collect()))
        .collect())
}

/// Positions `[step][agent]` from a trajectory CSV.
pub(crate) fn read_trajectory(path: &Path) -> Result<Vec<Vec<Vec2>>> {
    let mut out: Vec<Vec<Vec2>> = Vec::new();
    for (line, fields) in read_rows(path, TRAJECTORY_HEADER)? {
        if fields.len() != 9 {
            return Err(Error::invalid(format!("{}:{}: expected 9 fields", path.display(), line + 1)));
        }
        let step = parse_field(path, line, &fields[0])? as usize;
        let agent = parse_field(path, line, &fields[1])? as usize;
        let p = Vec2::new(parse_field(path, line, &fields[2])?, parse_field(path, line, &fields[3])?);
        if step == out.len() {
            out.push(Vec::new());
        }
        if step + 1 != out.len() || agent != out[step].len() {
            return Err(Error::invalid(format!("{}:{}: rows out of order", path.display(), line + 1)));
        }
        out[step].push(p);
    }
    if out.is_empty() || out.iter().any(|row| row.len() != out[0].len()) {
        return Err(Error::invalid(format!("{}: empty or ragged trajectory", path.display())));
    }
    Ok(out)
}

/// `(time_s, phi)` pairs from a potential CSV.
pub(crate) fn read_potential(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = read_rows(path, POTENTIAL_HEADER)?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no potential samples", path.display())));
    }
    rows.into_iter()
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(Error::invalid(format!("{}:{}: expected 3 fields", path.display(), line + 1)));
            }
            Ok((parse_field(path, line, &f[1])?, parse_field(path, line, &f[2])?))
        })
        .collect()
}
