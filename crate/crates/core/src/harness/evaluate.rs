use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::simulate::potential_csv;
use super::{create_dir, load_actor, write_file, ControllerSpec, DomainSpec, EnvSettings};
use crate::controller::{run_episode, ClassicalController, Controller, PolicyController, ZeroController};
use crate::env::{success_and_convergence, CoverageEnv, EnvConfig, DEFAULT_SUCCESS_THRESHOLD};
use crate::error::{Error, Result};
use crate::nets::ActorNet;

pub const TABLE_FILE: &str = "table.csv";
pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const TRACES_DIR: &str = "traces";

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// Increases of the potential smaller than this are treated as noise when
/// looking for overshoot.
const OVERSHOOT_TOLERANCE: f64 = 1e-9;

/// Either an explicit list or `count` consecutive seeds from `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (0..*count).map(|k| start.wrapping_add(k)).collect(),
        }
    }

    /// Same number of seeds, starting at `start`.
    pub fn starting_at(&self, start: u64) -> Self {
        let count = match self {
            SeedSpec::List(v) => v.len() as u64,
            SeedSpec::Range { count, .. } => *count,
        };
        SeedSpec::Range { start, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub controllers: Vec<ControllerSpec>,
    pub domains: Vec<DomainSpec>,
    pub agent_counts: Vec<usize>,
    pub seeds: SeedSpec,
    #[serde(flatten)]
    pub env: EnvSettings,
    pub threshold: f64,
    /// Threads running episodes; results do not depend on this.
    pub workers: usize,
    /// Also store every potential trace under `traces/`.
    pub write_traces: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            controllers: vec![ControllerSpec::Classical],
            domains: vec![DomainSpec::UnitSquare],
            agent_counts: vec![9],
            seeds: SeedSpec::Range { start: 0, count: 200 },
            env: EnvSettings::default(),
            threshold: DEFAULT_SUCCESS_THRESHOLD,
            workers: 1,
            write_traces: false,
        }
    }
}

/// Outcome of one (controller, domain, n, seed) episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub controller: String,
    pub domain: String,
    pub n: usize,
    pub seed: u64,
    pub success: bool,
    pub convergence_time: Option<f64>,
    pub final_potential: f64,
    pub overshoot: bool,
    pub total_return: f64,
}

/// Aggregate of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub controller: String,
    pub domain: String,
    pub n: usize,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Over successful runs only.
    pub mean_convergence: Option<f64>,
    pub median_convergence: Option<f64>,
    /// Fraction of runs whose potential rises again after the swarm entered
    /// the domain.
    pub overshoot_fraction: f64,
}

/// Wilson score interval at 95% for `successes` out of `runs`.
pub fn wilson_interval(successes: usize, runs: usize) -> (f64, f64) {
    if runs == 0 {
        return (0.0, 1.0);
    }
    let n = runs as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Whether `trace` increases anywhere after index `entry`.
pub fn overshoot(trace: &[f64], entry: Option<usize>) -> bool {
    let Some(k0) = entry else {
        return false;
    };
    trace.get(k0..).is_some_and(|t| t.windows(2).any(|w| w[1] > w[0] + OVERSHOOT_TOLERANCE))
}

enum Prepared {
    Classical,
    Zero,
    Policy(Box<ActorNet>, String),
}

impl Prepared {
    fn new(spec: &ControllerSpec) -> Result<Self> {
        Ok(match spec {
            ControllerSpec::Classical => Prepared::Classical,
            ControllerSpec::Zero => Prepared::Zero,
            ControllerSpec::Checkpoint(path) => Prepared::Policy(Box::new(load_actor(path)?), spec.label()),
        })
    }

    fn controller(&self) -> Box<dyn Controller> {
        match self {
            Prepared::Classical => Box::new(ClassicalController),
            Prepared::Zero => Box::new(ZeroController),
            Prepared::Policy(actor, name) => {
                Box::new(PolicyController::deterministic((**actor).clone()).with_name(name.clone()))
            }
        }
    }
}

struct Job {
    cell: usize,
    controller: usize,
    env: usize,
    seed: u64,
}

struct JobResult {
    record: RunRecord,
    trace: Vec<f64>,
}

fn run_job(
    job: &Job,
    controllers: &[(Prepared, String)],
    envs: &[(EnvConfig, String)],
    threshold: f64,
) -> Result<JobResult> {
    let (cfg, domain) = &envs[job.env];
    let (prepared, label) = &controllers[job.controller];
    let mut env = CoverageEnv::new(cfg.clone())?;
    env.reset(job.seed)?;
    let mut ctrl = prepared.controller();
    let ep = run_episode(&mut env, ctrl.as_mut())?;
    let conv = success_and_convergence(&ep.potential, cfg.dynamics.dt, threshold);
    let entry = ep.states.iter().position(|s| s.positions().all(|p| cfg.poly.contains(p)));
    Ok(JobResult {
        record: RunRecord {
            controller: label.clone(),
            domain: domain.clone(),
            n: cfg.n,
            seed: job.seed,
            success: conv.success,
            convergence_time: conv.time,
            final_potential: *ep.potential.last().expect("non-empty trace"),
            overshoot: overshoot(&ep.potential, entry),
            total_return: ep.total_return(),
        },
        trace: ep.potential,
    })
}

/// Runs every (controller, domain, n, seed) combination and writes
/// `table.csv`, `runs.csv` and `summary.txt` into `out`.
pub fn cmd_evaluate(cfg: &EvaluateConfig, out: &Path) -> Result<Vec<CellSummary>> {
    if cfg.controllers.is_empty() || cfg.domains.is_empty() || cfg.agent_counts.is_empty() {
        return Err(Error::invalid("controllers, domains and agent_counts must be non-empty"));
    }
    let seeds = cfg.seeds.seeds();
    let controllers: Vec<(Prepared, String)> =
        cfg.controllers.iter().map(|c| Ok((Prepared::new(c)?, c.label()))).collect::<Result<_>>()?;
    let mut envs = Vec::new();
    for d in &cfg.domains {
        let poly = d.build()?;
        for &n in &cfg.agent_counts {
            envs.push((cfg.env.env_config(poly.clone(), n)?, d.label()));
        }
    }
    let mut jobs = Vec::new();
    for c in 0..controllers.len() {
        for e in 0..envs.len() {
            let cell = c * envs.len() + e;
            jobs.extend(seeds.iter().map(|&seed| Job { cell, controller: c, env: e, seed }));
        }
    }

    let workers = cfg.workers.clamp(1, jobs.len().max(1));
    let mut results: Vec<Option<Result<JobResult>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (jobs, controllers, envs) = (&jobs, &controllers, &envs);
                scope.spawn(move || {
                    (w..jobs.len())
                        .step_by(workers)
                        .map(|k| (k, run_job(&jobs[k], controllers, envs, cfg.threshold)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("evaluation worker panicked") {
                results[k] = Some(r);
            }
        }
    });
    let results: Vec<JobResult> = results.into_iter().map(|r| r.expect("every job ran")).collect::<Result<_>>()?;

    let cells = controllers.len() * envs.len();
    let mut summaries = Vec::with_capacity(cells);
    for cell in 0..cells {
        let records: Vec<&RunRecord> =
            jobs.iter().zip(&results).filter(|(j, _)| j.cell == cell).map(|(_, r)| &r.record).collect();
        summaries.push(summarize(&records));
    }

    create_dir(out)?;
    write_file(&out.join(RUNS_FILE), runs_csv(results.iter().map(|r| &r.record)))?;
    write_file(&out.join(TABLE_FILE), table_csv(&summaries))?;
    write_file(&out.join(SUMMARY_TEXT_FILE), summary_text(&summaries, cfg.threshold))?;
    if cfg.write_traces {
        let dir = out.join(TRACES_DIR);
        create_dir(&dir)?;
        for (job, r) in jobs.iter().zip(&results) {
            let rec = &r.record;
            let name = format!("{}_{}_n{}_s{}.csv", rec.controller, rec.domain, rec.n, rec.seed);
            write_file(&dir.join(name), potential_csv(&r.trace, envs[job.env].0.dynamics.dt))?;
        }
    }
    Ok(summaries)
}

fn summarize(records: &[&RunRecord]) -> CellSummary {
    let first = records[0];
    let runs = records.len();
    let mut times: Vec<f64> = records.iter().filter_map(|r| r.convergence_time).collect();
    let successes = records.iter().filter(|r| r.success).count();
    times.sort_by(f64::total_cmp);
    let mean = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
    let median = (!times.is_empty()).then(|| {
        let m = times.len() / 2;
        if times.len() % 2 == 1 {
            times[m]
        } else {
            0.5 * (times[m - 1] + times[m])
        }
    });
    let (wilson_low, wilson_high) = wilson_interval(successes, runs);
    CellSummary {
        controller: first.controller.clone(),
        domain: first.domain.clone(),
        n: first.n,
        runs,
        successes,
        success_rate: successes as f64 / runs as f64,
        wilson_low,
        wilson_high,
        mean_convergence: mean,
        median_convergence: median,
        overshoot_fraction: records.iter().filter(|r| r.overshoot).count() as f64 / runs as f64,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn runs_csv<'a>(records: impl Iterator<Item = &'a RunRecord>) -> String {
    let mut s = String::from("controller,domain,n,seed,success,convergence_s,final_phi,overshoot,total_return\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.controller,
            r.domain,
            r.n,
            r.seed,
            r.success as u8,
            opt(r.convergence_time),
            r.final_potential,
            r.overshoot as u8,
            r.total_return
        );
    }
    s
}

fn table_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from(
        "controller,domain,n,runs,successes,success_rate,wilson_low,wilson_high,\
         mean_convergence_s,median_convergence_s,overshoot_fraction\n",
    );
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.controller,
            c.domain,
            c.n,
            c.runs,
            c.successes,
            c.success_rate,
            c.wilson_low,
            c.wilson_high,
            opt(c.mean_convergence),
            opt(c.median_convergence),
            c.overshoot_fraction
        );
    }
    s
}

fn summary_text(cells: &[CellSummary], threshold: f64) -> String {
    let mut s = format!("success: potential stays below {threshold} before the horizon\n\n");
    let _ = writeln!(
        s,
        "{:<14} {:<16} {:>3} {:>6} {:>9} {:>17} {:>10} {:>10} {:>10}",
        "controller", "domain", "n", "runs", "success", "95% CI", "mean t", "median t", "overshoot"
    );
    let fmt_t = |t: Option<f64>| t.map(|t| format!("{t:.2} s")).unwrap_or_else(|| "-".into());
    for c in cells {
        let _ = writeln!(
            s,
            "{:<14} {:<16} {:>3} {:>6} {:>8.1}% {:>17} {:>10} {:>10} {:>9.1}%",
            c.controller,
            c.domain,
            c.n,
            c.runs,
            100.0 * c.success_rate,
            format!("[{:.1}%, {:.1}%]", 100.0 * c.wilson_low, 100.0 * c.wilson_high),
            fmt_t(c.mean_convergence),
            fmt_t(c.median_convergence),
            100.0 * c.overshoot_fraction
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::InitSpec;
    use crate::geometry::Vec2;

    fn quick(controller: ControllerSpec, n: usize, seeds: u64) -> EvaluateConfig {
        let mut cfg = EvaluateConfig {
            controllers: vec![controller],
            agent_counts: vec![n],
            seeds: SeedSpec::Range { start: 0, count: seeds },
            ..EvaluateConfig::default()
        };
        cfg.env.horizon = 2.0;
        cfg
    }

    #[test]
    fn wilson_matches_hand_values() {
        // 8 of 10: centre (0.8 + 0.19207)/1.38415, half-width 0.27112
        let (lo, hi) = wilson_interval(8, 10);
        assert!((lo - 0.4901624).abs() < 1e-6, "{lo}");
        assert!((hi - 0.9433178).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 50);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn overshoot_detection() {
        assert!(!overshoot(&[5.0, 4.0, 3.0, 1.0], Some(0)));
        assert!(overshoot(&[5.0, 4.0, 4.5, 1.0], Some(1)));
        assert!(!overshoot(&[5.0, 6.0, 4.0, 1.0], Some(1)));
        assert!(!overshoot(&[1.0, 2.0], None));
    }

    #[test]
    fn zero_controller_never_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cells = cmd_evaluate(&quick(ControllerSpec::Zero, 4, 5), dir.path()).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].runs, cells[0].successes), (5, 0));
        assert_eq!(cells[0].mean_convergence, None);
    }

    #[test]
    fn subcover_start_always_succeeds_at_time_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(ControllerSpec::Classical, 9, 3);
        cfg.env.init = InitSpec::Positions(
            (0..9).map(|k| Vec2::new((1 + 2 * (k % 3)) as f64 / 6.0, (1 + 2 * (k / 3)) as f64 / 6.0)).collect(),
        );
        let cells = cmd_evaluate(&cfg, dir.path()).unwrap();
        assert_eq!(cells[0].success_rate, 1.0);
        assert_eq!(cells[0].mean_convergence, Some(0.0));
        assert_eq!(cells[0].median_convergence, Some(0.0));
        assert_eq!(cells[0].overshoot_fraction, 0.0);
    }

    #[test]
    fn workers_do_not_change_output() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = quick(ControllerSpec::Classical, 3, 6);
        cfg.agent_counts = vec![2, 3];
        cmd_evaluate(&cfg, a.path()).unwrap();
        cfg.workers = 3;
        cmd_evaluate(&cfg, b.path()).unwrap();
        for f in [TABLE_FILE, RUNS_FILE, SUMMARY_TEXT_FILE] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn stored_traces_rescan_to_the_same_result() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(ControllerSpec::Classical, 3, 4);
        cfg.env.horizon = 10.0;
        cfg.write_traces = true;
        cmd_evaluate(&cfg, dir.path()).unwrap();
        let runs = std::fs::read_to_string(dir.path().join(RUNS_FILE)).unwrap();
        for line in runs.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let path = dir.path().join(TRACES_DIR).join(format!("{}_{}_n{}_s{}.csv", f[0], f[1], f[2], f[3]));
            let trace: Vec<f64> =
                crate::harness::simulate::read_potential(&path).unwrap().into_iter().map(|(_, p)| p).collect();
            let conv = success_and_convergence(&trace, 0.02, cfg.threshold);
            assert_eq!(f[4], if conv.success { "1" } else { "0" });
            assert_eq!(f[5], opt(conv.time));
        }
    }

    #[test]
    fn seed_specs() {
        let list: SeedSpec = serde_json::from_str("[3, 9]").unwrap();
        assert_eq!(list.seeds(), vec![3, 9]);
        let range: SeedSpec = serde_json::from_str(r#"{"start": 5, "count": 3}"#).unwrap();
        assert_eq!(range.seeds(), vec![5, 6, 7]);
        assert_eq!(list.starting_at(10).seeds(), vec![10, 11]);
    }
}
