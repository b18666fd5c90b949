use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{create_dir, write_file, write_json};
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::trainer::{IterationMetrics, PretrainReport, TrainConfig, Trainer};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PRETRAIN_FILE: &str = "pretrain.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const FINAL_CHECKPOINT: &str = "final.json";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// A training invocation: a fresh run from `config`, or a continuation of
/// `resume` (whose stored configuration is used unless `config` is given).
#[derive(Debug, Clone, Default)]
pub struct TrainRun {
    pub config: Option<TrainConfig>,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub start_iteration: usize,
    pub pretrain: PretrainReport,
    pub metrics: Vec<IterationMetrics>,
    pub final_checkpoint: PathBuf,
}

/// Pre-trains (fresh runs only) and runs the remaining iterations, keeping
/// `metrics.csv` current after every iteration. If training diverges the
/// last good state is saved to `last_good.json` and the error returned.
pub fn cmd_train(run: &TrainRun, out: &Path) -> Result<TrainReport> {
    let mut trainer = match &run.resume {
        Some(path) => Trainer::from_checkpoint(&Checkpoint::load(path)?, run.config.clone())?,
        None => Trainer::new(run.config.clone().unwrap_or_default())?,
    };
    let start_iteration = trainer.iteration();
    create_dir(out)?;
    write_json(&out.join(CONFIG_FILE), trainer.config())?;

    let mut pretrain = PretrainReport::default();
    if run.resume.is_none() && trainer.config().pretrain.is_some() {
        pretrain = trainer.pretrain()?;
        write_file(&out.join(PRETRAIN_FILE), pretrain_csv(&pretrain))?;
    }

    let metrics_path = out.join(METRICS_FILE);
    let mut csv = match run.resume {
        Some(_) => earlier_rows(&metrics_path, start_iteration)?,
        None => format!("{}\n", IterationMetrics::CSV_HEADER),
    };
    write_file(&metrics_path, &csv)?;

    let every = trainer.config().checkpoint_every;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        let m = match trainer.run_iteration() {
            Ok(m) => m,
            Err(e) => {
                trainer.to_checkpoint()?.save(&out.join(LAST_GOOD_CHECKPOINT))?;
                return Err(e);
            }
        };
        let _ = writeln!(csv, "{}", m.csv_row());
        write_file(&metrics_path, &csv)?;
        metrics.push(m);
        if every > 0 && trainer.iteration() % every == 0 {
            let dir = out.join(CHECKPOINT_DIR);
            create_dir(&dir)?;
            trainer.to_checkpoint()?.save(&dir.join(format!("iter_{:04}.json", trainer.iteration())))?;
        }
    }
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    trainer.to_checkpoint()?.save(&final_checkpoint)?;
    Ok(TrainReport { start_iteration, pretrain, metrics, final_checkpoint })
}

fn pretrain_csv(r: &PretrainReport) -> String {
    let mut s = String::from("epoch,bc_loss,critic_loss\n");
    let cell = |c: &[f64], k: usize| c.get(k).map(f64::to_string).unwrap_or_default();
    for k in 0..r.bc_curve.len().max(r.critic_curve.len()) {
        let _ = writeln!(s, "{k},{},{}", cell(&r.bc_curve, k), cell(&r.critic_curve, k));
    }
    s
}

/// Header plus the rows of an existing metrics file that precede `start`.
fn earlier_rows(path: &Path, start: usize) -> Result<String> {
    let mut s = format!("{}\n", IterationMetrics::CSV_HEADER);
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(s),
        Err(e) => return Err(Error::io(path, e)),
    };
    for line in text.lines().skip(1) {
        let iteration = line.split(',').next().and_then(|f| f.parse::<usize>().ok());
        match iteration {
            Some(k) if k < start => {
                s.push_str(line);
                s.push('\n');
            }
            Some(_) => {}
            None => return Err(Error::invalid(format!("{}: malformed metrics row {line:?}", path.display()))),
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::geometry::Polygon;
    use crate::nets::{ActorConfig, CriticConfig};
    use crate::neural::Parameters;
    use crate::trainer::{FitConfig, PretrainConfig};

    fn smoke(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            envs: vec![EnvConfig::new(Polygon::unit_square(), 3).with_horizon(0.4)],
            trajectories_per_env: 2,
            update_epochs: 2,
            minibatch_size: 32,
            actor: ActorConfig { lstm_hidden: 4, trunk: vec![8], init_log_std: -0.5 },
            critic: CriticConfig { d_model: 4, d_k: 4, d_v: 4, value_hidden: vec![8] },
            checkpoint_every: 2,
            ..TrainConfig::default()
        }
    }

    fn rows(dir: &Path) -> usize {
        fs::read_to_string(dir.join(METRICS_FILE)).unwrap().lines().count() - 1
    }

    #[test]
    fn writes_one_row_per_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_train(&TrainRun { config: Some(smoke(5)), resume: None }, dir.path()).unwrap();
        assert_eq!(report.metrics.len(), 5);
        assert_eq!(rows(dir.path()), 5);
        assert!(dir.path().join(FINAL_CHECKPOINT).exists());
        let ckpts = fs::read_dir(dir.path().join(CHECKPOINT_DIR)).unwrap().count();
        assert_eq!(ckpts, 2);
    }

    #[test]
    fn resume_reproduces_metrics() {
        let full = tempfile::tempdir().unwrap();
        cmd_train(&TrainRun { config: Some(smoke(4)), resume: None }, full.path()).unwrap();
        let part = tempfile::tempdir().unwrap();
        cmd_train(&TrainRun { config: Some(smoke(4)), resume: None }, part.path()).unwrap();
        let mid = part.path().join(CHECKPOINT_DIR).join("iter_0002.json");
        let report = cmd_train(&TrainRun { config: None, resume: Some(mid) }, part.path()).unwrap();
        assert_eq!(report.start_iteration, 2);
        assert_eq!(report.metrics.len(), 2);
        for f in [METRICS_FILE, FINAL_CHECKPOINT] {
            assert_eq!(fs::read(full.path().join(f)).unwrap(), fs::read(part.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn bc_only_lowers_the_loss() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke(0);
        cfg.envs[0].horizon = 2.0;
        cfg.pretrain = Some(PretrainConfig {
            episodes: 2,
            bc: Some(FitConfig { epochs: 10, batch_size: 32, lr: 1e-2, ..FitConfig::default() }),
            ..PretrainConfig::default()
        });
        let report = cmd_train(&TrainRun { config: Some(cfg), resume: None }, dir.path()).unwrap();
        let curve = &report.pretrain.bc_curve;
        assert!(curve.last().unwrap() < &curve[0], "{curve:?}");
        assert_eq!(rows(dir.path()), 0);
        let text = fs::read_to_string(dir.path().join(PRETRAIN_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1 + curve.len());
    }

    #[test]
    fn divergence_keeps_last_good_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { entropy_coeff: 1e300, ..smoke(3) };
        let err = cmd_train(&TrainRun { config: Some(cfg), resume: None }, dir.path()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
        let ckpt = Checkpoint::load(&dir.path().join(LAST_GOOD_CHECKPOINT)).unwrap();
        let trainer = Trainer::from_checkpoint(&ckpt, None).unwrap();
        assert!(trainer.actor.all_finite());
        assert!(!dir.path().join(FINAL_CHECKPOINT).exists());
    }

    #[test]
    fn bad_resume_path_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let run = TrainRun { config: None, resume: Some(dir.path().join("missing.json")) };
        assert!(cmd_train(&run, dir.path()).unwrap_err().to_string().contains("missing.json"));
    }
}
