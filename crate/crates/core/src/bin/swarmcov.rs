use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use swarmcov::harness::{
    cmd_evaluate, cmd_export, cmd_simulate, cmd_train, read_config, ControllerSpec, EvaluateConfig, ExportConfig,
    SimulateConfig, TrainRun,
};
use swarmcov::trainer::TrainConfig;

/// Multi-agent coverage control: simulate, train, evaluate and export.
#[derive(Parser, Debug)]
#[command(name = "swarmcov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one episode and write trajectory, potential trace and SVG frames.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// `classical`, `zero` or a checkpoint path.
        #[arg(long)]
        controller: Option<ControllerSpec>,
    },
    /// Success rates and convergence times over seeds, domains and agent counts.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Evaluate only this controller.
        #[arg(long)]
        controller: Option<ControllerSpec>,
    },
    /// Behaviour-cloning warm start followed by MAPPO.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Merge potential traces and re-render stored runs.
    Export {
        #[command(flatten)]
        common: Common,
        /// Run directory to include (repeatable).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
}

fn load<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    Ok(match path {
        Some(p) => read_config(p)?,
        None => T::default(),
    })
}

fn out_dir(common: &Common, mode: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| Path::new("runs").join(mode))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, controller } => {
            let mut cfg: SimulateConfig = load(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(c) = controller {
                cfg.controller = c;
            }
            let out = out_dir(&common, "simulate");
            let r = cmd_simulate(&cfg, &out).context("simulation failed")?;
            let conv = r.convergence_time.map(|t| format!("{t:.2} s")).unwrap_or_else(|| "-".into());
            println!(
                "{} n={} seed={}: success={} convergence={} final potential={:.6}",
                r.controller, r.n, r.seed, r.success, conv, r.final_potential
            );
            println!("wrote {}", out.display());
        }
        Command::Evaluate { common, controller } => {
            let mut cfg: EvaluateConfig = load(&common.config)?;
            if let Some(seed) = common.seed {
                cfg.seeds = cfg.seeds.starting_at(seed);
            }
            if let Some(c) = controller {
                cfg.controllers = vec![c];
            }
            let out = out_dir(&common, "evaluate");
            cmd_evaluate(&cfg, &out).context("evaluation failed")?;
            let summary = std::fs::read_to_string(out.join(swarmcov::harness::SUMMARY_TEXT_FILE))?;
            print!("{summary}");
            println!("wrote {}", out.display());
        }
        Command::Train { common, resume } => {
            let mut config: Option<TrainConfig> = match (&common.config, &resume) {
                (Some(p), _) => Some(read_config(p)?),
                (None, Some(_)) => None,
                (None, None) => Some(TrainConfig::default()),
            };
            if let (Some(seed), Some(cfg)) = (common.seed, config.as_mut()) {
                cfg.seed = seed;
            }
            if common.seed.is_some() && config.is_none() {
                anyhow::bail!("--seed with --resume needs --config; the stored seed is used otherwise");
            }
            let out = out_dir(&common, "train");
            let r = cmd_train(&TrainRun { config, resume }, &out)
                .with_context(|| format!("training failed; the last good state, if any, is in {}", out.display()))?;
            if let (Some(first), Some(last)) = (r.pretrain.bc_curve.first(), r.pretrain.bc_curve.last()) {
                println!("behaviour cloning loss {first:.6} -> {last:.6}");
            }
            if let Some(m) = r.metrics.last() {
                println!("iteration {}: mean return {:.3}", m.iteration, m.mean_return);
            }
            println!("wrote {}", r.final_checkpoint.display());
        }
        Command::Export { common, inputs } => {
            let mut cfg: ExportConfig = load(&common.config)?;
            cfg.runs.extend(inputs);
            let out = out_dir(&common, "export");
            let r = cmd_export(&cfg, &out).context("export failed")?;
            println!("merged {} runs over {} time points, {} frames", r.labels.len(), r.rows, r.frames);
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
