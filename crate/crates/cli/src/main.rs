use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use skyrelay::baselines::PolicyKind;
use skyrelay::harness::{self, SweepSpec};
use skyrelay::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "skyrelay", version = skyrelay::VERSION, about = "Secure UAV-relay resource allocation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted. SKYRELAY_<KEY> variables override keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a PPO policy and write checkpoints and the training log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training episodes, overriding the configuration.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Greedy evaluation of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        /// Episodes whose per-step traces are written.
        #[arg(long, default_value_t = harness::DEFAULT_TRACE_EPISODES)]
        traces: usize,
    },
    /// Evaluate a heuristic policy.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// nearest_with_uavs, no_uav or random.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = harness::DEFAULT_EVAL_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = harness::DEFAULT_TRACE_EPISODES)]
        traces: usize,
    },
    /// RL against the heuristics across GU counts, resource tiers and grid sizes.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Policy for cells matching the base configuration; other cells are trained.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluation episodes per cell.
        #[arg(long, default_value_t = 300)]
        episodes: usize,
        /// Axes, e.g. "gus=10,15,20;uavs=4,5,6;tiers=low,medium,high;grids=100,200,400".
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Cross-check the constraint evaluator against brute force on tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = harness::DEFAULT_ORACLE_INSTANCES)]
        instances: usize,
    },
    /// Re-run the subcommand recorded in a manifest and compare the artifacts.
    Replay {
        /// Directory holding manifest.json.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: Option<&Path>) -> skyrelay::Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::defaults_with_env()?,
    })
}

fn run(cli: Cli) -> skyrelay::Result<serde_json::Value> {
    let v = match cli.cmd {
        Cmd::Train { common, episodes } => {
            let mut cfg = load(common.config.as_deref())?;
            if let Some(n) = episodes {
                cfg.ppo.episodes = n;
            }
            serde_json::to_value(harness::cmd_train(&cfg, common.seed, &common.out)?)?
        }
        Cmd::Evaluate {
            common,
            checkpoint,
            episodes,
            traces,
        } => {
            let cfg = load(common.config.as_deref())?;
            let m = harness::cmd_evaluate(&cfg, &checkpoint, episodes, common.seed, traces, &common.out)?;
            serde_json::to_value(m)?
        }
        Cmd::Baseline {
            common,
            policy,
            episodes,
            traces,
        } => {
            let cfg = load(common.config.as_deref())?;
            let kind = PolicyKind::parse(&policy).ok_or_else(|| Error::Other(format!("unknown policy `{policy}`")))?;
            serde_json::to_value(harness::cmd_baseline(&cfg, kind, episodes, common.seed, traces, &common.out)?)?
        }
        Cmd::Compare {
            common,
            checkpoint,
            episodes,
            sweep,
        } => {
            let cfg = load(common.config.as_deref())?;
            let sweep = match sweep {
                Some(s) => SweepSpec::parse(&s)?,
                None => SweepSpec::default(),
            };
            let r = harness::cmd_compare(&cfg, common.seed, &sweep, episodes, checkpoint.as_deref(), &common.out)?;
            let gaps: Vec<_> = r
                .cells
                .iter()
                .map(|c| {
                    json!({
                        "axis": c.axis,
                        "value": c.value,
                        "latency_gap_pct": c.latency_gap_pct(),
                        "security_gap_pct": c.security_gap_pct(),
                        "disconnected": {"rl": c.rl.disconnected, "nearest_with_uavs": c.nearest_with_uavs.disconnected, "no_uav": c.no_uav.disconnected},
                    })
                })
                .collect();
            json!({ "cells": gaps })
        }
        Cmd::Oracle { common, instances } => {
            let cfg = load(common.config.as_deref())?;
            let r = harness::cmd_oracle(&cfg, common.seed, instances, &common.out)?;
            let inv: Vec<_> = r
                .invariants
                .iter()
                .map(|i| json!({"name": i.name, "passed": i.passed, "detail": i.detail}))
                .collect();
            let passed = r.passed();
            let v = json!({ "passed": passed, "instances": r.instances.len(), "invariants": inv });
            if !passed {
                return Err(Error::Other(format!("oracle cross-check failed: {v}")));
            }
            v
        }
        Cmd::Replay { from, out } => {
            let r = harness::cmd_replay(&from, &out)?;
            if !r.identical() {
                return Err(Error::Other(format!(
                    "replay differs: mismatched {:?}, missing {:?}",
                    r.mismatched, r.missing
                )));
            }
            serde_json::to_value(r)?
        }
    };
    Ok(v)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("json value"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string()}}));
            ExitCode::FAILURE
        }
    }
}
