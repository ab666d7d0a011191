//! Experiment subcommands: training, greedy evaluation, baselines, sweeps,
//! oracle cross-checks and replay from a manifest.
//!
//! Every subcommand writes into one output directory and finishes by writing
//! `manifest.json`, which records the full configuration, the arguments and
//! the hash of each artifact. [`cmd_replay`] re-runs a manifest and compares
//! the artifacts byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{HeuristicPolicy, PolicyKind};
use crate::config::{ExperimentConfig, ScenarioConfig};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::objective::{ConstraintFamily, DecisionVector, FamilyCounts, StepOutcome};
use crate::oracle::{cross_check, default_evaluator, CrossCheckReport};
use crate::persistence::{sha256_hex, ArtifactWriter, Checkpoint, Manifest};
use crate::ppo::train::{policy_spec, train};
use crate::ppo::{Policy, TrainingLog};
use crate::scenario::instance_rng;

/// Scenario stream offset of evaluation episodes, disjoint from training streams.
pub const EVAL_STREAM_BASE: u64 = 1 << 32;
/// Stream offset of heuristic-policy RNGs during evaluation.
pub const BASELINE_STREAM_BASE: u64 = 1 << 48;
pub const DEFAULT_EVAL_EPISODES: usize = 1000;
pub const DEFAULT_TRACE_EPISODES: usize = 10;
pub const SATISFACTION_TARGET: f64 = 0.95;

/// Device-resource levels: GU clock, battery and compute ranges scaled together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceTier {
    Low,
    Medium,
    High,
}

impl ResourceTier {
    pub const ALL: [ResourceTier; 3] = [ResourceTier::Low, ResourceTier::Medium, ResourceTier::High];

    pub fn scale(self) -> f64 {
        match self {
            ResourceTier::Low => 0.5,
            ResourceTier::Medium => 1.0,
            ResourceTier::High => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceTier::Low => "low",
            ResourceTier::Medium => "medium",
            ResourceTier::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn apply(self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let k = self.scale();
        ScenarioConfig {
            gu_clock_min: cfg.gu_clock_min * k,
            gu_clock_max: cfg.gu_clock_max * k,
            gu_battery_min: cfg.gu_battery_min * k,
            gu_battery_max: cfg.gu_battery_max * k,
            gu_compute_min: cfg.gu_compute_min * k,
            gu_compute_max: cfg.gu_compute_max * k,
            ..cfg.clone()
        }
    }
}

/// The grid grows while the O-RU placement area stays put.
pub fn with_grid(cfg: &ScenarioConfig, side: f64) -> ScenarioConfig {
    ScenarioConfig {
        grid_width: side,
        grid_height: side,
        ..cfg.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySatisfaction {
    pub family: String,
    pub checks: usize,
    pub violations: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p05: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        Self {
            mean,
            std,
            min: s[0],
            p05: q(0.05),
            p50: q(0.5),
            p95: q(0.95),
            max: s[s.len() - 1],
        }
    }
}

/// Aggregate metrics of a policy over evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub policy: String,
    pub episodes: usize,
    pub steps: usize,
    pub satisfaction: Vec<FamilySatisfaction>,
    pub mean_satisfaction: f64,
    pub min_satisfaction: f64,
    pub satisfaction_target: f64,
    pub meets_target: bool,
    pub mean_norm_latency: f64,
    pub mean_norm_security: f64,
    pub mean_norm_energy: f64,
    /// Episode objective: summed normalized energy, latency and security deficit.
    pub mean_objective: f64,
    pub mean_penalty: f64,
    /// GU-steps whose first hop exceeded the BER limit.
    pub disconnected: usize,
    pub returns: Distribution,
}

impl EvalMetrics {
    pub fn rate(&self, f: ConstraintFamily) -> f64 {
        self.satisfaction.iter().find(|s| s.family == f.name()).map(|s| s.rate).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub policy: String,
    pub episode_return: f64,
    pub penalty: f64,
    pub objective: f64,
    pub violations: BTreeMap<String, usize>,
    pub mean_norm_latency: f64,
    pub mean_norm_security: f64,
    pub mean_norm_energy: f64,
    pub disconnected: usize,
}

pub const TRACE_HEADER: &str = "t,reward,penalty,final_reward,mean_norm_latency,mean_norm_energy,mean_norm_security,objective,disconnected,v_security,v_resource_blocks,v_compute,v_battery,v_ber,v_collision,v_max_displacement";

fn trace_row(o: &StepOutcome) -> String {
    let v = o.violations.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        o.t,
        o.reward,
        o.penalty,
        o.final_reward,
        o.mean_norm_latency,
        o.mean_norm_energy,
        o.mean_norm_security,
        o.objective(),
        o.disconnected(),
        v
    )
}

/// Chooses a decision from the environment and the current observation.
pub type DecisionFn<'a> = dyn FnMut(&Env, &[f64]) -> DecisionVector + 'a;

struct Accum {
    viol: FamilyCounts,
    checks: FamilyCounts,
    lat: f64,
    sec: f64,
    en: f64,
    steps: usize,
    disconnected: usize,
    returns: Vec<f64>,
    penalties: Vec<f64>,
    objectives: Vec<f64>,
}

/// Runs `episodes` evaluation episodes. `start_episode` makes each episode's
/// stream independent of how the run is split. Traces of the first
/// `trace_episodes` episodes go to `traces` when given.
pub fn evaluate_with(
    cfg: &ScenarioConfig,
    seed: u64,
    episodes: usize,
    policy_name: &str,
    make_policy: &mut dyn FnMut(usize) -> Box<DecisionFn<'static>>,
    mut traces: Option<(&mut ArtifactWriter, usize)>,
) -> Result<EvalMetrics> {
    let mut env = Env::new(cfg.clone())?;
    let mut acc = Accum {
        viol: FamilyCounts::default(),
        checks: FamilyCounts::default(),
        lat: 0.0,
        sec: 0.0,
        en: 0.0,
        steps: 0,
        disconnected: 0,
        returns: Vec::with_capacity(episodes),
        penalties: Vec::with_capacity(episodes),
        objectives: Vec::with_capacity(episodes),
    };
    for k in 0..episodes {
        let mut act = make_policy(k);
        let mut obs = env.reset_with(seed, EVAL_STREAM_BASE + k as u64);
        let mut rows = String::new();
        let mut ep = EpisodeSummary {
            episode: k,
            policy: policy_name.to_string(),
            episode_return: 0.0,
            penalty: 0.0,
            objective: 0.0,
            violations: BTreeMap::new(),
            mean_norm_latency: 0.0,
            mean_norm_security: 0.0,
            mean_norm_energy: 0.0,
            disconnected: 0,
        };
        let mut viol = FamilyCounts::default();
        let mut n = 0usize;
        while !env.is_done() {
            let d = act(&env, &obs);
            let tr = env.step_decision(&d)?;
            let o = &tr.outcome;
            viol.add(&o.violations);
            acc.checks.add(&o.checks);
            ep.episode_return += tr.reward;
            ep.penalty += o.penalty;
            ep.objective += o.objective();
            ep.mean_norm_latency += o.mean_norm_latency;
            ep.mean_norm_security += o.mean_norm_security;
            ep.mean_norm_energy += o.mean_norm_energy;
            ep.disconnected += o.disconnected();
            n += 1;
            if traces.as_ref().is_some_and(|(_, m)| k < *m) {
                rows.push_str(&trace_row(o));
            }
            obs = tr.observation;
        }
        acc.viol.add(&viol);
        acc.lat += ep.mean_norm_latency;
        acc.sec += ep.mean_norm_security;
        acc.en += ep.mean_norm_energy;
        acc.steps += n;
        acc.disconnected += ep.disconnected;
        acc.returns.push(ep.episode_return);
        acc.penalties.push(ep.penalty);
        acc.objectives.push(ep.objective);
        if let Some((w, m)) = traces.as_mut() {
            if k < *m {
                let nf = n.max(1) as f64;
                ep.mean_norm_latency /= nf;
                ep.mean_norm_security /= nf;
                ep.mean_norm_energy /= nf;
                ep.violations = ConstraintFamily::ALL
                    .iter()
                    .map(|f| (f.name().to_string(), viol.get(*f)))
                    .collect();
                w.write_csv(&format!("traces/{k}.csv"), TRACE_HEADER, &rows)?;
                w.write_json(&format!("traces/{k}.json"), &ep)?;
            }
        }
    }
    let satisfaction: Vec<FamilySatisfaction> = ConstraintFamily::ALL
        .iter()
        .map(|f| {
            let (c, v) = (acc.checks.get(*f), acc.viol.get(*f));
            FamilySatisfaction {
                family: f.name().to_string(),
                checks: c,
                violations: v,
                rate: if c == 0 { 1.0 } else { 1.0 - v as f64 / c as f64 },
            }
        })
        .collect();
    let mean_sat = satisfaction.iter().map(|s| s.rate).sum::<f64>() / satisfaction.len() as f64;
    let min_sat = satisfaction.iter().map(|s| s.rate).fold(f64::INFINITY, f64::min);
    let steps = acc.steps.max(1) as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(EvalMetrics {
        policy: policy_name.to_string(),
        episodes,
        steps: acc.steps,
        satisfaction,
        mean_satisfaction: mean_sat,
        min_satisfaction: min_sat,
        satisfaction_target: SATISFACTION_TARGET,
        meets_target: mean_sat >= SATISFACTION_TARGET,
        mean_norm_latency: acc.lat / steps,
        mean_norm_security: acc.sec / steps,
        mean_norm_energy: acc.en / steps,
        mean_objective: mean(&acc.objectives),
        mean_penalty: mean(&acc.penalties),
        disconnected: acc.disconnected,
        returns: Distribution::of(&acc.returns),
    })
}

/// Greedy evaluation of a trained policy.
pub fn evaluate_policy(
    cfg: &ScenarioConfig,
    policy: &Policy,
    seed: u64,
    episodes: usize,
    traces: Option<(&mut ArtifactWriter, usize)>,
) -> Result<EvalMetrics> {
    let p = policy.clone();
    let mut make = move |_k: usize| -> Box<DecisionFn<'static>> {
        let p = p.clone();
        Box::new(move |env: &Env, obs: &[f64]| env.decode(&p.act_greedy(obs)).expect("policy matches env"))
    };
    evaluate_with(cfg, seed, episodes, "rl", &mut make, traces)
}

pub fn evaluate_baseline(
    cfg: &ScenarioConfig,
    kind: PolicyKind,
    seed: u64,
    episodes: usize,
    traces: Option<(&mut ArtifactWriter, usize)>,
) -> Result<EvalMetrics> {
    let mut make = move |k: usize| -> Box<DecisionFn<'static>> {
        let mut h = HeuristicPolicy::new(kind, instance_rng(seed, BASELINE_STREAM_BASE + k as u64));
        Box::new(move |env: &Env, _obs: &[f64]| h.act(env.state(), env.config()))
    };
    evaluate_with(cfg, seed, episodes, kind.name(), &mut make, traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub first_window_reward: f64,
    pub first_window_penalty: f64,
    pub last_window_reward: f64,
    pub last_window_penalty: f64,
    pub reward_improved: bool,
    pub penalty_decreased: bool,
    pub checkpoints: Vec<String>,
}

impl TrainSummary {
    pub fn from_log(log: &TrainingLog, checkpoints: Vec<String>) -> Self {
        let ((r0, p0), (r1, p1)) = log.window_means(0.1);
        Self {
            episodes: log.records.len(),
            first_window_reward: r0,
            first_window_penalty: p0,
            last_window_reward: r1,
            last_window_penalty: p1,
            reward_improved: r1 > r0,
            penalty_decreased: p1 < p0,
            checkpoints,
        }
    }
}

/// Trains without writing anything.
pub fn train_policy(cfg: &ExperimentConfig, seed: u64) -> Result<(Policy, TrainingLog)> {
    let (agent, log) = train(&cfg.scenario, &cfg.ppo, seed, &mut |_, _| Ok(()))?;
    Ok((agent.policy, log))
}

fn args_of(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut w = ArtifactWriter::new(out, &hash, seed)?;
    let mut names = Vec::new();
    let (agent, log) = train(&cfg.scenario, &cfg.ppo, seed, &mut |k, agent| {
        let rel = format!("checkpoints/ep{k}.ckpt");
        let c = Checkpoint::new(&agent.policy, &agent.adam, &cfg.ppo, seed, k, &hash);
        w.write_checkpoint(&rel, &c)?;
        names.push(rel);
        Ok(())
    })?;
    drop(agent);
    w.write_csv("metrics/training_log.csv", TrainingLog::CSV_HEADER, &log.to_csv_rows())?;
    let summary = TrainSummary::from_log(&log, names);
    w.write_json("metrics/summary.json", &summary)?;
    w.finish("train", &cfg.to_toml_string(), BTreeMap::new())?;
    Ok(summary)
}

/// Loads a checkpoint and checks it fits the configured environment.
pub fn load_policy_for(cfg: &ExperimentConfig, path: &Path) -> Result<Policy> {
    let ckpt = crate::persistence::load_checkpoint(path)?;
    let env = Env::new(cfg.scenario.clone())?;
    ckpt.check_spec(&policy_spec(&env, &ckpt.header.hyperparams))?;
    ckpt.check_spec(&policy_spec(&env, &cfg.ppo))?;
    Ok(ckpt.policy)
}

pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    trace_episodes: usize,
    out: &Path,
) -> Result<EvalMetrics> {
    cfg.validate()?;
    let policy = load_policy_for(cfg, checkpoint)?;
    let ckpt_hash = sha256_hex(&std::fs::read(checkpoint)?);
    let mut w = ArtifactWriter::new(out, &cfg.hash(), seed)?;
    let m = evaluate_policy(&cfg.scenario, &policy, seed, episodes, Some((&mut w, trace_episodes)))?;
    write_eval_artifacts(&mut w, &m)?;
    let abs = std::fs::canonicalize(checkpoint)?;
    let args = args_of(&[
        ("checkpoint", abs.display().to_string()),
        ("checkpoint_sha256", ckpt_hash),
        ("episodes", episodes.to_string()),
        ("traces", trace_episodes.to_string()),
    ]);
    w.finish("evaluate", &cfg.to_toml_string(), args)?;
    Ok(m)
}

pub const SATISFACTION_HEADER: &str = "family,checks,violations,rate";

fn write_eval_artifacts(w: &mut ArtifactWriter, m: &EvalMetrics) -> Result<()> {
    let rows: String = m
        .satisfaction
        .iter()
        .map(|s| format!("{},{},{},{}\n", s.family, s.checks, s.violations, s.rate))
        .collect();
    w.write_csv("metrics/satisfaction.csv", SATISFACTION_HEADER, &rows)?;
    w.write_json("metrics/summary.json", m)?;
    Ok(())
}

pub fn cmd_baseline(
    cfg: &ExperimentConfig,
    kind: PolicyKind,
    episodes: usize,
    seed: u64,
    trace_episodes: usize,
    out: &Path,
) -> Result<EvalMetrics> {
    cfg.validate()?;
    let mut w = ArtifactWriter::new(out, &cfg.hash(), seed)?;
    let m = evaluate_baseline(&cfg.scenario, kind, seed, episodes, Some((&mut w, trace_episodes)))?;
    write_eval_artifacts(&mut w, &m)?;
    let args = args_of(&[
        ("policy", kind.name().to_string()),
        ("episodes", episodes.to_string()),
        ("traces", trace_episodes.to_string()),
    ]);
    w.finish("baseline", &cfg.to_toml_string(), args)?;
    Ok(m)
}

/// Values swept by `compare`, one axis at a time around the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub num_gus: Vec<usize>,
    #[serde(default)]
    pub num_uavs: Vec<usize>,
    pub tiers: Vec<ResourceTier>,
    pub grids: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            num_gus: vec![10, 15, 20],
            num_uavs: vec![],
            tiers: ResourceTier::ALL.to_vec(),
            grids: vec![100.0, 200.0, 400.0],
        }
    }
}

impl SweepSpec {
    pub fn cells(&self, base: &ScenarioConfig) -> Vec<(String, String, ScenarioConfig)> {
        let mut v = Vec::new();
        for &u in &self.num_gus {
            v.push((
                "num_gus".into(),
                u.to_string(),
                ScenarioConfig {
                    num_gus: u,
                    ..base.clone()
                },
            ));
        }
        for &a in &self.num_uavs {
            v.push((
                "num_uavs".into(),
                a.to_string(),
                ScenarioConfig {
                    num_uavs: a,
                    ..base.clone()
                },
            ));
        }
        for &t in &self.tiers {
            v.push(("tier".into(), t.name().into(), t.apply(base)));
        }
        for &g in &self.grids {
            v.push(("grid".into(), g.to_string(), with_grid(base, g)));
        }
        v
    }

    pub fn to_arg(&self) -> String {
        let j = |xs: Vec<String>| xs.join(",");
        format!(
            "gus={};uavs={};tiers={};grids={}",
            j(self.num_gus.iter().map(|x| x.to_string()).collect()),
            j(self.num_uavs.iter().map(|x| x.to_string()).collect()),
            j(self.tiers.iter().map(|t| t.name().to_string()).collect()),
            j(self.grids.iter().map(|g| g.to_string()).collect())
        )
    }

    /// Parses the `to_arg` form; omitted axes are empty.
    pub fn parse(s: &str) -> Result<Self> {
        let mut spec = Self {
            num_gus: vec![],
            num_uavs: vec![],
            tiers: vec![],
            grids: vec![],
        };
        let bad = |m: String| Error::Other(format!("bad sweep `{s}`: {m}"));
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, vals) = part.split_once('=').ok_or_else(|| bad(format!("`{part}` lacks `=`")))?;
            let vals = vals.split(',').map(str::trim).filter(|v| !v.is_empty());
            match k.trim() {
                "gus" => {
                    spec.num_gus = vals
                        .map(|v| v.parse().map_err(|_| bad(format!("GU count `{v}`"))))
                        .collect::<Result<_>>()?
                }
                "uavs" => {
                    spec.num_uavs = vals
                        .map(|v| v.parse().map_err(|_| bad(format!("UAV count `{v}`"))))
                        .collect::<Result<_>>()?
                }
                "tiers" => {
                    spec.tiers = vals
                        .map(|v| ResourceTier::parse(v).ok_or_else(|| bad(format!("tier `{v}`"))))
                        .collect::<Result<_>>()?
                }
                "grids" => {
                    spec.grids = vals
                        .map(|v| v.parse().map_err(|_| bad(format!("grid side `{v}`"))))
                        .collect::<Result<_>>()?
                }
                other => return Err(bad(format!("unknown axis `{other}`"))),
            }
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCell {
    pub axis: String,
    pub value: String,
    pub config_hash: String,
    pub train: TrainSummary,
    pub rl: EvalMetrics,
    pub nearest_with_uavs: EvalMetrics,
    pub no_uav: EvalMetrics,
}

impl CompareCell {
    /// RL latency relative to the nearest heuristic, in percent; negative is better.
    pub fn latency_gap_pct(&self) -> f64 {
        100.0 * (self.rl.mean_norm_latency - self.nearest_with_uavs.mean_norm_latency)
            / self.nearest_with_uavs.mean_norm_latency
    }

    /// RL security relative to the nearest heuristic, in percent; positive is better.
    pub fn security_gap_pct(&self) -> f64 {
        100.0 * (self.rl.mean_norm_security - self.nearest_with_uavs.mean_norm_security)
            / self.nearest_with_uavs.mean_norm_security
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub sweep: SweepSpec,
    pub eval_episodes: usize,
    pub cells: Vec<CompareCell>,
}

impl CompareReport {
    pub fn cell(&self, axis: &str, value: &str) -> Option<&CompareCell> {
        self.cells.iter().find(|c| c.axis == axis && c.value == value)
    }
}

/// Trains and evaluates every cell of `sweep`. Cells sharing a configuration
/// are computed once. `reuse` supplies a trained policy for cells whose
/// configuration hash matches the base configuration.
pub fn run_compare(
    cfg: &ExperimentConfig,
    seed: u64,
    sweep: &SweepSpec,
    eval_episodes: usize,
    reuse: Option<&Policy>,
) -> Result<(CompareReport, BTreeMap<String, Policy>)> {
    let cells = sweep.cells(&cfg.scenario);
    let base_hash = cfg.hash();
    let mut unique: BTreeMap<String, ExperimentConfig> = BTreeMap::new();
    for (_, _, sc) in &cells {
        let e = ExperimentConfig {
            scenario: sc.clone(),
            ppo: cfg.ppo.clone(),
        };
        e.validate()?;
        unique.insert(e.hash(), e);
    }
    type Done = (String, (TrainSummary, Policy, EvalMetrics, EvalMetrics, EvalMetrics));
    let jobs: Vec<(String, ExperimentConfig)> = unique.into_iter().collect();
    let results: Vec<Result<Done>> = jobs
        .par_iter()
        .map(|(h, e)| {
            let (policy, summary) = match reuse {
                Some(p) if *h == base_hash => (p.clone(), TrainSummary::from_log(&TrainingLog::default(), vec![])),
                _ => {
                    let (p, log) = train_policy(e, seed)?;
                    (p, TrainSummary::from_log(&log, vec![]))
                }
            };
            let rl = evaluate_policy(&e.scenario, &policy, seed, eval_episodes, None)?;
            let near = evaluate_baseline(&e.scenario, PolicyKind::NearestWithUavs, seed, eval_episodes, None)?;
            let nouav = evaluate_baseline(&e.scenario, PolicyKind::NoUav, seed, eval_episodes, None)?;
            Ok((h.clone(), (summary, policy, rl, near, nouav)))
        })
        .collect();
    let mut by_hash = BTreeMap::new();
    for r in results {
        let (h, v) = r?;
        by_hash.insert(h, v);
    }
    let mut out = Vec::new();
    let mut policies = BTreeMap::new();
    for (axis, value, sc) in cells {
        let h = ExperimentConfig {
            scenario: sc,
            ppo: cfg.ppo.clone(),
        }
        .hash();
        let (summary, policy, rl, near, nouav) = by_hash[&h].clone();
        policies.insert(format!("{axis}-{value}"), policy);
        out.push(CompareCell {
            axis,
            value,
            config_hash: h,
            train: summary,
            rl,
            nearest_with_uavs: near,
            no_uav: nouav,
        });
    }
    Ok((
        CompareReport {
            sweep: sweep.clone(),
            eval_episodes,
            cells: out,
        },
        policies,
    ))
}

pub fn cmd_compare(
    cfg: &ExperimentConfig,
    seed: u64,
    sweep: &SweepSpec,
    eval_episodes: usize,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<CompareReport> {
    cfg.validate()?;
    let reuse = checkpoint.map(|p| load_policy_for(cfg, p)).transpose()?;
    let (report, policies) = run_compare(cfg, seed, sweep, eval_episodes, reuse.as_ref())?;
    let mut w = ArtifactWriter::new(out, &cfg.hash(), seed)?;
    for (name, p) in &policies {
        let adam = crate::ppo::Adam::new(p.num_params(), cfg.ppo.adam_beta1, cfg.ppo.adam_beta2, cfg.ppo.adam_eps);
        let c = Checkpoint::new(p, &adam, &cfg.ppo, seed, cfg.ppo.episodes, &cfg.hash());
        w.write_checkpoint(&format!("checkpoints/{name}.ckpt"), &c)?;
    }
    let table = |f: &dyn Fn(&EvalMetrics) -> String| -> String {
        report
            .cells
            .iter()
            .map(|c| format!("{},{},{},{},{}\n", c.axis, c.value, f(&c.rl), f(&c.nearest_with_uavs), f(&c.no_uav)))
            .collect()
    };
    let header = "axis,value,rl,nearest_with_uavs,no_uav";
    w.write_csv("metrics/compare_latency.csv", header, &table(&|m| m.mean_norm_latency.to_string()))?;
    w.write_csv("metrics/compare_security.csv", header, &table(&|m| m.mean_norm_security.to_string()))?;
    w.write_csv("metrics/compare_disconnected.csv", header, &table(&|m| m.disconnected.to_string()))?;
    let gaps: String = report
        .cells
        .iter()
        .map(|c| format!("{},{},{},{}\n", c.axis, c.value, c.latency_gap_pct(), c.security_gap_pct()))
        .collect();
    w.write_csv("metrics/compare_gaps.csv", "axis,value,latency_gap_pct,security_gap_pct", &gaps)?;
    w.write_json("metrics/summary.json", &report)?;
    let mut args = args_of(&[("sweep", sweep.to_arg()), ("episodes", eval_episodes.to_string())]);
    if let Some(p) = checkpoint {
        args.insert("checkpoint".into(), std::fs::canonicalize(p)?.display().to_string());
    }
    w.finish("compare", &cfg.to_toml_string(), args)?;
    Ok(report)
}

pub const DEFAULT_ORACLE_INSTANCES: usize = 50;

pub fn cmd_oracle(cfg: &ExperimentConfig, seed: u64, count: usize, out: &Path) -> Result<CrossCheckReport> {
    cfg.validate()?;
    let report = cross_check(&cfg.scenario, seed, count, &default_evaluator)?;
    let mut w = ArtifactWriter::new(out, &cfg.hash(), seed)?;
    let rows: String = report
        .invariants
        .iter()
        .map(|i| format!("{},{}\n", i.name, if i.passed { "pass" } else { "fail" }))
        .collect();
    w.write_csv("metrics/oracle_checks.csv", "invariant,result", &rows)?;
    w.write_json("metrics/summary.json", &report)?;
    w.finish("oracle", &cfg.to_toml_string(), args_of(&[("instances", count.to_string())]))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub subcommand: String,
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty()
    }
}

fn arg<'a>(m: &'a Manifest, k: &str) -> Result<&'a str> {
    m.args
        .get(k)
        .map(String::as_str)
        .ok_or_else(|| Error::Other(format!("manifest lacks argument `{k}`")))
}

fn parse_arg<T: std::str::FromStr>(m: &Manifest, k: &str) -> Result<T> {
    arg(m, k)?
        .parse()
        .map_err(|_| Error::Other(format!("manifest argument `{k}` is malformed")))
}

/// Re-runs the subcommand recorded in `from` into `out` and compares artifacts.
pub fn cmd_replay(from: &Path, out: &Path) -> Result<ReplayReport> {
    let m = Manifest::read(from)?;
    let cfg = ExperimentConfig::from_toml_str(&m.config)?;
    if cfg.hash() != m.config_hash {
        return Err(Error::Other("manifest config does not match its hash".into()));
    }
    match m.subcommand.as_str() {
        "train" => {
            cmd_train(&cfg, m.seed, out)?;
        }
        "evaluate" => {
            let ck = PathBuf::from(arg(&m, "checkpoint")?);
            let want = arg(&m, "checkpoint_sha256")?;
            if sha256_hex(&std::fs::read(&ck)?) != want {
                return Err(crate::error::PersistError::HashMismatch {
                    path: ck.display().to_string(),
                }
                .into());
            }
            cmd_evaluate(&cfg, &ck, parse_arg(&m, "episodes")?, m.seed, parse_arg(&m, "traces")?, out)?;
        }
        "baseline" => {
            let kind = PolicyKind::parse(arg(&m, "policy")?)
                .ok_or_else(|| Error::Other("manifest names an unknown policy".into()))?;
            cmd_baseline(&cfg, kind, parse_arg(&m, "episodes")?, m.seed, parse_arg(&m, "traces")?, out)?;
        }
        "compare" => {
            let sweep = SweepSpec::parse(arg(&m, "sweep")?)?;
            let ck = m.args.get("checkpoint").map(PathBuf::from);
            cmd_compare(&cfg, m.seed, &sweep, parse_arg(&m, "episodes")?, ck.as_deref(), out)?;
        }
        "oracle" => {
            cmd_oracle(&cfg, m.seed, parse_arg(&m, "instances")?, out)?;
        }
        other => return Err(Error::Other(format!("cannot replay subcommand `{other}`"))),
    }
    let again = Manifest::read(out)?;
    let mut r = ReplayReport {
        subcommand: m.subcommand.clone(),
        matched: vec![],
        mismatched: vec![],
        missing: vec![],
    };
    for (rel, h) in &m.artifacts {
        match again.artifacts.get(rel) {
            Some(h2) if h2 == h => r.matched.push(rel.clone()),
            Some(_) => r.mismatched.push(rel.clone()),
            None => r.missing.push(rel.clone()),
        }
    }
    for rel in again.artifacts.keys() {
        if !m.artifacts.contains_key(rel) {
            r.mismatched.push(rel.clone());
        }
    }
    Ok(r)
}
