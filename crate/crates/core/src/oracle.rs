//! Exhaustive search over tiny single-step instances, and a direct-summation
//! reference for advantage estimation.
//!
//! The snapshot oracle composes the objective and the penalty from the
//! channel, crypto and energy primitives on its own, so comparing it with
//! [`evaluate_step`] checks the evaluator's bookkeeping rather than repeating it.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{nearest_policy_act, no_uav_policy_act, random_policy_act};
use crate::channel::{self, hop_latency};
use crate::config::ScenarioConfig;
use crate::crypto::{decryption_latency, encryption_latency, security_level, CipherSuite, CycleCosts, Direction, KeyLength};
use crate::energy::{uav_slot_energy, UavEnergyParams};
use crate::error::{EnvError, OracleError};
use crate::objective::{evaluate_step, Association, ConstraintFamily, DecisionVector, NormalizationBounds, StepOutcome};
use crate::scenario::{generate_world, instance_rng, Point, WorldState};

pub const MAX_GUS: usize = 3;
pub const MAX_UAVS: usize = 1;
pub const MAX_ORUS: usize = 2;
pub const MAX_LATTICE: usize = 25;

const TOL: f64 = 1e-9;

/// Candidate UAV positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub points: Vec<Point>,
}

impl Lattice {
    /// `n x n` evenly spaced points covering the grid, corners included.
    pub fn grid(cfg: &ScenarioConfig, n: usize) -> Self {
        let step = |len: f64, i: usize| if n > 1 { len * i as f64 / (n - 1) as f64 } else { len / 2.0 };
        let points = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| Point::new(step(cfg.grid_width, i), step(cfg.grid_height, j)))
            .collect();
        Self { points }
    }

    pub fn nearest(&self, p: Point) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.distance(p).total_cmp(&b.1.distance(p)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Objective and penalty of one decision, composed independently of the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotValue {
    pub objective: f64,
    pub penalty: f64,
    pub violations: usize,
}

impl SnapshotValue {
    pub fn feasible(&self) -> bool {
        self.violations == 0
    }

    pub fn penalized(&self) -> f64 {
        self.objective + self.penalty
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct GuTerm {
    objective: f64,
    penalty: f64,
    violations: usize,
}

fn gu_term(
    state: &WorldState,
    cfg: &ScenarioConfig,
    bounds: &NormalizationBounds,
    u: usize,
    assoc: Association,
    key: KeyLength,
    uav_pos: &[Point],
) -> GuTerm {
    let gu = &state.gus[u];
    let oru = &state.orus[assoc.oru()];
    let costs = CycleCosts::from_config(cfg);
    let suite = CipherSuite::new(key);
    let enc = encryption_latency(&suite, gu.data_bits, gu.clock, &costs);
    let dec = decryption_latency(&suite, gu.data_bits, oru.clock, &costs);
    let (comm, ber, dead) = match assoc {
        Association::Direct { .. } => {
            let l = channel::direct_link(gu, oru, cfg);
            (hop_latency(gu.data_bits, l.rate), l.ber, l.rate <= 0.0)
        }
        Association::Relay { uav, .. } => {
            let alt = state.uavs[uav].altitude;
            let up = channel::access_link(gu, uav_pos[uav], alt, cfg);
            let back = channel::backhaul_link(uav_pos[uav], alt, oru, cfg);
            (
                hop_latency(gu.data_bits, up.rate) + hop_latency(gu.data_bits, back.rate),
                up.ber,
                up.rate <= 0.0 || back.rate <= 0.0,
            )
        }
    };
    let s = security_level(key).0;
    let objective = bounds.latency(enc + comm + dec) + 1.0 - bounds.security(s);

    let workload = key.bits() as f64 * suite.complexity(Direction::Encrypt, &costs);
    let spend = enc * cfg.compute_power + comm * cfg.comm_power;
    let spent = gu.battery.spent_compute + gu.battery.spent_comm;
    let flags = [
        (ConstraintFamily::Security, s < oru.security_requirement as f64),
        (ConstraintFamily::Compute, workload > gu.compute_budget),
        (ConstraintFamily::Battery, spent + spend > gu.battery.capacity),
        (ConstraintFamily::Ber, dead || ber > cfg.ber_max),
    ];
    let mut t = GuTerm {
        objective,
        ..Default::default()
    };
    for (f, v) in flags {
        if v {
            t.violations += 1;
            t.penalty += f.weight(cfg);
        }
    }
    t
}

/// Terms that depend only on the UAV moves: hover and flight energy,
/// displacement limit on the requested move and pairwise separation.
fn uav_terms(
    state: &WorldState,
    cfg: &ScenarioConfig,
    bounds: &NormalizationBounds,
    targets: &[Point],
    requested: &[f64],
) -> GuTerm {
    let ep = UavEnergyParams::from_config(cfg);
    let mut t = GuTerm::default();
    for ((u, q), r) in state.uavs.iter().zip(targets).zip(requested) {
        let v = u.position.distance(*q) / cfg.slot_duration;
        t.objective += bounds.energy(uav_slot_energy(v, &ep));
        if *r > cfg.d_max + 1e-9 {
            t.violations += 1;
            t.penalty += ConstraintFamily::MaxDisplacement.weight(cfg);
        }
    }
    for i in 0..targets.len() {
        for j in i + 1..targets.len() {
            if targets[i].distance(targets[j]) < cfg.d_min {
                t.violations += 1;
                t.penalty += ConstraintFamily::Collision.weight(cfg);
            }
        }
    }
    t
}

fn rb_terms(state: &WorldState, cfg: &ScenarioConfig, assoc: &[Association]) -> GuTerm {
    let mut t = GuTerm::default();
    let w = ConstraintFamily::ResourceBlocks.weight(cfg);
    for (g, o) in state.orus.iter().enumerate() {
        let n = assoc.iter().filter(|a| **a == Association::Direct { oru: g }).count();
        if n > o.resource_blocks {
            t.violations += 1;
            t.penalty += w;
        }
    }
    for (a, u) in state.uavs.iter().enumerate() {
        let n = assoc.iter().filter(|x| x.uav() == Some(a)).count();
        if n > u.resource_blocks {
            t.violations += 1;
            t.penalty += w;
        }
    }
    t
}

fn targets_of(state: &WorldState, cfg: &ScenarioConfig, d: &DecisionVector) -> Vec<Point> {
    state
        .uavs
        .iter()
        .zip(&d.displacements)
        .map(|(u, dp)| u.position.offset(*dp).clamp_to(cfg.grid_width, cfg.grid_height))
        .collect()
}

/// Value of an arbitrary decision under the oracle's own composition.
pub fn snapshot_value(
    state: &WorldState,
    cfg: &ScenarioConfig,
    bounds: &NormalizationBounds,
    d: &DecisionVector,
) -> SnapshotValue {
    let targets = targets_of(state, cfg, d);
    let requested: Vec<f64> = d.displacements.iter().map(|p| p.norm()).collect();
    let acc = uav_terms(state, cfg, bounds, &targets, &requested);
    let rb = rb_terms(state, cfg, &d.associations);
    let mut v = SnapshotValue {
        objective: acc.objective,
        penalty: acc.penalty + rb.penalty,
        violations: acc.violations + rb.violations,
    };
    for (u, (a, k)) in d.associations.iter().zip(&d.keys).enumerate() {
        let t = gu_term(state, cfg, bounds, u, *a, *k, &targets);
        v.objective += t.objective;
        v.penalty += t.penalty;
        v.violations += t.violations;
    }
    v
}

/// One enumerated decision with its rank in lexicographic encoding order
/// (associations, then keys, then lattice index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub decision: DecisionVector,
    pub rank: u64,
    pub objective: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Feasible minimizer of the objective; `None` when nothing is feasible.
    pub best_feasible: Option<Candidate>,
    /// Minimizer of objective plus penalty over every decision.
    pub best_penalized: Candidate,
    pub feasible_count: u64,
    pub evaluated: u64,
}

impl Snapshot {
    pub fn infeasible_everywhere(&self) -> bool {
        self.best_feasible.is_none()
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    value: f64,
    rank: u64,
    objective: f64,
    penalty: f64,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => match x.value.total_cmp(&y.value).then(x.rank.cmp(&y.rank)) {
            Ordering::Greater => Some(y),
            _ => Some(x),
        },
    }
}

pub fn check_caps(state: &WorldState, lattice: &Lattice) -> Result<(), OracleError> {
    let (u, a, g, l) = (state.gus.len(), state.uavs.len(), state.orus.len(), lattice.points.len());
    if u > MAX_GUS || a > MAX_UAVS || g > MAX_ORUS || l > MAX_LATTICE {
        return Err(OracleError::TooLarge(format!(
            "{u} GUs, {a} UAVs, {g} O-RUs, {l} lattice points (caps {MAX_GUS}/{MAX_UAVS}/{MAX_ORUS}/{MAX_LATTICE})"
        )));
    }
    if l == 0 && a > 0 {
        return Err(OracleError::TooLarge("empty lattice".into()));
    }
    Ok(())
}

fn digits(mut n: u64, base: u64, len: usize) -> Vec<usize> {
    let mut d = vec![0; len];
    for slot in d.iter_mut().rev() {
        *slot = (n % base) as usize;
        n /= base;
    }
    d
}

/// Enumerates every association, key and lattice-position combination for one timestep.
pub fn brute_force_snapshot(state: &WorldState, cfg: &ScenarioConfig, lattice: &Lattice) -> Result<Snapshot, OracleError> {
    check_caps(state, lattice)?;
    let (nu, ng, na) = (state.gus.len(), state.orus.len(), state.uavs.len());
    let bounds = NormalizationBounds::from_config(cfg);
    let n_assoc = (ng * (1 + na)) as u64;
    let n_keys = KeyLength::ALL.len() as u64;
    let n_pos = if na == 0 { 1 } else { lattice.points.len().pow(na as u32) } as u64;
    let assoc_combos = n_assoc.pow(nu as u32);
    let key_combos = n_keys.pow(nu as u32);
    let assocs: Vec<Association> = (0..n_assoc as usize)
        .map(|i| Association::from_index(i, ng, na).expect("index in range"))
        .collect();
    let lp = lattice.points.len().max(1) as u64;

    let per_position = |pos: u64| {
        let targets: Vec<Point> = digits(pos, lp, na).iter().map(|&i| lattice.points[i]).collect();
        let requested: Vec<f64> = state.uavs.iter().zip(&targets).map(|(u, q)| u.position.distance(*q)).collect();
        let base = uav_terms(state, cfg, &bounds, &targets, &requested);
        // terms[u][assoc][key]
        let terms: Vec<Vec<Vec<GuTerm>>> = (0..nu)
            .map(|u| {
                assocs
                    .iter()
                    .map(|a| KeyLength::ALL.iter().map(|k| gu_term(state, cfg, &bounds, u, *a, *k, &targets)).collect())
                    .collect()
            })
            .collect();
        let mut best_f = None;
        let mut best_p = None;
        let mut feasible = 0u64;
        for ar in 0..assoc_combos {
            let ad = digits(ar, n_assoc, nu);
            let chosen: Vec<Association> = ad.iter().map(|&i| assocs[i]).collect();
            let rb = rb_terms(state, cfg, &chosen);
            for kr in 0..key_combos {
                let kd = digits(kr, n_keys, nu);
                let mut obj = base.objective;
                let mut pen = base.penalty + rb.penalty;
                let mut viol = base.violations + rb.violations;
                for u in 0..nu {
                    let t = &terms[u][ad[u]][kd[u]];
                    obj += t.objective;
                    pen += t.penalty;
                    viol += t.violations;
                }
                let rank = (ar * key_combos + kr) * n_pos + pos;
                best_p = better(
                    best_p,
                    Some(Best {
                        value: obj + pen,
                        rank,
                        objective: obj,
                        penalty: pen,
                    }),
                );
                if viol == 0 {
                    feasible += 1;
                    best_f = better(
                        best_f,
                        Some(Best {
                            value: obj,
                            rank,
                            objective: obj,
                            penalty: 0.0,
                        }),
                    );
                }
            }
        }
        (best_f, best_p, feasible)
    };

    let (best_f, best_p, feasible) = (0..n_pos)
        .into_par_iter()
        .map(per_position)
        .reduce(|| (None, None, 0), |a, b| (better(a.0, b.0), better(a.1, b.1), a.2 + b.2));

    let decode = |b: Best| {
        let pos = b.rank % n_pos;
        let kr = (b.rank / n_pos) % key_combos;
        let ar = b.rank / n_pos / key_combos;
        let targets = digits(pos, lp, na);
        let decision = DecisionVector {
            associations: digits(ar, n_assoc, nu).iter().map(|&i| assocs[i]).collect(),
            keys: digits(kr, n_keys, nu).iter().map(|&i| KeyLength::ALL[i]).collect(),
            displacements: state
                .uavs
                .iter()
                .zip(&targets)
                .map(|(u, &i)| Point::new(lattice.points[i].x - u.position.x, lattice.points[i].y - u.position.y))
                .collect(),
        };
        Candidate {
            decision,
            rank: b.rank,
            objective: b.objective,
            penalty: b.penalty,
        }
    };
    Ok(Snapshot {
        best_feasible: best_f.map(decode),
        best_penalized: decode(best_p.expect("at least one decision")),
        feasible_count: feasible,
        evaluated: assoc_combos * key_combos * n_pos,
    })
}

/// Direct double-loop advantage estimate for one episode that terminates
/// after its last step.
pub fn brute_force_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    let delta = |k: usize| {
        let next = if k + 1 < n { values[k + 1] } else { 0.0 };
        rewards[k] + gamma * next - values[k]
    };
    (0..n)
        .map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta(k)).sum())
        .collect()
}

/// A random instance within the size caps: 1 to 3 GUs, 0 or 1 UAV, two O-RUs
/// drawn afresh, UAV starting on the lattice.
pub fn tiny_instance(base: &ScenarioConfig, rng: &mut impl Rng, lattice_side: usize) -> (ScenarioConfig, WorldState, Lattice) {
    let cfg = ScenarioConfig {
        num_gus: rng.random_range(1..=MAX_GUS),
        num_uavs: rng.random_range(0..=MAX_UAVS),
        num_orus: MAX_ORUS,
        horizon: 1,
        resample_topology: true,
        ..base.clone()
    };
    let mut state = generate_world(&cfg, rng);
    let lattice = Lattice::grid(&cfg, lattice_side);
    for u in &mut state.uavs {
        let q = lattice.points[rng.random_range(0..lattice.points.len())];
        u.position = q;
        u.prev_position = q;
    }
    (cfg, state, lattice)
}

/// Stable short hash of an instance.
pub fn instance_hash(cfg: &ScenarioConfig, state: &WorldState) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(serde_json::to_vec(state).expect("state serializes"));
    hex::encode(&h.finalize()[..8])
}

/// Signature of a step evaluator under test.
pub type StepEvaluator =
    dyn Fn(&WorldState, &DecisionVector, &ScenarioConfig, &NormalizationBounds) -> Result<StepOutcome, EnvError> + Sync;

/// The production evaluator.
pub fn default_evaluator(
    state: &WorldState,
    d: &DecisionVector,
    cfg: &ScenarioConfig,
    bounds: &NormalizationBounds,
) -> Result<StepOutcome, EnvError> {
    evaluate_step(state, d, cfg, bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance_hash: String,
    pub num_gus: usize,
    pub num_uavs: usize,
    pub best_decision: Option<DecisionVector>,
    pub best_value: Option<f64>,
    pub best_penalized_value: f64,
    pub feasible_count: u64,
    pub evaluated: u64,
    pub infeasible_everywhere: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub report: OracleReport,
    /// Evaluator agrees with the oracle at both minimizers.
    pub minimizer_match: bool,
    /// Evaluator agrees with the oracle's composition on sampled decisions.
    pub sampled_match: bool,
    /// No heuristic decision beats the oracle.
    pub heuristics_dominated: bool,
    pub max_abs_error: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub seed: u64,
    pub instances: Vec<InstanceCheck>,
    pub invariants: Vec<InvariantResult>,
}

impl CrossCheckReport {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.passed)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

fn snap_to_lattice(state: &WorldState, cfg: &ScenarioConfig, lattice: &Lattice, d: &mut DecisionVector) {
    let targets = targets_of(state, cfg, d);
    for ((dp, u), q) in d.displacements.iter_mut().zip(&state.uavs).zip(targets) {
        let p = lattice.points[lattice.nearest(q)];
        *dp = Point::new(p.x - u.position.x, p.y - u.position.y);
    }
}

const SAMPLED_DECISIONS: usize = 20;

/// Runs the oracle on one instance and compares the evaluator against it.
pub fn check_instance(
    cfg: &ScenarioConfig,
    state: &WorldState,
    lattice: &Lattice,
    evaluator: &StepEvaluator,
    rng: &mut impl Rng,
) -> Result<InstanceCheck, OracleError> {
    let snap = brute_force_snapshot(state, cfg, lattice)?;
    let bounds = NormalizationBounds::from_config(cfg);
    let mut notes = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut track = |a: f64, b: f64| {
        max_err = max_err.max((a - b).abs());
        close(a, b)
    };

    let mut minimizer_match = true;
    if let Some(best) = &snap.best_feasible {
        let out = evaluator(state, &best.decision, cfg, &bounds)?;
        if !track(out.objective(), best.objective) || !out.flags.all_clear() {
            minimizer_match = false;
            notes.push(format!(
                "feasible minimizer: evaluator {} (clear {}), oracle {}",
                out.objective(),
                out.flags.all_clear(),
                best.objective
            ));
        }
    }
    let bp = &snap.best_penalized;
    let out = evaluator(state, &bp.decision, cfg, &bounds)?;
    if !track(out.objective() + out.penalty, bp.objective + bp.penalty) {
        minimizer_match = false;
        notes.push(format!(
            "penalized minimizer: evaluator {}, oracle {}",
            out.objective() + out.penalty,
            bp.objective + bp.penalty
        ));
    }

    let mut sampled_match = true;
    for _ in 0..SAMPLED_DECISIONS {
        let mut d = random_policy_act(state, cfg, rng);
        snap_to_lattice(state, cfg, lattice, &mut d);
        let want = snapshot_value(state, cfg, &bounds, &d);
        let got = evaluator(state, &d, cfg, &bounds)?;
        let ok = track(got.objective(), want.objective)
            & track(got.penalty, want.penalty)
            & (got.flags.all_clear() == want.feasible());
        if !ok {
            sampled_match = false;
            notes.push(format!(
                "sampled decision: evaluator ({}, {}), oracle ({}, {})",
                got.objective(),
                got.penalty,
                want.objective,
                want.penalty
            ));
        }
    }

    let mut heuristics_dominated = true;
    let heuristics: [(&str, DecisionVector); 3] = [
        ("nearest_with_uavs", nearest_policy_act(state, cfg, rng)),
        ("no_uav", no_uav_policy_act(state, cfg, rng)),
        ("random", random_policy_act(state, cfg, rng)),
    ];
    for (name, mut d) in heuristics {
        snap_to_lattice(state, cfg, lattice, &mut d);
        let out = evaluator(state, &d, cfg, &bounds)?;
        let pen = out.objective() + out.penalty;
        if pen < bp.objective + bp.penalty - TOL {
            heuristics_dominated = false;
            notes.push(format!("{name} beats penalized minimum: {pen}"));
        }
        if out.flags.all_clear() {
            match &snap.best_feasible {
                Some(b) if out.objective() < b.objective - TOL => {
                    heuristics_dominated = false;
                    notes.push(format!("{name} beats feasible minimum: {}", out.objective()));
                }
                None => {
                    heuristics_dominated = false;
                    notes.push(format!("{name} is feasible where the oracle found nothing"));
                }
                _ => {}
            }
        }
    }

    Ok(InstanceCheck {
        report: OracleReport {
            instance_hash: instance_hash(cfg, state),
            num_gus: state.gus.len(),
            num_uavs: state.uavs.len(),
            best_decision: snap.best_feasible.as_ref().map(|c| c.decision.clone()),
            best_value: snap.best_feasible.as_ref().map(|c| c.objective),
            best_penalized_value: bp.objective + bp.penalty,
            feasible_count: snap.feasible_count,
            evaluated: snap.evaluated,
            infeasible_everywhere: snap.infeasible_everywhere(),
        },
        minimizer_match,
        sampled_match,
        heuristics_dominated,
        max_abs_error: max_err,
        notes,
    })
}

/// Cross-checks `evaluator` on `count` tiny instances drawn from `seed`.
pub fn cross_check(
    base: &ScenarioConfig,
    seed: u64,
    count: usize,
    evaluator: &StepEvaluator,
) -> Result<CrossCheckReport, OracleError> {
    let mut instances = Vec::with_capacity(count);
    for k in 0..count {
        let mut rng = instance_rng(seed, k as u64);
        let (cfg, state, lattice) = tiny_instance(base, &mut rng, 5);
        instances.push(check_instance(&cfg, &state, &lattice, evaluator, &mut rng)?);
    }
    let summarize = |name: &str, f: &dyn Fn(&InstanceCheck) -> bool| {
        let bad: Vec<String> = instances.iter().filter(|c| !f(c)).map(|c| c.report.instance_hash.clone()).collect();
        InvariantResult {
            name: name.into(),
            passed: bad.is_empty(),
            detail: if bad.is_empty() {
                format!("{} instances", instances.len())
            } else {
                format!("{} of {} instances fail: {}", bad.len(), instances.len(), bad.join(", "))
            },
        }
    };
    let invariants = vec![
        summarize("evaluator_matches_oracle_minimum", &|c| c.minimizer_match),
        summarize("evaluator_matches_oracle_composition", &|c| c.sampled_match),
        summarize("heuristics_never_beat_oracle", &|c| c.heuristics_dominated),
    ];
    Ok(CrossCheckReport {
        seed,
        instances,
        invariants,
    })
}
