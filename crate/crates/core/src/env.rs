//! Episodic environment wrapping world generation, mobility and step evaluation.
//!
//! Two action encodings are supported. `Factored` has one categorical head per
//! GU for the association, one per GU for the key length, and a continuous
//! `2A` vector in `[-1, 1]` for UAV displacement, scaled per axis by
//! `d_max / sqrt(2)` so every action respects the displacement bound. `Box` is a single continuous vector of
//! length `2U + 2A`: association and key entries are decoded by equal-width
//! binning, displacements per axis by `d_max` (so corners exceed `d_max`).

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ActionMode, ScenarioConfig};
use crate::crypto::KeyLength;
use crate::error::{ConfigError, EnvError};
use crate::objective::{evaluate_step, Association, DecisionVector, NormalizationBounds, StepOutcome};
use crate::scenario::{draw_data_bits, generate_world, instance_rng, step_mobility, Point, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub mode: ActionMode,
    /// Number of association heads (one per GU in factored mode, zero in box mode).
    pub assoc_heads: usize,
    pub assoc_choices: usize,
    pub key_heads: usize,
    pub key_choices: usize,
    pub continuous_dim: usize,
}

impl ActionSpec {
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        let (u, g, a) = (cfg.num_gus, cfg.num_orus, cfg.num_uavs);
        let assoc_choices = g * (1 + a);
        match cfg.action_mode {
            ActionMode::Factored => Self {
                mode: ActionMode::Factored,
                assoc_heads: u,
                assoc_choices,
                key_heads: u,
                key_choices: KeyLength::ALL.len(),
                continuous_dim: 2 * a,
            },
            ActionMode::Box => Self {
                mode: ActionMode::Box,
                assoc_heads: 0,
                assoc_choices,
                key_heads: 0,
                key_choices: KeyLength::ALL.len(),
                continuous_dim: 2 * u + 2 * a,
            },
        }
    }
}

/// A raw policy output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub assoc: Vec<usize>,
    pub keys: Vec<usize>,
    /// Values in `[-1, 1]`; out-of-range entries are clamped.
    pub continuous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub outcome: StepOutcome,
}

fn bin(v: f64, n: usize) -> usize {
    (((v + 1.0) / 2.0 * n as f64).floor() as usize).min(n - 1)
}

fn observation_dim(cfg: &ScenarioConfig) -> usize {
    4 * cfg.num_gus + 2 * cfg.num_uavs + if cfg.rich_observation { 3 * cfg.num_orus } else { 0 }
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: ScenarioConfig,
    bounds: NormalizationBounds,
    spec: ActionSpec,
    state: WorldState,
    rng: ChaCha8Rng,
    done: bool,
}

impl Env {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let mut rng = instance_rng(cfg.rng_seed, 0);
        let state = generate_world(&cfg, &mut rng);
        Ok(Self {
            bounds: NormalizationBounds::from_config(&cfg),
            spec: ActionSpec::for_config(&cfg),
            state,
            rng,
            done: false,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &NormalizationBounds {
        &self.bounds
    }

    pub fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(&self.cfg)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Starts a new episode from `(seed, stream)`.
    pub fn reset_with(&mut self, seed: u64, stream: u64) -> Vec<f64> {
        self.rng = instance_rng(seed, stream);
        self.state = generate_world(&self.cfg, &mut self.rng);
        self.done = false;
        self.observe()
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.reset_with(seed, 0)
    }

    pub fn observe(&self) -> Vec<f64> {
        let c = &self.cfg;
        let mut o = Vec::with_capacity(self.observation_dim());
        for g in &self.state.gus {
            o.push(g.position.x / c.grid_width);
            o.push(g.position.y / c.grid_height);
            o.push(g.battery.fraction());
            o.push(g.data_bits as f64 / c.data_max_bits as f64);
        }
        for u in &self.state.uavs {
            o.push(u.position.x / c.grid_width);
            o.push(u.position.y / c.grid_height);
        }
        if c.rich_observation {
            for r in &self.state.orus {
                o.push(r.position.x / c.topology_width);
                o.push(r.position.y / c.topology_height);
                o.push((r.security_requirement as f64 - 6.0) / 6.0);
            }
        }
        o
    }

    /// Maps a raw action to a decision under the configured encoding.
    pub fn decode(&self, action: &Action) -> Result<DecisionVector, EnvError> {
        let s = &self.spec;
        let (u, g, a) = (self.cfg.num_gus, self.cfg.num_orus, self.cfg.num_uavs);
        if action.assoc.len() != s.assoc_heads
            || action.keys.len() != s.key_heads
            || action.continuous.len() != s.continuous_dim
        {
            return Err(EnvError::BadAction(format!(
                "expected {}/{}/{} entries, got {}/{}/{}",
                s.assoc_heads,
                s.key_heads,
                s.continuous_dim,
                action.assoc.len(),
                action.keys.len(),
                action.continuous.len()
            )));
        }
        if action.continuous.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::BadAction("non-finite continuous entry".into()));
        }
        let c: Vec<f64> = action.continuous.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let d_max = self.cfg.d_max;
        let (assoc_idx, key_idx, disp): (Vec<usize>, Vec<usize>, Vec<Point>) = match s.mode {
            ActionMode::Factored => {
                let s = d_max / std::f64::consts::SQRT_2;
                let disp = c.chunks(2).map(|p| Point::new(s * p[0], s * p[1])).collect();
                (action.assoc.clone(), action.keys.clone(), disp)
            }
            ActionMode::Box => {
                let assoc = c[..u].iter().map(|v| bin(*v, s.assoc_choices)).collect();
                let keys = c[u..2 * u].iter().map(|v| bin(*v, s.key_choices)).collect();
                let disp = c[2 * u..]
                    .chunks(2)
                    .map(|p| Point::new(d_max * p[0], d_max * p[1]))
                    .collect();
                (assoc, keys, disp)
            }
        };
        let associations = assoc_idx
            .iter()
            .map(|&i| {
                Association::from_index(i, g, a).ok_or_else(|| EnvError::BadAction(format!("association index {i}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let keys = key_idx
            .iter()
            .map(|&i| KeyLength::from_index(i).ok_or_else(|| EnvError::BadAction(format!("key index {i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DecisionVector {
            associations,
            keys,
            displacements: disp,
        })
    }

    /// Evaluates `decision` on the current state without advancing.
    pub fn evaluate(&self, decision: &DecisionVector) -> Result<StepOutcome, EnvError> {
        evaluate_step(&self.state, decision, &self.cfg, &self.bounds)
    }

    pub fn step(&mut self, action: &Action) -> Result<Transition, EnvError> {
        let d = self.decode(action)?;
        self.step_decision(&d)
    }

    pub fn step_decision(&mut self, decision: &DecisionVector) -> Result<Transition, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone(self.state.t));
        }
        let outcome = self.evaluate(decision)?;
        for (u, o) in self.state.uavs.iter_mut().zip(&outcome.uavs) {
            u.prev_position = u.position;
            u.position = o.position;
        }
        for (g, o) in self.state.gus.iter_mut().zip(&outcome.gus) {
            g.battery.debit(o.energy_compute, o.energy_comm);
        }
        step_mobility(&mut self.state, &self.cfg, &mut self.rng);
        for g in &mut self.state.gus {
            g.data_bits = draw_data_bits(&self.cfg, &mut self.rng);
        }
        self.state.t += 1;
        self.done = self.state.t >= self.cfg.horizon;
        Ok(Transition {
            observation: self.observe(),
            reward: outcome.final_reward,
            done: self.done,
            outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Env {
        Env::new(ScenarioConfig::default()).unwrap()
    }

    fn zero_action(e: &Env) -> Action {
        let s = e.action_spec();
        Action {
            assoc: vec![0; s.assoc_heads],
            keys: vec![0; s.key_heads],
            continuous: vec![0.0; s.continuous_dim],
        }
    }

    #[test]
    fn spec_shapes() {
        let e = env();
        let s = e.action_spec();
        assert_eq!((s.assoc_heads, s.assoc_choices, s.key_heads, s.key_choices, s.continuous_dim), (10, 8, 10, 8, 6));
        assert_eq!(e.observation_dim(), 46);
        let b = Env::new(ScenarioConfig {
            action_mode: ActionMode::Box,
            rich_observation: true,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(b.action_spec().continuous_dim, 26);
        assert_eq!(b.observation_dim(), 52);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = env();
        let mut b = env();
        assert_eq!(a.reset(42), b.reset(42));
        assert_ne!(a.reset(43), b.reset(42));
    }

    #[test]
    fn observation_in_unit_box() {
        let mut e = env();
        e.reset(1);
        let act = zero_action(&e);
        while !e.is_done() {
            let t = e.step(&act).unwrap();
            assert!(t.observation.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut e = env();
        e.reset(3);
        let act = zero_action(&e);
        for t in 0..10 {
            let tr = e.step(&act).unwrap();
            assert_eq!(tr.done, t == 9);
            assert_eq!(tr.outcome.t, t);
        }
        assert!(matches!(e.step(&act), Err(EnvError::EpisodeDone(10))));
    }

    #[test]
    fn factored_displacement_within_bound() {
        let e = env();
        let mut act = zero_action(&e);
        act.continuous = vec![1.0, 1.0, -1.0, 1.0, 7.0, -3.0];
        let d = e.decode(&act).unwrap();
        for p in d.displacements {
            assert!(p.norm() <= e.config().d_max + 1e-12);
            assert!((p.norm() - e.config().d_max).abs() < 1e-9);
        }
        act.continuous = vec![0.2, -0.4, 0.0, 0.0, 0.0, 0.0];
        let d = e.decode(&act).unwrap();
        let s = 50.0 / 2f64.sqrt();
        assert!((d.displacements[0].x - 0.2 * s).abs() < 1e-12);
        assert!((d.displacements[0].y + 0.4 * s).abs() < 1e-12);
    }

    #[test]
    fn box_decoding_bins() {
        let e = Env::new(ScenarioConfig {
            action_mode: ActionMode::Box,
            ..Default::default()
        })
        .unwrap();
        let mut c = vec![-1.0; 26];
        c[1] = 1.0;
        c[10] = 1.0;
        c[11] = -0.01;
        c[20] = 1.0;
        c[21] = 1.0;
        let d = e
            .decode(&Action {
                assoc: vec![],
                keys: vec![],
                continuous: c,
            })
            .unwrap();
        assert_eq!(d.associations[0], Association::Direct { oru: 0 });
        assert_eq!(d.associations[1], Association::Relay { uav: 2, oru: 1 });
        assert_eq!(d.keys[0].bits(), 4096);
        assert_eq!(d.keys[1].bits(), 256);
        assert_eq!(d.displacements[0], Point::new(50.0, 50.0));
    }

    #[test]
    fn bad_actions_rejected() {
        let e = env();
        let mut act = zero_action(&e);
        act.assoc[0] = 8;
        assert!(matches!(e.decode(&act), Err(EnvError::BadAction(_))));
        let mut act = zero_action(&e);
        act.keys.pop();
        assert!(e.decode(&act).is_err());
        let mut act = zero_action(&e);
        act.continuous[0] = f64::NAN;
        assert!(e.decode(&act).is_err());
    }

    #[test]
    fn step_commits_uav_moves_and_battery() {
        let mut e = env();
        e.reset(5);
        let before = e.state().clone();
        let mut act = zero_action(&e);
        act.continuous = vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0];
        let tr = e.step(&act).unwrap();
        for (i, u) in e.state().uavs.iter().enumerate() {
            assert_eq!(u.prev_position, before.uavs[i].position);
            assert!(u.position.x >= 0.0 && u.position.x <= 100.0);
            let moved = u.position.distance(u.prev_position);
            assert!((tr.outcome.uavs[i].velocity - moved / 5.0).abs() < 1e-12);
        }
        for (i, g) in e.state().gus.iter().enumerate() {
            let o = &tr.outcome.gus[i];
            let spent = before.gus[i].battery.capacity - g.battery.remaining;
            assert!((spent - (o.energy_compute + o.energy_comm)).abs() < 1e-9 || g.battery.remaining == 0.0);
        }
    }

    #[test]
    fn zero_uavs_allowed() {
        let mut e = Env::new(ScenarioConfig {
            num_uavs: 0,
            ..Default::default()
        })
        .unwrap();
        e.reset(0);
        assert_eq!(e.action_spec().assoc_choices, 2);
        let act = zero_action(&e);
        let tr = e.step(&act).unwrap();
        assert_eq!(tr.outcome.mean_norm_energy, 0.0);
    }
}
