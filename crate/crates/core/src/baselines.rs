//! Comparison policies: greedy nearest association with random UAV placement,
//! the same restricted to direct links, and a uniform random policy.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{distance_gu_oru, distance_gu_uav, distance_uav_oru};
use crate::config::{GreedyOrder, ScenarioConfig};
use crate::crypto::{KeyLength, SECURITY_MAX};
use crate::objective::{moved_uav_positions, Association, DecisionVector};
use crate::scenario::{Point, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NearestWithUavs,
    NoUav,
    Random,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::NearestWithUavs, PolicyKind::NoUav, PolicyKind::Random];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::NearestWithUavs => "nearest_with_uavs",
            PolicyKind::NoUav => "no_uav",
            PolicyKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<PolicyKind> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Displacement with uniform direction and magnitude distributed uniformly over the `d_max` disk.
pub fn random_displacement(d_max: f64, rng: &mut impl Rng) -> Point {
    let theta = rng.random_range(0.0..2.0 * PI);
    let r = d_max * rng.random_range(0.0f64..=1.0).sqrt();
    Point::new(r * theta.cos(), r * theta.sin())
}

fn key_for(requirement: u32) -> KeyLength {
    KeyLength::smallest_meeting(requirement as f64)
        .or_else(|| KeyLength::smallest_meeting(SECURITY_MAX))
        .expect("the key set reaches the maximum security level")
}

fn nearest_oru_to_uav(state: &WorldState, pos: Point, altitude: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (g, o) in state.orus.iter().enumerate() {
        let d = distance_uav_oru(pos, o.position, altitude, o.height);
        if d < best.0 {
            best = (d, g);
        }
    }
    best.1
}

/// Greedy nearest assignment given fixed UAV displacements.
fn greedy_assign(
    state: &WorldState,
    cfg: &ScenarioConfig,
    displacements: Vec<Point>,
    allow_relays: bool,
    order: &[usize],
) -> DecisionVector {
    let decision = DecisionVector {
        associations: vec![Association::Direct { oru: 0 }; state.gus.len()],
        keys: vec![KeyLength::ALL[0]; state.gus.len()],
        displacements,
    };
    let positions = moved_uav_positions(state, &decision, cfg);
    let mut decision = decision;
    let mut direct_used = vec![0usize; state.orus.len()];
    let mut relay_used = vec![0usize; state.uavs.len()];
    for &u in order {
        let gu = &state.gus[u];
        // (distance, tie-break rank, association); O-RUs rank ahead of UAVs at equal distance.
        let mut best: Option<(f64, usize, Association)> = None;
        let mut consider = |d: f64, rank: usize, a: Association| {
            if best.is_none_or(|(bd, br, _)| d < bd || (d == bd && rank < br)) {
                best = Some((d, rank, a));
            }
        };
        for (g, o) in state.orus.iter().enumerate() {
            if direct_used[g] < o.resource_blocks {
                consider(distance_gu_oru(gu.position, o.position, o.height), g, Association::Direct { oru: g });
            }
        }
        if allow_relays {
            for (a, uav) in state.uavs.iter().enumerate() {
                if relay_used[a] < uav.resource_blocks {
                    let oru = nearest_oru_to_uav(state, positions[a], uav.altitude);
                    consider(
                        distance_gu_uav(gu.position, positions[a], uav.altitude),
                        state.orus.len() + a,
                        Association::Relay { uav: a, oru },
                    );
                }
            }
        }
        let assoc = match best {
            Some((_, _, a)) => a,
            None => {
                let mut nearest = (f64::INFINITY, 0);
                for (g, o) in state.orus.iter().enumerate() {
                    let d = distance_gu_oru(gu.position, o.position, o.height);
                    if d < nearest.0 {
                        nearest = (d, g);
                    }
                }
                Association::Direct { oru: nearest.1 }
            }
        };
        match assoc {
            Association::Direct { oru } => direct_used[oru] += 1,
            Association::Relay { uav, .. } => relay_used[uav] += 1,
        }
        decision.associations[u] = assoc;
        decision.keys[u] = key_for(state.orus[assoc.oru()].security_requirement);
    }
    decision
}

fn gu_order(n: usize, order: GreedyOrder, rng: &mut impl Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    if order == GreedyOrder::Shuffled {
        v.shuffle(rng);
    }
    v
}

/// Random UAV placement first, then greedy nearest association with minimum-security keys.
pub fn nearest_policy_act(state: &WorldState, cfg: &ScenarioConfig, rng: &mut impl Rng) -> DecisionVector {
    let disp = state.uavs.iter().map(|_| random_displacement(cfg.d_max, rng)).collect();
    let order = gu_order(state.gus.len(), cfg.heuristic_order, rng);
    greedy_assign(state, cfg, disp, true, &order)
}

/// Direct links only; UAVs hover.
pub fn no_uav_policy_act(state: &WorldState, cfg: &ScenarioConfig, rng: &mut impl Rng) -> DecisionVector {
    let order = gu_order(state.gus.len(), cfg.heuristic_order, rng);
    greedy_assign(state, cfg, vec![Point::default(); state.uavs.len()], false, &order)
}

pub fn random_policy_act(state: &WorldState, cfg: &ScenarioConfig, rng: &mut impl Rng) -> DecisionVector {
    let (g, a) = (state.orus.len(), state.uavs.len());
    DecisionVector {
        associations: state
            .gus
            .iter()
            .map(|_| Association::from_index(rng.random_range(0..g * (1 + a)), g, a).unwrap())
            .collect(),
        keys: state
            .gus
            .iter()
            .map(|_| KeyLength::ALL[rng.random_range(0..KeyLength::ALL.len())])
            .collect(),
        displacements: state.uavs.iter().map(|_| random_displacement(cfg.d_max, rng)).collect(),
    }
}

/// A heuristic policy with its own RNG stream.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    pub kind: PolicyKind,
    rng: ChaCha8Rng,
}

impl HeuristicPolicy {
    pub fn new(kind: PolicyKind, rng: ChaCha8Rng) -> Self {
        Self { kind, rng }
    }

    pub fn act(&mut self, state: &WorldState, cfg: &ScenarioConfig) -> DecisionVector {
        match self.kind {
            PolicyKind::NearestWithUavs => nearest_policy_act(state, cfg, &mut self.rng),
            PolicyKind::NoUav => no_uav_policy_act(state, cfg, &mut self.rng),
            PolicyKind::Random => random_policy_act(state, cfg, &mut self.rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::GuEnergyLedger;
    use crate::objective::{evaluate_step, NormalizationBounds};
    use crate::scenario::{generate_scenario, GroundUser, Heading, RadioUnit, UavRelay};
    use rand::SeedableRng;

    fn gu(id: usize, x: f64, y: f64) -> GroundUser {
        GroundUser {
            id,
            position: Point::new(x, y),
            heading: Heading::PosX,
            clock: 2e9,
            compute_budget: 1e7,
            data_bits: 8_388_608,
            battery: GuEnergyLedger::new(100.0),
        }
    }

    fn oru(id: usize, x: f64, y: f64, w: u32) -> RadioUnit {
        RadioUnit {
            id,
            position: Point::new(x, y),
            height: 10.0,
            clock: 3.5e9,
            security_requirement: w,
            resource_blocks: 3,
        }
    }

    fn uav(x: f64, y: f64) -> UavRelay {
        UavRelay {
            id: 0,
            position: Point::new(x, y),
            prev_position: Point::new(x, y),
            altitude: 100.0,
            resource_blocks: 3,
        }
    }

    #[test]
    fn adjacent_gu_goes_direct_with_min_key() {
        let cfg = ScenarioConfig::default();
        let w = WorldState {
            t: 0,
            gus: vec![gu(0, 1.0, 1.0), gu(1, 99.0, 99.0)],
            orus: vec![oru(0, 0.0, 0.0, 6), oru(1, 100.0, 100.0, 9)],
            uavs: vec![uav(50.0, 50.0)],
        };
        let d = greedy_assign(&w, &cfg, vec![Point::default()], true, &[0, 1]);
        assert_eq!(d.associations, vec![Association::Direct { oru: 0 }, Association::Direct { oru: 1 }]);
        assert_eq!(d.keys[0].bits(), 64);
        assert_eq!(d.keys[1].bits(), 1024);
    }

    #[test]
    fn uav_overflow_goes_to_next_nearest() {
        // Hand trace: the UAV hovers at 100 m right above four GUs (3-D distance 100 m);
        // both O-RUs are ~420 m away. GUs 0..2 fill the UAV, GU 3 falls through to O-RU 0.
        let cfg = ScenarioConfig {
            grid_width: 500.0,
            grid_height: 500.0,
            ..Default::default()
        };
        let w = WorldState {
            t: 0,
            gus: (0..4).map(|i| gu(i, 250.0 + i as f64 * 0.1, 250.0)).collect(),
            orus: vec![oru(0, 0.0, 400.0, 6), oru(1, 500.0, 0.0, 6)],
            uavs: vec![uav(250.0, 250.0)],
        };
        let d = greedy_assign(&w, &cfg, vec![Point::default()], true, &[0, 1, 2, 3]);
        for i in 0..3 {
            assert!(matches!(d.associations[i], Association::Relay { uav: 0, .. }));
        }
        assert_eq!(d.associations[3], Association::Direct { oru: 0 });
    }

    #[test]
    fn saturated_targets_fall_back_to_nearest_oru() {
        let cfg = ScenarioConfig::default();
        let w = WorldState {
            t: 0,
            gus: (0..5).map(|i| gu(i, 10.0 + i as f64, 10.0)).collect(),
            orus: vec![oru(0, 0.0, 0.0, 6)],
            uavs: vec![],
        };
        let d = no_uav_policy_act(&w, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(d.associations.iter().all(|a| *a == Association::Direct { oru: 0 }));
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(out.flags.oru_rbs, vec![true]);
    }

    #[test]
    fn never_relays_past_a_nearer_free_oru() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..50 {
            let world = generate_scenario(&ScenarioConfig {
                rng_seed: seed,
                ..cfg.clone()
            })
            .unwrap();
            let d = nearest_policy_act(&world, &cfg, &mut rng);
            let pos = moved_uav_positions(&world, &d, &cfg);
            for (u, a) in d.associations.iter().enumerate() {
                if let Association::Relay { uav, .. } = a {
                    let du = distance_gu_uav(world.gus[u].position, pos[*uav], world.uavs[*uav].altitude);
                    // a nearer O-RU may only have been skipped because it was full
                    let full: Vec<usize> = (0..world.orus.len())
                        .filter(|g| {
                            d.associations[..u]
                                .iter()
                                .filter(|x| **x == Association::Direct { oru: *g })
                                .count()
                                >= world.orus[*g].resource_blocks
                        })
                        .collect();
                    for (g, o) in world.orus.iter().enumerate() {
                        let dg = distance_gu_oru(world.gus[u].position, o.position, o.height);
                        assert!(dg >= du || full.contains(&g));
                    }
                }
            }
            for (u, k) in d.keys.iter().enumerate() {
                let w = world.orus[d.associations[u].oru()].security_requirement as f64;
                assert_eq!(*k, KeyLength::smallest_meeting(w).unwrap());
            }
        }
    }

    #[test]
    fn displacement_within_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(random_displacement(50.0, &mut rng).norm() <= 50.0 + 1e-12);
        }
    }

    #[test]
    fn no_uav_with_zero_uavs() {
        let cfg = ScenarioConfig {
            num_uavs: 0,
            ..Default::default()
        };
        let world = generate_scenario(&cfg).unwrap();
        let mut p = HeuristicPolicy::new(PolicyKind::NoUav, ChaCha8Rng::seed_from_u64(0));
        let d = p.act(&world, &cfg);
        assert!(d.displacements.is_empty());
        assert!(d.associations.iter().all(|a| a.uav().is_none()));
        let mut n = HeuristicPolicy::new(PolicyKind::NearestWithUavs, ChaCha8Rng::seed_from_u64(0));
        assert_eq!(n.act(&world, &cfg).associations.len(), cfg.num_gus);
    }

    #[test]
    fn random_policy_is_valid() {
        let cfg = ScenarioConfig::default();
        let world = generate_scenario(&cfg).unwrap();
        let mut p = HeuristicPolicy::new(PolicyKind::Random, ChaCha8Rng::seed_from_u64(0));
        let b = NormalizationBounds::from_config(&cfg);
        for _ in 0..20 {
            assert!(evaluate_step(&world, &p.act(&world, &cfg), &cfg, &b).is_ok());
        }
        assert_eq!(PolicyKind::parse("no_uav"), Some(PolicyKind::NoUav));
    }
}
