//! Per-timestep evaluation of a joint decision: latencies, energies, security,
//! the seven penalized constraint families, the penalty, the step reward and
//! the episode objective.
//!
//! Constraint bookkeeping is per entity: a family's violation count is the
//! number of entities (GUs, UAVs, O-RUs or UAV pairs) breaking it in that
//! step. Association uniqueness, the key-length domain and binary
//! association variables hold by construction of [`DecisionVector`] and are
//! checked structurally in [`evaluate_step`].

use serde::{Deserialize, Serialize};

use crate::channel::{self, hop_latency};
use crate::config::ScenarioConfig;
use crate::crypto::{
    decryption_latency, encryption_latency, security_level, CipherSuite, CycleCosts, Direction, KeyLength,
    SECURITY_MAX, SECURITY_MIN,
};
use crate::energy::{gu_step_energy, uav_slot_energy, uav_velocity, UavEnergyParams};
use crate::error::EnvError;
use crate::scenario::{GroundUser, Point, WorldState};

/// Where a GU sends its data this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Association {
    Direct { oru: usize },
    Relay { uav: usize, oru: usize },
}

impl Association {
    pub fn oru(self) -> usize {
        match self {
            Association::Direct { oru } | Association::Relay { oru, .. } => oru,
        }
    }

    pub fn uav(self) -> Option<usize> {
        match self {
            Association::Direct { .. } => None,
            Association::Relay { uav, .. } => Some(uav),
        }
    }

    /// Flat index: `0..G` direct, then `G + a*G + g` for relays.
    pub fn index(self, num_orus: usize) -> usize {
        match self {
            Association::Direct { oru } => oru,
            Association::Relay { uav, oru } => num_orus + uav * num_orus + oru,
        }
    }

    pub fn from_index(i: usize, num_orus: usize, num_uavs: usize) -> Option<Association> {
        if i < num_orus {
            Some(Association::Direct { oru: i })
        } else if i < num_orus * (1 + num_uavs) {
            let r = i - num_orus;
            Some(Association::Relay {
                uav: r / num_orus,
                oru: r % num_orus,
            })
        } else {
            None
        }
    }
}

/// One timestep's joint decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub associations: Vec<Association>,
    pub keys: Vec<KeyLength>,
    /// Requested UAV displacement in meters. Its length is not bounded here.
    pub displacements: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintFamily {
    Security,
    ResourceBlocks,
    Compute,
    Battery,
    Ber,
    Collision,
    MaxDisplacement,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 7] = [
        ConstraintFamily::Security,
        ConstraintFamily::ResourceBlocks,
        ConstraintFamily::Compute,
        ConstraintFamily::Battery,
        ConstraintFamily::Ber,
        ConstraintFamily::Collision,
        ConstraintFamily::MaxDisplacement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::Security => "security",
            ConstraintFamily::ResourceBlocks => "resource_blocks",
            ConstraintFamily::Compute => "compute",
            ConstraintFamily::Battery => "battery",
            ConstraintFamily::Ber => "ber",
            ConstraintFamily::Collision => "collision",
            ConstraintFamily::MaxDisplacement => "max_displacement",
        }
    }

    pub fn weight(self, cfg: &ScenarioConfig) -> f64 {
        match self {
            ConstraintFamily::Security => cfg.penalty_security,
            ConstraintFamily::ResourceBlocks => cfg.penalty_rbs,
            ConstraintFamily::Compute => cfg.penalty_compute,
            ConstraintFamily::Battery => cfg.penalty_battery,
            ConstraintFamily::Ber => cfg.penalty_ber,
            ConstraintFamily::Collision => cfg.penalty_collision,
            ConstraintFamily::MaxDisplacement => cfg.penalty_dmax,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// A count per constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FamilyCounts(pub [usize; 7]);

impl FamilyCounts {
    pub fn get(&self, f: ConstraintFamily) -> usize {
        self.0[f.slot()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn add(&mut self, other: &FamilyCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

/// Violation flags, `true` meaning violated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintFlags {
    pub security: Vec<bool>,
    pub compute: Vec<bool>,
    pub battery: Vec<bool>,
    pub ber: Vec<bool>,
    pub uav_rbs: Vec<bool>,
    pub oru_rbs: Vec<bool>,
    /// Upper-triangle UAV pairs in `(0,1), (0,2), .., (1,2), ..` order.
    pub collision: Vec<bool>,
    pub max_displacement: Vec<bool>,
}

fn count(v: &[bool]) -> usize {
    v.iter().filter(|b| **b).count()
}

impl ConstraintFlags {
    pub fn violations(&self) -> FamilyCounts {
        let mut c = FamilyCounts::default();
        c.0[ConstraintFamily::Security.slot()] = count(&self.security);
        c.0[ConstraintFamily::ResourceBlocks.slot()] = count(&self.uav_rbs) + count(&self.oru_rbs);
        c.0[ConstraintFamily::Compute.slot()] = count(&self.compute);
        c.0[ConstraintFamily::Battery.slot()] = count(&self.battery);
        c.0[ConstraintFamily::Ber.slot()] = count(&self.ber);
        c.0[ConstraintFamily::Collision.slot()] = count(&self.collision);
        c.0[ConstraintFamily::MaxDisplacement.slot()] = count(&self.max_displacement);
        c
    }

    /// Number of entity checks per family.
    pub fn checks(&self) -> FamilyCounts {
        let mut c = FamilyCounts::default();
        c.0[ConstraintFamily::Security.slot()] = self.security.len();
        c.0[ConstraintFamily::ResourceBlocks.slot()] = self.uav_rbs.len() + self.oru_rbs.len();
        c.0[ConstraintFamily::Compute.slot()] = self.compute.len();
        c.0[ConstraintFamily::Battery.slot()] = self.battery.len();
        c.0[ConstraintFamily::Ber.slot()] = self.ber.len();
        c.0[ConstraintFamily::Collision.slot()] = self.collision.len();
        c.0[ConstraintFamily::MaxDisplacement.slot()] = self.max_displacement.len();
        c
    }

    pub fn all_clear(&self) -> bool {
        self.violations().total() == 0
    }
}

/// Maxima used to map latency and energy into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub latency_max: f64,
    pub energy_max: f64,
    pub security_min: f64,
    pub security_max: f64,
}

impl NormalizationBounds {
    /// Latency bound: RSA-4096 encryption and decryption of the largest
    /// payload on the slowest clocks, plus the slower of the direct and
    /// two-hop paths at the largest geometric distances. Energy bound: one
    /// slot flown at `d_max / slot_duration`.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let costs = CycleCosts::from_config(cfg);
        let rsa = CipherSuite::new(KeyLength::ALL[7]);
        let d = cfg.data_max_bits;
        let crypto = encryption_latency(&rsa, d, cfg.gu_clock_min, &costs)
            + decryption_latency(&rsa, d, cfg.oru_clock_min, &costs);
        let diag = cfg.grid_width.max(cfg.topology_width).hypot(cfg.grid_height.max(cfg.topology_height));
        let ch = channel::ChannelParams::from_config(cfg);
        let direct = channel::link_budget(cfg.oru_height.hypot(diag), cfg.power_ug, cfg.bandwidth_ug, &ch);
        let up = channel::link_budget(cfg.uav_altitude.hypot(diag), cfg.power_ua, cfg.bandwidth_ua, &ch);
        let back = channel::link_budget(
            (cfg.uav_altitude - cfg.oru_height).hypot(diag),
            cfg.power_ag,
            cfg.bandwidth_ag,
            &ch,
        );
        let comm = hop_latency(d, direct.rate).max(hop_latency(d, up.rate) + hop_latency(d, back.rate));
        let ep = UavEnergyParams::from_config(cfg);
        Self {
            latency_max: crypto + comm,
            energy_max: uav_slot_energy(cfg.d_max / cfg.slot_duration, &ep),
            security_min: SECURITY_MIN,
            security_max: SECURITY_MAX,
        }
    }

    pub fn latency(&self, l: f64) -> f64 {
        (l / self.latency_max).clamp(0.0, 1.0)
    }

    pub fn energy(&self, e: f64) -> f64 {
        (e / self.energy_max).clamp(0.0, 1.0)
    }

    pub fn security(&self, s: f64) -> f64 {
        ((s - self.security_min) / (self.security_max - self.security_min)).clamp(0.0, 1.0)
    }
}

/// Latency decomposition for one GU.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyParts {
    pub enc: f64,
    /// Direct hop, or GU-to-UAV hop when relayed.
    pub first_hop: f64,
    /// UAV-to-O-RU hop; zero for direct links.
    pub backhaul: f64,
    pub dec: f64,
    /// BER of the first hop.
    pub ber: f64,
    /// Some hop has zero rate.
    pub unusable: bool,
}

impl LatencyParts {
    pub fn comm(&self) -> f64 {
        self.first_hop + self.backhaul
    }

    pub fn total(&self) -> f64 {
        self.enc + self.comm() + self.dec
    }
}

/// Latency of one GU under an association, with UAVs at `uav_positions`.
pub fn total_latency(
    gu: &GroundUser,
    assoc: Association,
    key: KeyLength,
    uav_positions: &[Point],
    state: &WorldState,
    cfg: &ScenarioConfig,
) -> LatencyParts {
    let costs = CycleCosts::from_config(cfg);
    let suite = CipherSuite::new(key);
    let oru = &state.orus[assoc.oru()];
    let enc = encryption_latency(&suite, gu.data_bits, gu.clock, &costs);
    let dec = decryption_latency(&suite, gu.data_bits, oru.clock, &costs);
    match assoc {
        Association::Direct { .. } => {
            let link = channel::direct_link(gu, oru, cfg);
            LatencyParts {
                enc,
                first_hop: hop_latency(gu.data_bits, link.rate),
                backhaul: 0.0,
                dec,
                ber: link.ber,
                unusable: link.rate <= 0.0,
            }
        }
        Association::Relay { uav, .. } => {
            let altitude = state.uavs[uav].altitude;
            let up = channel::access_link(gu, uav_positions[uav], altitude, cfg);
            let back = channel::backhaul_link(uav_positions[uav], altitude, oru, cfg);
            LatencyParts {
                enc,
                first_hop: hop_latency(gu.data_bits, up.rate),
                backhaul: hop_latency(gu.data_bits, back.rate),
                dec,
                ber: up.ber,
                unusable: up.rate <= 0.0 || back.rate <= 0.0,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuOutcome {
    pub association: Association,
    pub key: KeyLength,
    pub latency: f64,
    pub tau_enc: f64,
    pub tau_comm: f64,
    pub tau_dec: f64,
    pub security: f64,
    pub ber: f64,
    /// First-hop BER above the limit.
    pub disconnected: bool,
    pub energy_compute: f64,
    pub energy_comm: f64,
    pub norm_latency: f64,
    pub norm_security: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavOutcome {
    pub position: Point,
    pub velocity: f64,
    pub energy: f64,
    pub norm_energy: f64,
    pub relayed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub gus: Vec<GuOutcome>,
    pub uavs: Vec<UavOutcome>,
    pub flags: ConstraintFlags,
    pub violations: FamilyCounts,
    pub checks: FamilyCounts,
    pub mean_norm_latency: f64,
    pub mean_norm_energy: f64,
    pub mean_norm_security: f64,
    pub penalty: f64,
    pub reward: f64,
    pub final_reward: f64,
}

impl StepOutcome {
    /// This step's share of the episode objective.
    pub fn objective(&self) -> f64 {
        let e: f64 = self.uavs.iter().map(|u| u.norm_energy).sum();
        let l: f64 = self.gus.iter().map(|g| g.norm_latency).sum();
        let s: f64 = self.gus.iter().map(|g| 1.0 - g.norm_security).sum();
        e + l + s
    }

    pub fn disconnected(&self) -> usize {
        self.gus.iter().filter(|g| g.disconnected).count()
    }
}

/// Sum of normalized energy, latency and security deficit over all steps.
pub fn objective_value(outcomes: &[StepOutcome]) -> f64 {
    outcomes.iter().map(StepOutcome::objective).sum()
}

/// Weighted violation count.
pub fn penalty(violations: &FamilyCounts, cfg: &ScenarioConfig) -> f64 {
    ConstraintFamily::ALL
        .iter()
        .map(|f| violations.get(*f) as f64 * f.weight(cfg))
        .sum()
}

/// Positive part of the step reward from mean normalized components.
pub fn step_reward(mean_latency: f64, mean_energy: f64, mean_security: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.w_latency * (1.0 - mean_latency) + cfg.w_energy * (1.0 - mean_energy) + cfg.w_security * mean_security
}

/// `r - p` for an evaluated step.
pub fn final_reward(outcome: &StepOutcome) -> f64 {
    outcome.reward - outcome.penalty
}

fn check_shape(state: &WorldState, d: &DecisionVector) -> Result<(), EnvError> {
    let (u, g, a) = (state.gus.len(), state.orus.len(), state.uavs.len());
    if d.associations.len() != u || d.keys.len() != u {
        return Err(EnvError::BadDecision(format!(
            "expected {u} associations and keys, got {} and {}",
            d.associations.len(),
            d.keys.len()
        )));
    }
    if d.displacements.len() != a {
        return Err(EnvError::BadDecision(format!(
            "expected {a} displacements, got {}",
            d.displacements.len()
        )));
    }
    for (i, assoc) in d.associations.iter().enumerate() {
        let ok = assoc.oru() < g && assoc.uav().is_none_or(|x| x < a);
        if !ok {
            return Err(EnvError::BadDecision(format!("GU {i}: association {assoc:?} out of range")));
        }
    }
    if d.displacements.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(EnvError::BadDecision("non-finite displacement".into()));
    }
    Ok(())
}

/// UAV positions after applying the requested displacements, clamped to the grid.
pub fn moved_uav_positions(state: &WorldState, d: &DecisionVector, cfg: &ScenarioConfig) -> Vec<Point> {
    state
        .uavs
        .iter()
        .zip(&d.displacements)
        .map(|(u, dp)| u.position.offset(*dp).clamp_to(cfg.grid_width, cfg.grid_height))
        .collect()
}

/// Evaluates a decision against the current state without mutating it.
pub fn evaluate_step(
    state: &WorldState,
    d: &DecisionVector,
    cfg: &ScenarioConfig,
    bounds: &NormalizationBounds,
) -> Result<StepOutcome, EnvError> {
    check_shape(state, d)?;
    let costs = CycleCosts::from_config(cfg);
    let positions = moved_uav_positions(state, d, cfg);
    let na = state.uavs.len();

    let mut flags = ConstraintFlags::default();
    let mut gus = Vec::with_capacity(state.gus.len());
    let mut relayed = vec![0usize; na];
    let mut direct = vec![0usize; state.orus.len()];
    for (i, gu) in state.gus.iter().enumerate() {
        let assoc = d.associations[i];
        let key = d.keys[i];
        match assoc {
            Association::Direct { oru } => direct[oru] += 1,
            Association::Relay { uav, .. } => relayed[uav] += 1,
        }
        let parts = total_latency(gu, assoc, key, &positions, state, cfg);
        let latency = parts.total();
        let security = security_level(key).0;
        let (cp, cm) = gu_step_energy(parts.enc, parts.comm(), cfg.compute_power, cfg.comm_power);
        let suite = CipherSuite::new(key);
        let workload = key.bits() as f64 * suite.complexity(Direction::Encrypt, &costs);
        let disconnected = parts.ber > cfg.ber_max;

        flags.security.push(security < state.orus[assoc.oru()].security_requirement as f64);
        flags.compute.push(workload > gu.compute_budget);
        flags.battery.push(gu.battery.would_overdraw(cp, cm));
        flags.ber.push(disconnected || parts.unusable);

        gus.push(GuOutcome {
            association: assoc,
            key,
            latency,
            tau_enc: parts.enc,
            tau_comm: parts.comm(),
            tau_dec: parts.dec,
            security,
            ber: parts.ber,
            disconnected,
            energy_compute: cp,
            energy_comm: cm,
            norm_latency: bounds.latency(latency),
            norm_security: bounds.security(security),
        });
    }
    flags.uav_rbs = state
        .uavs
        .iter()
        .zip(&relayed)
        .map(|(u, n)| *n > u.resource_blocks)
        .collect();
    flags.oru_rbs = state
        .orus
        .iter()
        .zip(&direct)
        .map(|(o, n)| *n > o.resource_blocks)
        .collect();
    for i in 0..na {
        for j in i + 1..na {
            flags.collision.push(positions[i].distance(positions[j]) < cfg.d_min);
        }
    }
    flags.max_displacement = d.displacements.iter().map(|p| p.norm() > cfg.d_max + 1e-9).collect();

    let ep = UavEnergyParams::from_config(cfg);
    let uavs: Vec<UavOutcome> = state
        .uavs
        .iter()
        .zip(&positions)
        .zip(&relayed)
        .map(|((u, p), n)| {
            let velocity = uav_velocity(u.position, *p, cfg.slot_duration);
            let energy = uav_slot_energy(velocity, &ep);
            UavOutcome {
                position: *p,
                velocity,
                energy,
                norm_energy: bounds.energy(energy),
                relayed: *n,
            }
        })
        .collect();

    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| if n == 0 { 0.0 } else { xs.sum::<f64>() / n as f64 };
    let mean_norm_latency = mean(&mut gus.iter().map(|g| g.norm_latency), gus.len());
    let mean_norm_security = mean(&mut gus.iter().map(|g| g.norm_security), gus.len());
    let mean_norm_energy = mean(&mut uavs.iter().map(|u| u.norm_energy), uavs.len());

    let violations = flags.violations();
    let checks = flags.checks();
    let p = penalty(&violations, cfg);
    let r = step_reward(mean_norm_latency, mean_norm_energy, mean_norm_security, cfg);
    Ok(StepOutcome {
        t: state.t,
        gus,
        uavs,
        flags,
        violations,
        checks,
        mean_norm_latency,
        mean_norm_energy,
        mean_norm_security,
        penalty: p,
        reward: r,
        final_reward: r - p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::GuEnergyLedger;
    use crate::scenario::{Heading, RadioUnit, UavRelay};

    pub(crate) fn gu(id: usize, x: f64, y: f64) -> GroundUser {
        GroundUser {
            id,
            position: Point::new(x, y),
            heading: Heading::PosX,
            clock: 1.8e9,
            compute_budget: 1.7e7,
            data_bits: 8_388_608,
            battery: GuEnergyLedger::new(250.0),
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

    fn uav(id: usize, x: f64, y: f64) -> UavRelay {
        UavRelay {
            id,
            position: Point::new(x, y),
            prev_position: Point::new(x, y),
            altitude: 100.0,
            resource_blocks: 3,
        }
    }

    fn world() -> WorldState {
        WorldState {
            t: 0,
            gus: vec![gu(0, 10.0, 10.0), gu(1, 80.0, 20.0), gu(2, 50.0, 50.0), gu(3, 55.0, 52.0)],
            orus: vec![oru(0, 0.0, 0.0, 6), oru(1, 100.0, 100.0, 12)],
            uavs: vec![uav(0, 50.0, 50.0)],
        }
    }

    fn k(bits: u32) -> KeyLength {
        KeyLength::try_from(bits).unwrap()
    }

    fn all_direct(w: &WorldState, key: u32) -> DecisionVector {
        DecisionVector {
            associations: w.gus.iter().map(|_| Association::Direct { oru: 0 }).collect(),
            keys: vec![k(key); w.gus.len()],
            displacements: vec![Point::default(); w.uavs.len()],
        }
    }

    #[test]
    fn association_index_round_trip() {
        for i in 0..8 {
            let a = Association::from_index(i, 2, 3).unwrap();
            assert_eq!(a.index(2), i);
        }
        assert_eq!(Association::from_index(2, 2, 3), Some(Association::Relay { uav: 0, oru: 0 }));
        assert_eq!(Association::from_index(8, 2, 3), None);
    }

    #[test]
    fn latency_parts_sum() {
        let p = LatencyParts {
            enc: 0.1,
            first_hop: 0.1,
            backhaul: 0.0,
            dec: 0.1,
            ber: 0.0,
            unusable: false,
        };
        assert!((p.total() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn relay_adds_a_hop() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let pos: Vec<Point> = w.uavs.iter().map(|u| u.position).collect();
        let direct = total_latency(&w.gus[2], Association::Direct { oru: 0 }, k(64), &pos, &w, &cfg);
        let relay = total_latency(&w.gus[2], Association::Relay { uav: 0, oru: 0 }, k(64), &pos, &w, &cfg);
        assert!(relay.backhaul > 0.0);
        assert_eq!(relay.enc, direct.enc);
        assert_eq!(relay.dec, direct.dec);
    }

    #[test]
    fn direct_latency_matches_hand_composition() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let g = &w.gus[0];
        let parts = total_latency(g, Association::Direct { oru: 0 }, k(64), &[], &w, &cfg);
        // Independent composition: DES, unit costs, 8 388 608 bits, Q = 1.8 GHz, P = 3.5 GHz.
        let blocks = 131_072.0;
        let enc = 336.0 * blocks / 1.8e9;
        let dec = 336.0 * blocks / 3.5e9;
        let d2 = 10.0f64 * 10.0 + 10.0 * 10.0 + 10.0 * 10.0;
        let snr = 1.0 * (1e-6 / d2) / 1e-12;
        let comm = 8_388_608.0 / (50e6 * (1.0 + snr).log2());
        assert!((parts.total() - (enc + comm + dec)).abs() / (enc + comm + dec) < 1e-9);
    }

    #[test]
    fn rb_overflow_on_uav() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let d = DecisionVector {
            associations: vec![Association::Relay { uav: 0, oru: 0 }; 4],
            keys: vec![k(64); 4],
            displacements: vec![Point::default()],
        };
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(out.flags.uav_rbs, vec![true]);
        assert_eq!(out.violations.get(ConstraintFamily::ResourceBlocks), 1);
    }

    #[test]
    fn security_violation() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let mut d = all_direct(&w, 64);
        d.associations[0] = Association::Direct { oru: 1 };
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(out.flags.security, vec![true, false, false, false]);
    }

    #[test]
    fn collision_violation() {
        let cfg = ScenarioConfig::default();
        let mut w = world();
        w.uavs.push(uav(1, 50.0, 50.0));
        let d = all_direct(&w, 64);
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(out.flags.collision, vec![true]);
        assert_eq!(out.checks.get(ConstraintFamily::Collision), 1);
    }

    #[test]
    fn max_displacement_flag() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let mut d = all_direct(&w, 64);
        d.displacements[0] = Point::new(cfg.d_max, 1.0);
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(out.flags.max_displacement, vec![true]);
    }

    #[test]
    fn compute_flag_uses_key_bits_times_cycles_per_block() {
        let cfg = ScenarioConfig::default();
        let mut w = world();
        // AES-128 needs 128 * 6104 = 781 312 at unit costs.
        w.gus[0].compute_budget = 781_312.0;
        w.gus[1].compute_budget = 781_311.0;
        let d = all_direct(&w, 128);
        let out = evaluate_step(&w, &d, &cfg, &NormalizationBounds::from_config(&cfg)).unwrap();
        assert_eq!(&out.flags.compute[..2], &[false, true]);
    }

    #[test]
    fn penalty_is_weighted_sum() {
        let cfg = ScenarioConfig::default();
        assert_eq!(penalty(&FamilyCounts::default(), &cfg), 0.0);
        let mut c = FamilyCounts::default();
        c.0[ConstraintFamily::Security as usize] = 1;
        c.0[ConstraintFamily::Collision as usize] = 1;
        assert_eq!(penalty(&c, &cfg), 2.0);
        let heavy = ScenarioConfig {
            penalty_rbs: 2.5,
            ..cfg.clone()
        };
        let mut rb = FamilyCounts::default();
        rb.0[ConstraintFamily::ResourceBlocks as usize] = 2;
        assert_eq!(penalty(&rb, &heavy), 5.0);
    }

    #[test]
    fn reward_examples() {
        let cfg = ScenarioConfig::default();
        assert!((step_reward(0.5, 0.5, 0.5, &cfg) - 0.5).abs() < 1e-12);
        assert!((step_reward(0.0, 0.0, 1.0, &cfg) - 1.0).abs() < 1e-12);
        let fake = StepOutcome {
            t: 0,
            gus: vec![],
            uavs: vec![],
            flags: ConstraintFlags::default(),
            violations: FamilyCounts::default(),
            checks: FamilyCounts::default(),
            mean_norm_latency: 0.0,
            mean_norm_energy: 0.0,
            mean_norm_security: 0.0,
            penalty: 2.0,
            reward: 0.8,
            final_reward: -1.2,
        };
        assert!((final_reward(&fake) + 1.2).abs() < 1e-12);
    }

    #[test]
    fn penalty_zero_iff_clear() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let bounds = NormalizationBounds::from_config(&cfg);
        let clean = DecisionVector {
            associations: vec![
                Association::Direct { oru: 0 },
                Association::Direct { oru: 0 },
                Association::Relay { uav: 0, oru: 0 },
                Association::Direct { oru: 0 },
            ],
            keys: vec![k(64); 4],
            displacements: vec![Point::default()],
        };
        let out = evaluate_step(&w, &clean, &cfg, &bounds).unwrap();
        assert!(out.flags.all_clear(), "{:?}", out.flags);
        assert_eq!(out.penalty, 0.0);
        let mut dirty = clean.clone();
        dirty.keys[1] = k(4096);
        let out = evaluate_step(&w, &dirty, &cfg, &bounds).unwrap();
        assert!(!out.flags.all_clear());
        assert!(out.penalty > 0.0);
    }

    #[test]
    fn max_security_has_no_deficit_and_hover_energy_term() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let bounds = NormalizationBounds::from_config(&cfg);
        let d = all_direct(&w, 4096);
        let out = evaluate_step(&w, &d, &cfg, &bounds).unwrap();
        let deficit: f64 = out.gus.iter().map(|g| 1.0 - g.norm_security).sum();
        assert_eq!(deficit, 0.0);
        let energy: f64 = out.uavs.iter().map(|u| u.norm_energy).sum();
        assert!((energy - 157.5 / bounds.energy_max).abs() < 1e-12);
    }

    #[test]
    fn objective_drops_with_latency() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let bounds = NormalizationBounds::from_config(&cfg);
        let out = evaluate_step(&w, &all_direct(&w, 1024), &cfg, &bounds).unwrap();
        let base = objective_value(std::slice::from_ref(&out));
        for i in 0..out.gus.len() {
            let mut faster = out.clone();
            faster.gus[i].norm_latency *= 0.5;
            assert!(objective_value(&[faster]) < base);
        }
        let mut zero = out.clone();
        for g in &mut zero.gus {
            g.norm_latency = 0.0;
        }
        let l: f64 = zero.gus.iter().map(|g| g.norm_latency).sum();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn bounds_cover_worst_case() {
        let cfg = ScenarioConfig::default();
        let b = NormalizationBounds::from_config(&cfg);
        let mut w = world();
        for g in &mut w.gus {
            g.data_bits = cfg.data_max_bits;
        }
        let pos = vec![Point::new(100.0, 100.0)];
        for g in &w.gus {
            let l = total_latency(g, Association::Relay { uav: 0, oru: 0 }, k(4096), &pos, &w, &cfg).total();
            assert!(l <= b.latency_max);
        }
    }

    #[test]
    fn reward_invariant_under_gu_permutation() {
        let cfg = ScenarioConfig::default();
        let bounds = NormalizationBounds::from_config(&cfg);
        let w = world();
        let d = DecisionVector {
            associations: vec![
                Association::Direct { oru: 0 },
                Association::Direct { oru: 1 },
                Association::Relay { uav: 0, oru: 0 },
                Association::Relay { uav: 0, oru: 1 },
            ],
            keys: vec![k(64), k(128), k(4096), k(256)],
            displacements: vec![Point::new(3.0, -4.0)],
        };
        let perm = [2usize, 0, 3, 1];
        let mut wp = w.clone();
        wp.gus = perm.iter().map(|&i| w.gus[i].clone()).collect();
        let dp = DecisionVector {
            associations: perm.iter().map(|&i| d.associations[i]).collect(),
            keys: perm.iter().map(|&i| d.keys[i]).collect(),
            displacements: d.displacements.clone(),
        };
        let a = evaluate_step(&w, &d, &cfg, &bounds).unwrap();
        let b = evaluate_step(&wp, &dp, &cfg, &bounds).unwrap();
        assert!((a.final_reward - b.final_reward).abs() < 1e-12);
        assert_eq!(a.violations, b.violations);
    }

    #[test]
    fn bad_shapes_are_rejected() {
        let cfg = ScenarioConfig::default();
        let w = world();
        let bounds = NormalizationBounds::from_config(&cfg);
        let mut d = all_direct(&w, 64);
        d.associations[0] = Association::Direct { oru: 5 };
        assert!(evaluate_step(&w, &d, &cfg, &bounds).is_err());
        let mut d = all_direct(&w, 64);
        d.displacements.clear();
        assert!(evaluate_step(&w, &d, &cfg, &bounds).is_err());
    }
}
