//! Domain entities, scenario generation and ground-user mobility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, UavInit};
use crate::energy::GuEnergyLedger;
use crate::error::ConfigError;

/// Stream index reserved for drawing the static O-RU topology.
const TOPOLOGY_STREAM: u64 = u64::MAX;

/// Ground-plane coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn offset(self, d: Point) -> Point {
        Point::new(self.x + d.x, self.y + d.y)
    }

    pub fn clamp_to(self, width: f64, height: f64) -> Point {
        Point::new(self.x.clamp(0.0, width), self.y.clamp(0.0, height))
    }
}

/// Axis-aligned heading of the Manhattan mobility model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::PosX, Heading::NegX, Heading::PosY, Heading::NegY];

    fn reversed(self) -> Heading {
        match self {
            Heading::PosX => Heading::NegX,
            Heading::NegX => Heading::PosX,
            Heading::PosY => Heading::NegY,
            Heading::NegY => Heading::PosY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundUser {
    pub id: usize,
    pub position: Point,
    pub heading: Heading,
    /// Processor clock in Hz.
    pub clock: f64,
    /// Computational capability, compared against key bits times cycles per block.
    pub compute_budget: f64,
    /// Data to send this timestep, in bits.
    pub data_bits: u64,
    pub battery: GuEnergyLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioUnit {
    pub id: usize,
    pub position: Point,
    pub height: f64,
    /// Processor clock in Hz.
    pub clock: f64,
    /// Minimum security level (log2 of key length) accepted.
    pub security_requirement: u32,
    pub resource_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavRelay {
    pub id: usize,
    pub position: Point,
    pub prev_position: Point,
    pub altitude: f64,
    pub resource_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: usize,
    pub gus: Vec<GroundUser>,
    pub orus: Vec<RadioUnit>,
    pub uavs: Vec<UavRelay>,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// RNG for one scenario instance: `seed` picks the episode, `stream` the instance.
pub fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the O-RU set from the topology stream of `seed`.
pub fn generate_topology(config: &ScenarioConfig, rng: &mut impl Rng) -> Vec<RadioUnit> {
    (0..config.num_orus)
        .map(|id| RadioUnit {
            id,
            position: Point::new(
                uniform(rng, 0.0, config.topology_width),
                uniform(rng, 0.0, config.topology_height),
            ),
            height: config.oru_height,
            clock: uniform(rng, config.oru_clock_min, config.oru_clock_max),
            security_requirement: rng.random_range(config.oru_security_min..=config.oru_security_max),
            resource_blocks: config.oru_rbs,
        })
        .collect()
}

pub fn draw_data_bits(config: &ScenarioConfig, rng: &mut impl Rng) -> u64 {
    rng.random_range(config.data_min_bits..=config.data_max_bits)
}

/// The scenario's static topology, drawn from `config.rng_seed`.
pub fn static_topology(config: &ScenarioConfig) -> Vec<RadioUnit> {
    let mut rng = instance_rng(config.rng_seed, TOPOLOGY_STREAM);
    generate_topology(config, &mut rng)
}

/// Generates the world for `config.rng_seed`, instance 0.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<WorldState, ConfigError> {
    config.validate()?;
    let mut rng = instance_rng(config.rng_seed, 0);
    Ok(generate_world(config, &mut rng))
}

/// Generates a fresh world drawing GUs and UAVs from `rng`. O-RUs come from the
/// static topology unless `resample_topology` is set.
pub fn generate_world(config: &ScenarioConfig, rng: &mut impl Rng) -> WorldState {
    let orus = if config.resample_topology {
        generate_topology(config, rng)
    } else {
        static_topology(config)
    };
    let gus = (0..config.num_gus)
        .map(|id| {
            let position = Point::new(
                uniform(rng, 0.0, config.grid_width),
                uniform(rng, 0.0, config.grid_height),
            );
            let clock = uniform(rng, config.gu_clock_min, config.gu_clock_max);
            let capacity = uniform(rng, config.gu_battery_min, config.gu_battery_max);
            let compute_budget = uniform(rng, config.gu_compute_min, config.gu_compute_max);
            let data_bits = draw_data_bits(config, rng);
            let heading = Heading::ALL[rng.random_range(0..4)];
            GroundUser {
                id,
                position,
                heading,
                clock,
                compute_budget,
                data_bits,
                battery: GuEnergyLedger::new(capacity),
            }
        })
        .collect();
    let uavs = (0..config.num_uavs)
        .map(|id| {
            let position = match config.uav_init {
                UavInit::Random => Point::new(
                    uniform(rng, 0.0, config.grid_width),
                    uniform(rng, 0.0, config.grid_height),
                ),
                UavInit::GridCenter => Point::new(config.grid_width / 2.0, config.grid_height / 2.0),
            };
            UavRelay {
                id,
                position,
                prev_position: position,
                altitude: config.uav_altitude,
                resource_blocks: config.uav_rbs,
            }
        })
        .collect();
    WorldState { t: 0, gus, orus, uavs }
}

/// Folds an unbounded coordinate back into `[0, len]` by mirror reflection.
/// Returns the folded value and whether the direction of travel flipped.
fn reflect(coord: f64, len: f64) -> (f64, bool) {
    let period = 2.0 * len;
    let m = coord.rem_euclid(period);
    if m > len {
        (period - m, true)
    } else {
        (m, false)
    }
}

/// One Manhattan-model move: travel `speed * dt` along `heading`, reflecting
/// off the grid boundary.
pub fn manhattan_move(pos: Point, heading: Heading, speed: f64, dt: f64, width: f64, height: f64) -> (Point, Heading) {
    let step = speed * dt;
    let (next, flipped) = match heading {
        Heading::PosX => {
            let (x, f) = reflect(pos.x + step, width);
            (Point::new(x, pos.y), f)
        }
        Heading::NegX => {
            let (x, f) = reflect(pos.x - step, width);
            (Point::new(x, pos.y), f)
        }
        Heading::PosY => {
            let (y, f) = reflect(pos.y + step, height);
            (Point::new(pos.x, y), f)
        }
        Heading::NegY => {
            let (y, f) = reflect(pos.y - step, height);
            (Point::new(pos.x, y), f)
        }
    };
    (next, if flipped { heading.reversed() } else { heading })
}

/// Advances every GU one slot. UAVs are untouched: their trajectory is an action.
pub fn step_mobility(state: &mut WorldState, config: &ScenarioConfig, rng: &mut impl Rng) {
    for gu in &mut state.gus {
        if !rng.random_bool(config.gu_direction_keep) {
            gu.heading = Heading::ALL[rng.random_range(0..4)];
        }
        let speed = uniform(rng, config.gu_speed_min, config.gu_speed_max);
        let (p, h) = manhattan_move(
            gu.position,
            gu.heading,
            speed,
            config.slot_duration,
            config.grid_width,
            config.grid_height,
        );
        gu.position = p;
        gu.heading = h;
    }
}
