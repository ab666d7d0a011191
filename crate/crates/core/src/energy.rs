//! Rotary-wing UAV propulsion energy and GU battery accounting.

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::scenario::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavEnergyParams {
    /// Blade profile power in hover, W.
    pub blade_profile_power: f64,
    /// Induced power in hover, W.
    pub induced_power: f64,
    /// Parasite power constant, W/(m/s)^3.
    pub parasite_coef: f64,
    pub rotor_tip_speed: f64,
    pub induced_velocity: f64,
    pub slot_duration: f64,
    /// Use `v / (2 v0^2)` instead of `v^2 / (2 v0^2)` in the induced term.
    pub literal_induced_term: bool,
}

impl UavEnergyParams {
    pub fn from_config(c: &ScenarioConfig) -> Self {
        Self {
            blade_profile_power: c.blade_profile_power,
            induced_power: c.induced_power,
            parasite_coef: c.parasite_coef,
            rotor_tip_speed: c.rotor_tip_speed,
            induced_velocity: c.induced_velocity,
            slot_duration: c.slot_duration,
            literal_induced_term: c.literal_induced_term,
        }
    }

    /// Energy of one hovering slot, `dt * (P0 + P1)`.
    pub fn hover_energy(&self) -> f64 {
        self.slot_duration * (self.blade_profile_power + self.induced_power)
    }
}

/// Horizontal speed implied by a move over one slot (altitude is fixed).
pub fn uav_velocity(prev: Point, next: Point, slot_duration: f64) -> f64 {
    prev.distance(next) / slot_duration
}

/// Mechanical energy for one slot flown at speed `v`.
pub fn uav_slot_energy(v: f64, p: &UavEnergyParams) -> f64 {
    let dt = p.slot_duration;
    let v2 = v * v;
    let v0 = p.induced_velocity;
    let blade = p.blade_profile_power * (1.0 + 3.0 * v2 / (p.rotor_tip_speed * p.rotor_tip_speed));
    let parasite = p.parasite_coef * v2 * v;
    let correction = if p.literal_induced_term { v } else { v2 };
    let induced = p.induced_power * ((1.0 + v2 * v2 / (4.0 * v0.powi(4))).sqrt() - correction / (2.0 * v0 * v0));
    dt * (blade + parasite) + dt * induced
}

/// Computation and communication energy for one GU over one slot: `(eta_cp, eta_cm)`.
pub fn gu_step_energy(tau_enc: f64, tau_comm: f64, compute_power: f64, comm_power: f64) -> (f64, f64) {
    (tau_enc * compute_power, tau_comm * comm_power)
}

/// Running battery account of one GU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuEnergyLedger {
    pub capacity: f64,
    pub remaining: f64,
    pub spent_compute: f64,
    pub spent_comm: f64,
}

impl GuEnergyLedger {
    pub fn new(capacity: f64) -> Self {
        Self {
            capacity,
            remaining: capacity,
            spent_compute: 0.0,
            spent_comm: 0.0,
        }
    }

    /// Whether `cp + cm` more joules would overdraw the battery.
    pub fn would_overdraw(&self, cp: f64, cm: f64) -> bool {
        self.spent_compute + self.spent_comm + cp + cm > self.capacity
    }

    /// Applies a debit. Returns `true` if it overdrew; the balance is then clamped at zero.
    pub fn debit(&mut self, cp: f64, cm: f64) -> bool {
        let overdraw = self.would_overdraw(cp, cm);
        self.spent_compute += cp;
        self.spent_comm += cm;
        self.remaining = (self.capacity - self.spent_compute - self.spent_comm).max(0.0);
        overdraw
    }

    pub fn fraction(&self) -> f64 {
        (self.remaining / self.capacity).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params() -> UavEnergyParams {
        UavEnergyParams::from_config(&ScenarioConfig::default())
    }

    #[test]
    fn velocity() {
        assert_eq!(uav_velocity(Point::new(0.0, 0.0), Point::new(30.0, 40.0), 5.0), 10.0);
        assert_eq!(uav_velocity(Point::new(7.0, 7.0), Point::new(7.0, 7.0), 5.0), 0.0);
        assert_eq!(uav_velocity(Point::new(0.0, 0.0), Point::new(0.0, 50.0), 5.0), 10.0);
    }

    #[test]
    fn hover_energy() {
        let p = table_params();
        assert_eq!(uav_slot_energy(0.0, &p), 157.5);
        assert_eq!(p.hover_energy(), 157.5);
    }

    #[test]
    fn energy_at_tip_speed() {
        let p = table_params();
        // blade 600 J, parasite 12 500 J, induced 5 * 1.5 * (sqrt(1 + 50^4/(4*30^4)) - 50^2/(2*30^2))
        let induced = 5.0 * 1.5 * ((1.0f64 + 6_250_000.0 / 3_240_000.0).sqrt() - 2500.0 / 1800.0);
        let e = uav_slot_energy(50.0, &p);
        assert!((e - (600.0 + 12_500.0 + induced)).abs() < 1e-9);
        assert!((induced - 2.419_101_500_624_468_5).abs() < 1e-12);
        let literal = UavEnergyParams {
            literal_induced_term: true,
            ..p
        };
        assert!((uav_slot_energy(50.0, &literal) - (13_100.0 + 12.627_434_833_957_803)).abs() < 1e-9);
    }

    #[test]
    fn parasite_is_cubic() {
        let p = UavEnergyParams {
            blade_profile_power: 0.0,
            induced_power: 0.0,
            ..table_params()
        };
        assert!((uav_slot_energy(14.0, &p) / uav_slot_energy(7.0, &p) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn energy_positive_everywhere() {
        let p = table_params();
        for i in 0..400 {
            let v = i as f64 * 0.25;
            assert!(uav_slot_energy(v, &p) >= p.slot_duration * p.blade_profile_power);
        }
    }

    #[test]
    fn gu_energy() {
        assert_eq!(gu_step_energy(0.1, 0.0, 4.0, 7.0).0, 0.4);
        assert_eq!(gu_step_energy(0.0, 1.0, 4.0, 7.0).1, 7.0);
        assert_eq!(gu_step_energy(0.0, 0.0, 4.0, 7.0), (0.0, 0.0));
    }

    #[test]
    fn battery_debits_and_clamps() {
        let mut l = GuEnergyLedger::new(50.0);
        assert!(!l.debit(0.4, 7.0));
        assert!((l.remaining - 42.6).abs() < 1e-12);
        let before = l;
        assert!(!l.debit(0.0, 0.0));
        assert_eq!(l, before);
        assert!(l.debit(40.0, 10.0));
        assert_eq!(l.remaining, 0.0);
    }

    #[test]
    fn episode_energy_is_additive() {
        use rand::{Rng, SeedableRng};
        let p = table_params();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pos = Point::new(50.0, 50.0);
        let mut total = 0.0;
        let mut speeds = Vec::new();
        for _ in 0..10 {
            let next = Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            let v = uav_velocity(pos, next, p.slot_duration);
            speeds.push(v);
            total += uav_slot_energy(v, &p);
            pos = next;
        }
        let direct: f64 = speeds.iter().map(|&v| uav_slot_energy(v, &p)).sum();
        assert_eq!(total, direct);
    }
}
