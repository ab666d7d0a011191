//! Experiment configuration.
//!
//! A configuration file is a flat TOML document: one `key = value` line per
//! parameter, no tables. Every key must be present and unknown keys are
//! rejected. Any key can be overridden from the environment with
//! `SKYRELAY_<KEY>` (upper-cased key name), the value being parsed as a TOML
//! scalar.
//!
//! Several channel constants and all mobility parameters are not part of the
//! published parameter table; their defaults here are implementation choices:
//! `noise_power`, `pathloss_ref`, `pathloss_exp`, `ber_max`, `d_min`, `d_max`,
//! `uav_altitude`, `oru_height`, the GU speed range and direction persistence,
//! the primitive-operation cycle costs and the objective weights.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

/// How agent actions are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Categorical association and key heads, squashed-Gaussian displacement.
    Factored,
    /// Every decision is a continuous coordinate in [-1, 1], binned on decode.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavInit {
    Random,
    GridCenter,
}

/// Contention order used by the greedy heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyOrder {
    Ascending,
    Shuffled,
}

/// Immutable parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid_width: f64,
    pub grid_height: f64,
    /// O-RUs are placed uniformly over `[0, topology_width] x [0, topology_height]`.
    pub topology_width: f64,
    pub topology_height: f64,
    pub num_orus: usize,
    pub num_uavs: usize,
    pub num_gus: usize,
    pub horizon: usize,

    pub bandwidth_ug: f64,
    pub bandwidth_ua: f64,
    pub bandwidth_ag: f64,
    pub power_ug: f64,
    pub power_ua: f64,
    pub power_ag: f64,
    pub noise_power: f64,
    pub pathloss_ref: f64,
    pub pathloss_exp: f64,

    pub compute_power: f64,
    pub comm_power: f64,

    pub blade_profile_power: f64,
    pub induced_power: f64,
    pub parasite_coef: f64,
    pub rotor_tip_speed: f64,
    pub induced_velocity: f64,
    pub literal_induced_term: bool,
    pub slot_duration: f64,

    pub uav_altitude: f64,
    pub oru_height: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub ber_max: f64,

    pub w_latency: f64,
    pub w_energy: f64,
    pub w_security: f64,

    pub rng_seed: u64,

    pub gu_clock_min: f64,
    pub gu_clock_max: f64,
    pub gu_battery_min: f64,
    pub gu_battery_max: f64,
    pub gu_compute_min: f64,
    pub gu_compute_max: f64,
    pub data_min_bits: u64,
    pub data_max_bits: u64,
    pub oru_clock_min: f64,
    pub oru_clock_max: f64,
    pub oru_security_min: u32,
    pub oru_security_max: u32,
    pub oru_rbs: usize,
    pub uav_rbs: usize,

    pub gu_speed_min: f64,
    pub gu_speed_max: f64,
    pub gu_direction_keep: f64,

    pub cycles_and: f64,
    pub cycles_or: f64,
    pub cycles_shift: f64,
    pub cycles_xor: f64,

    pub penalty_security: f64,
    pub penalty_rbs: f64,
    pub penalty_compute: f64,
    pub penalty_battery: f64,
    pub penalty_ber: f64,
    pub penalty_collision: f64,
    pub penalty_dmax: f64,

    pub resample_topology: bool,
    pub rich_observation: bool,
    pub action_mode: ActionMode,
    pub uav_init: UavInit,
    pub heuristic_order: GreedyOrder,
}

const MB_BITS: u64 = 8 * (1 << 20);

impl Default for ScenarioConfig {
    fn default() -> Self {
        let w = 1.0 / 3.0;
        Self {
            grid_width: 100.0,
            grid_height: 100.0,
            topology_width: 100.0,
            topology_height: 100.0,
            num_orus: 2,
            num_uavs: 3,
            num_gus: 10,
            horizon: 10,
            bandwidth_ug: 50e6,
            bandwidth_ua: 40e6,
            bandwidth_ag: 100e6,
            power_ug: 1.0,
            power_ua: 2.0,
            power_ag: 4.0,
            noise_power: 1e-12,
            pathloss_ref: 1e-6,
            pathloss_exp: 2.0,
            compute_power: 4.0,
            comm_power: 7.0,
            blade_profile_power: 30.0,
            induced_power: 1.5,
            parasite_coef: 0.02,
            rotor_tip_speed: 50.0,
            induced_velocity: 30.0,
            literal_induced_term: false,
            slot_duration: 5.0,
            uav_altitude: 100.0,
            oru_height: 10.0,
            d_min: 10.0,
            d_max: 50.0,
            ber_max: 1e-5,
            w_latency: w,
            w_energy: w,
            w_security: w,
            rng_seed: 1,
            gu_clock_min: 1.8e9,
            gu_clock_max: 2.4e9,
            gu_battery_min: 50.0,
            gu_battery_max: 250.0,
            gu_compute_min: 656.0,
            gu_compute_max: 1.7e7,
            data_min_bits: MB_BITS,
            data_max_bits: 10 * MB_BITS,
            oru_clock_min: 3.5e9,
            oru_clock_max: 3.9e9,
            oru_security_min: 6,
            oru_security_max: 12,
            oru_rbs: 3,
            uav_rbs: 3,
            gu_speed_min: 0.5,
            gu_speed_max: 2.0,
            gu_direction_keep: 0.8,
            cycles_and: 1.0,
            cycles_or: 1.0,
            cycles_shift: 1.0,
            cycles_xor: 1.0,
            penalty_security: 1.0,
            penalty_rbs: 1.0,
            penalty_compute: 1.0,
            penalty_battery: 1.0,
            penalty_ber: 1.0,
            penalty_collision: 1.0,
            penalty_dmax: 1.0,
            resample_topology: false,
            rich_observation: false,
            action_mode: ActionMode::Factored,
            uav_init: UavInit::Random,
            heuristic_order: GreedyOrder::Ascending,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

macro_rules! positive {
    ($cfg:ident, $($field:ident),+ $(,)?) => {
        $(
            if !($cfg.$field > 0.0) || !$cfg.$field.is_finite() {
                return Err(invalid(stringify!($field), format!("must be finite and > 0, got {}", $cfg.$field)));
            }
        )+
    };
}

macro_rules! range {
    ($cfg:ident, $lo:ident, $hi:ident) => {
        if $cfg.$lo > $cfg.$hi {
            return Err(invalid(
                stringify!($lo),
                format!("{} exceeds {} ({} > {})", stringify!($lo), stringify!($hi), $cfg.$lo, $cfg.$hi),
            ));
        }
    };
}

impl ScenarioConfig {
    /// Checks every invariant; the error names the first offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, n) in [
            ("num_orus", self.num_orus),
            ("num_gus", self.num_gus),
            ("horizon", self.horizon),
            ("oru_rbs", self.oru_rbs),
            ("uav_rbs", self.uav_rbs),
        ] {
            if n == 0 {
                return Err(invalid(name, "must be >= 1"));
            }
        }
        positive!(
            self,
            grid_width,
            grid_height,
            topology_width,
            topology_height,
            bandwidth_ug,
            bandwidth_ua,
            bandwidth_ag,
            power_ug,
            power_ua,
            power_ag,
            noise_power,
            pathloss_ref,
            pathloss_exp,
            compute_power,
            comm_power,
            blade_profile_power,
            induced_power,
            parasite_coef,
            rotor_tip_speed,
            induced_velocity,
            slot_duration,
            uav_altitude,
            oru_height,
            d_min,
            d_max,
            gu_clock_min,
            gu_battery_min,
            gu_compute_min,
            oru_clock_min,
            cycles_and,
            cycles_or,
            cycles_shift,
            cycles_xor,
        );
        if self.d_min >= self.grid_width.hypot(self.grid_height) {
            return Err(invalid("d_min", "must be smaller than the grid diagonal"));
        }
        if !(self.ber_max > 0.0 && self.ber_max <= 0.5) {
            return Err(invalid("ber_max", format!("must lie in (0, 0.5], got {}", self.ber_max)));
        }
        for (name, w) in [
            ("w_latency", self.w_latency),
            ("w_energy", self.w_energy),
            ("w_security", self.w_security),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid(name, format!("weight must lie in [0, 1], got {w}")));
            }
        }
        let wsum = self.w_latency + self.w_energy + self.w_security;
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(invalid("w_latency", format!("objective weights must sum to 1, got {wsum}")));
        }
        range!(self, gu_clock_min, gu_clock_max);
        range!(self, gu_battery_min, gu_battery_max);
        range!(self, gu_compute_min, gu_compute_max);
        range!(self, data_min_bits, data_max_bits);
        range!(self, oru_clock_min, oru_clock_max);
        range!(self, oru_security_min, oru_security_max);
        range!(self, gu_speed_min, gu_speed_max);
        if self.data_min_bits == 0 {
            return Err(invalid("data_min_bits", "must be >= 1"));
        }
        if self.oru_security_min < 6 || self.oru_security_max > 12 {
            return Err(invalid("oru_security_min", "security requirements must lie in [6, 12]"));
        }
        if self.gu_speed_min < 0.0 {
            return Err(invalid("gu_speed_min", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.gu_direction_keep) {
            return Err(invalid("gu_direction_keep", "must be a probability"));
        }
        for (name, p) in [
            ("penalty_security", self.penalty_security),
            ("penalty_rbs", self.penalty_rbs),
            ("penalty_compute", self.penalty_compute),
            ("penalty_battery", self.penalty_battery),
            ("penalty_ber", self.penalty_ber),
            ("penalty_collision", self.penalty_collision),
            ("penalty_dmax", self.penalty_dmax),
        ] {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(invalid(name, "penalty weights must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn grid_diagonal(&self) -> f64 {
        self.grid_width.hypot(self.grid_height)
    }
}

/// PPO hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub clip_range: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gae_lambda: f64,
    /// The "adjusting factor" of the parameter table.
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub episodes: usize,
    pub episodes_per_update: usize,
    pub num_envs: usize,
    pub hidden_size: usize,
    pub init_log_std: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub checkpoint_interval: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            discount: 0.99,
            clip_range: 0.2,
            epochs: 4,
            minibatch_size: 64,
            gae_lambda: 0.0,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            episodes: 6000,
            episodes_per_update: 4,
            num_envs: 1,
            hidden_size: 64,
            init_log_std: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_interval: 500,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.learning_rate >= 0.0) {
            return Err(invalid("learning_rate", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(invalid("discount", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(invalid("gae_lambda", "must lie in [0, 1]"));
        }
        if !(self.clip_range > 0.0) {
            return Err(invalid("clip_range", "must be > 0"));
        }
        for (name, n) in [
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("episodes_per_update", self.episodes_per_update),
            ("num_envs", self.num_envs),
            ("hidden_size", self.hidden_size),
        ] {
            if n == 0 {
                return Err(invalid(name, "must be >= 1"));
            }
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(invalid("max_grad_norm", "must be > 0"));
        }
        if !(-5.0..=2.0).contains(&self.init_log_std) {
            return Err(invalid("init_log_std", "must lie in [-5, 2]"));
        }
        Ok(())
    }
}

/// Scenario plus agent parameters, as read from one configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub ppo: PpoConfig,
}

pub const ENV_PREFIX: &str = "SKYRELAY_";

fn keys_of<T: Serialize>(value: &T) -> Vec<String> {
    match toml::Table::try_from(value) {
        Ok(t) => t.keys().cloned().collect(),
        Err(_) => Vec::new(),
    }
}

fn parse_scalar(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.to_string())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn missing_field(msg: &str) -> Option<String> {
    let start = msg.find("missing field `")? + "missing field `".len();
    let end = msg[start..].find('`')?;
    Some(msg[start..start + end].to_string())
}

impl ExperimentConfig {
    pub fn scenario_keys() -> Vec<String> {
        keys_of(&ScenarioConfig::default())
    }

    pub fn ppo_keys() -> Vec<String> {
        keys_of(&PpoConfig::default())
    }

    /// Parses a flat key-value document, without environment overrides.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let scenario_keys: BTreeSet<String> = Self::scenario_keys().into_iter().collect();
        let ppo_keys: BTreeSet<String> = Self::ppo_keys().into_iter().collect();
        let mut scenario = toml::Table::new();
        let mut ppo = toml::Table::new();
        for (k, v) in table {
            if matches!(v, toml::Value::Table(_)) {
                return Err(ConfigError::Parse(format!("`{k}`: nested tables are not allowed, the file is flat")));
            }
            if scenario_keys.contains(&k) {
                scenario.insert(k, v);
            } else if ppo_keys.contains(&k) {
                ppo.insert(k, v);
            } else {
                return Err(ConfigError::UnknownKey(k));
            }
        }
        for key in scenario_keys.iter().chain(ppo_keys.iter()) {
            if !scenario.contains_key(key) && !ppo.contains_key(key) {
                return Err(ConfigError::MissingKey(key.clone()));
            }
        }
        let map_err = |e: toml::de::Error| {
            let msg = e.to_string();
            match missing_field(&msg) {
                Some(k) => ConfigError::MissingKey(k),
                None => ConfigError::Parse(msg),
            }
        };
        let scenario: ScenarioConfig = toml::Value::Table(scenario).try_into().map_err(map_err)?;
        let ppo: PpoConfig = toml::Value::Table(ppo).try_into().map_err(map_err)?;
        let cfg = Self { scenario, ppo };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a file and applies `SKYRELAY_*` overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        apply_overrides(&mut table, std::env::vars())?;
        Self::from_table(table)
    }

    /// Built-in defaults with `SKYRELAY_*` overrides applied.
    pub fn defaults_with_env() -> Result<Self, ConfigError> {
        let mut table = Self::default().to_table();
        apply_overrides(&mut table, std::env::vars())?;
        Self::from_table(table)
    }

    pub fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::try_from(&self.scenario).expect("scenario config serializes");
        t.extend(toml::Table::try_from(&self.ppo).expect("ppo config serializes"));
        t
    }

    pub fn to_toml_string(&self) -> String {
        // TOML tables list keys alphabetically; keep it that way for stable hashes.
        toml::to_string(&self.to_table()).expect("flat table serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.ppo.validate()
    }

    /// Hex SHA-256 prefix of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Applies `SKYRELAY_<KEY>` variables onto a parsed table. Variables that do
/// not name a known key are an error, like unknown keys in the file.
pub fn apply_overrides<I>(table: &mut toml::Table, vars: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let known: BTreeSet<String> = ExperimentConfig::scenario_keys()
        .into_iter()
        .chain(ExperimentConfig::ppo_keys())
        .collect();
    for (var, value) in vars {
        let Some(rest) = var.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = rest.to_ascii_lowercase();
        if !known.contains(&key) {
            return Err(ConfigError::Override {
                var,
                reason: "does not name a config key".into(),
            });
        }
        let mut parsed = parse_scalar(value.trim());
        // Integers given where the file holds floats stay floats.
        if let (Some(toml::Value::Float(_)), toml::Value::Integer(i)) = (table.get(&key), &parsed) {
            parsed = toml::Value::Float(*i as f64);
        }
        table.insert(key, parsed);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_flat_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string();
        assert!(!text.contains('['), "file must be flat:\n{text}");
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn missing_key_is_named() {
        let text = ExperimentConfig::default().to_toml_string();
        let without: String = text.lines().filter(|l| !l.starts_with("ber_max")).map(|l| format!("{l}\n")).collect();
        match ExperimentConfig::from_toml_str(&without) {
            Err(ConfigError::MissingKey(k)) => assert_eq!(k, "ber_max"),
            other => panic!("expected missing key error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{}ber_maxx = 0.1\n", ExperimentConfig::default().to_toml_string());
        match ExperimentConfig::from_toml_str(&text) {
            Err(ConfigError::UnknownKey(k)) => assert_eq!(k, "ber_maxx"),
            other => panic!("expected unknown key error, got {other:?}"),
        }
    }

    #[test]
    fn zero_users_names_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.num_gus = 0;
        match cfg.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "num_gus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut cfg = ScenarioConfig::default();
        cfg.w_security = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn env_overrides_apply() {
        let mut table = ExperimentConfig::default().to_table();
        apply_overrides(
            &mut table,
            vec![
                ("SKYRELAY_NUM_GUS".to_string(), "15".to_string()),
                ("SKYRELAY_GRID_WIDTH".to_string(), "200".to_string()),
                ("SKYRELAY_ACTION_MODE".to_string(), "box".to_string()),
                ("PATH".to_string(), "/bin".to_string()),
            ],
        )
        .unwrap();
        let cfg = ExperimentConfig::from_table(table).unwrap();
        assert_eq!(cfg.scenario.num_gus, 15);
        assert_eq!(cfg.scenario.grid_width, 200.0);
        assert_eq!(cfg.scenario.action_mode, ActionMode::Box);
    }

    #[test]
    fn unknown_override_is_rejected() {
        let mut table = ExperimentConfig::default().to_table();
        let err = apply_overrides(&mut table, vec![("SKYRELAY_NOPE".to_string(), "1".to_string())]);
        assert!(err.is_err());
    }
}
