//! Simulation, learning and evaluation for secure UAV-relayed uplink
//! offloading in an Open RAN setting.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod crypto;
pub mod energy;
pub mod env;
pub mod error;
pub mod harness;
pub mod objective;
pub mod oracle;
pub mod persistence;
pub mod ppo;
pub mod scenario;

/// Package version plus `git describe` output when built from a checkout.
pub const VERSION: &str = env!("SKYRELAY_VERSION");

pub use config::{ExperimentConfig, PpoConfig, ScenarioConfig};
pub use crypto::{CipherSuite, KeyLength};
pub use env::{Action, ActionSpec, Env, Transition};
pub use error::{Error, Result};
pub use objective::{Association, DecisionVector, NormalizationBounds, StepOutcome};
pub use scenario::{GroundUser, Point, RadioUnit, UavRelay, WorldState};
