//! Proximal policy optimization with a hand-written actor-critic.

pub mod agent;
pub mod dist;
pub mod gae;
pub mod nn;
pub mod train;

pub use agent::{Adam, Agent, LossCoefs, LossStats, Policy, PolicySpec, RolloutBuffer, Sample, Sampled};
pub use gae::compute_gae;
pub use train::{train, EpisodeRecord, TrainingLog};
