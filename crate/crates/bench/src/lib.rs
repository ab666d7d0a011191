//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skyrelay::ppo::train::policy_spec;
use skyrelay::ppo::{Policy, RolloutBuffer, Sample};
use skyrelay::{Env, PpoConfig, ScenarioConfig};

/// Environment on the default scenario, reset to a fixed episode.
pub fn default_env() -> Env {
    let mut env = Env::new(ScenarioConfig::default()).expect("default config is valid");
    env.reset_with(1, 1);
    env
}

/// Freshly initialized policy sized for `env`.
pub fn policy_for(env: &Env, hp: &PpoConfig, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Policy::new(policy_spec(env, hp), &mut rng, hp.init_log_std)
}

/// Samples from `episodes` stochastic rollouts of `policy`.
pub fn rollout_samples(env: &mut Env, policy: &Policy, episodes: usize, hp: &PpoConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut buf = RolloutBuffer::default();
    for k in 0..episodes {
        let mut obs = env.reset_with(1, k as u64 + 1);
        while !env.is_done() {
            let s = policy.act(&obs, &mut rng);
            let tr = env.step(&s.action).expect("sampled action is valid");
            let next_value = if tr.done { 0.0 } else { policy.value(&tr.observation) };
            buf.push(obs, &s, tr.reward, next_value, tr.done);
            obs = tr.observation;
        }
    }
    buf.samples(hp.discount, hp.gae_lambda)
}
