//! Episode collection and the outer training loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, Policy, PolicySpec, RolloutBuffer, Sampled};
use crate::config::{PpoConfig, ScenarioConfig};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::scenario::instance_rng;

/// Stream offset for action-sampling RNGs, keeping them apart from scenario streams.
pub const POLICY_STREAM_BASE: u64 = 1 << 40;
/// Stream of the parameter-initialization and shuffling RNG.
pub const AGENT_STREAM: u64 = u64::MAX - 1;

/// Scenario stream of training episode `k`.
pub fn training_stream(k: usize) -> u64 {
    1 + k as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub cum_reward: f64,
    pub cum_penalty: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "episode,cum_reward,cum_penalty,loss_pi,loss_v,entropy";

    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.episode, r.cum_reward, r.cum_penalty, r.loss_pi, r.loss_v, r.entropy
            ));
        }
        s
    }

    /// Means of `(cum_reward, cum_penalty)` over the first and last `frac` of episodes.
    pub fn window_means(&self, frac: f64) -> ((f64, f64), (f64, f64)) {
        let n = self.records.len();
        let w = ((n as f64 * frac).round() as usize).clamp(1, n.max(1));
        let mean = |rs: &[EpisodeRecord]| {
            let k = rs.len().max(1) as f64;
            (
                rs.iter().map(|r| r.cum_reward).sum::<f64>() / k,
                rs.iter().map(|r| r.cum_penalty).sum::<f64>() / k,
            )
        };
        (mean(&self.records[..w.min(n)]), mean(&self.records[n.saturating_sub(w)..]))
    }
}

struct Step {
    obs: Vec<f64>,
    sampled: Sampled,
    reward: f64,
    next_value: f64,
    done: bool,
}

fn collect_episode(env: &mut Env, policy: &Policy, seed: u64, k: usize) -> Result<(Vec<Step>, f64, f64)> {
    let mut obs = env.reset_with(seed, training_stream(k));
    let mut rng = instance_rng(seed, POLICY_STREAM_BASE + k as u64);
    let mut steps = Vec::with_capacity(env.config().horizon);
    let (mut cr, mut cp) = (0.0, 0.0);
    loop {
        let sampled = policy.act(&obs, &mut rng);
        let tr = env.step(&sampled.action)?;
        cr += tr.reward;
        cp += tr.outcome.penalty;
        let next_value = if tr.done { 0.0 } else { policy.value(&tr.observation) };
        let done = tr.done;
        steps.push(Step {
            obs: std::mem::replace(&mut obs, tr.observation),
            sampled,
            reward: tr.reward,
            next_value,
            done,
        });
        if done {
            return Ok((steps, cr, cp));
        }
    }
}

pub fn policy_spec(env: &Env, hp: &PpoConfig) -> PolicySpec {
    PolicySpec::new(env.observation_dim(), env.action_spec(), hp.hidden_size)
}

/// Trains a fresh agent. `checkpoint` is called with the number of finished
/// episodes every `checkpoint_interval` episodes and once at the end.
pub fn train(
    scenario: &ScenarioConfig,
    hp: &PpoConfig,
    seed: u64,
    checkpoint: &mut dyn FnMut(usize, &Agent) -> Result<()>,
) -> Result<(Agent, TrainingLog)> {
    hp.validate()?;
    let env = Env::new(scenario.clone())?;
    let mut agent = Agent::new(policy_spec(&env, hp), hp.clone(), instance_rng(seed, AGENT_STREAM));
    let mut log = TrainingLog::default();
    let mut envs: Vec<Env> = vec![env; hp.num_envs.max(1)];
    let mut next_ckpt = hp.checkpoint_interval;
    let mut k = 0;
    while k < hp.episodes {
        let batch = hp.episodes_per_update.min(hp.episodes - k);
        let policy = &agent.policy;
        let mut episodes = Vec::with_capacity(batch);
        for chunk_start in (0..batch).step_by(envs.len()) {
            let n = envs.len().min(batch - chunk_start);
            let out: Vec<_> = if n == 1 {
                vec![collect_episode(&mut envs[0], policy, seed, k + chunk_start)]
            } else {
                envs[..n]
                    .par_iter_mut()
                    .enumerate()
                    .map(|(i, e)| collect_episode(e, policy, seed, k + chunk_start + i))
                    .collect()
            };
            for o in out {
                episodes.push(o?);
            }
        }
        let mut buffer = RolloutBuffer::default();
        let first = log.records.len();
        for (i, (steps, cr, cp)) in episodes.into_iter().enumerate() {
            for s in steps {
                buffer.push(s.obs, &s.sampled, s.reward, s.next_value, s.done);
            }
            log.records.push(EpisodeRecord {
                episode: k + i,
                cum_reward: cr,
                cum_penalty: cp,
                ..Default::default()
            });
        }
        agent.buffer = buffer;
        let stats = agent.update().map_err(Error::from)?;
        for r in &mut log.records[first..] {
            r.loss_pi = stats.loss.policy;
            r.loss_v = stats.loss.value;
            r.entropy = stats.loss.entropy;
        }
        k += batch;
        if hp.checkpoint_interval > 0 && k >= next_ckpt && k < hp.episodes {
            checkpoint(k, &agent)?;
            while next_ckpt <= k {
                next_ckpt += hp.checkpoint_interval;
            }
        }
    }
    checkpoint(k, &agent)?;
    Ok((agent, log))
}
