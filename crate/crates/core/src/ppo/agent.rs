//! Actor-critic policy, PPO loss with analytic gradients, Adam and the update phase.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{
    argmax, categorical_entropy, categorical_log_prob, categorical_sample, clamp_log_std, gaussian_entropy,
    gaussian_sample, squashed_gaussian_log_prob, LOG_STD_MAX, LOG_STD_MIN,
};
use super::gae::{compute_gae, normalize};
use super::nn::Mlp;
use crate::config::PpoConfig;
use crate::env::{Action, ActionSpec};
use crate::error::AgentError;

/// Network input and head sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub obs_dim: usize,
    pub assoc_heads: usize,
    pub assoc_choices: usize,
    pub key_heads: usize,
    pub key_choices: usize,
    pub continuous_dim: usize,
    pub hidden: usize,
}

impl PolicySpec {
    pub fn new(obs_dim: usize, action: &ActionSpec, hidden: usize) -> Self {
        Self {
            obs_dim,
            assoc_heads: action.assoc_heads,
            assoc_choices: action.assoc_choices,
            key_heads: action.key_heads,
            key_choices: action.key_choices,
            continuous_dim: action.continuous_dim,
            hidden,
        }
    }

    fn assoc_len(&self) -> usize {
        self.assoc_heads * self.assoc_choices
    }

    fn key_len(&self) -> usize {
        self.key_heads * self.key_choices
    }

    pub fn actor_out(&self) -> usize {
        self.assoc_len() + self.key_len() + self.continuous_dim
    }
}

/// Sampled action with the quantities PPO needs later.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub action: Action,
    pub pre_tanh: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// One stored step after advantage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub assoc: Vec<usize>,
    pub keys: Vec<usize>,
    pub pre_tanh: Vec<f64>,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub entropy: f64,
    pub value: f64,
}

impl LossCoefs {
    pub fn from_config(hp: &PpoConfig) -> Self {
        Self {
            clip: hp.clip_range,
            entropy: hp.entropy_coef,
            value: hp.value_coef,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// `min(m A, clip(m, 1-eps, 1+eps) A)` with `m = exp(new - old)`.
pub fn clipped_surrogate(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> f64 {
    let m = (log_prob_new - log_prob_old).exp();
    (m * advantage).min(m.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to `log_prob_new`.
pub fn clipped_surrogate_grad(log_prob_new: f64, log_prob_old: f64, advantage: f64, eps: f64) -> f64 {
    let m = (log_prob_new - log_prob_old).exp();
    let clipped = (advantage >= 0.0 && m > 1.0 + eps) || (advantage < 0.0 && m < 1.0 - eps);
    if clipped {
        0.0
    } else {
        m * advantage
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub spec: PolicySpec,
    actor: Mlp,
    critic: Mlp,
    /// `[actor | log_std | critic]`.
    pub theta: Vec<f64>,
}

impl Policy {
    fn nets(spec: &PolicySpec) -> (Mlp, Mlp) {
        let h = spec.hidden;
        (
            Mlp::new(vec![spec.obs_dim, h, h, spec.actor_out()]),
            Mlp::new(vec![spec.obs_dim, h, h, 1]),
        )
    }

    pub fn zeros(spec: PolicySpec) -> Self {
        let (actor, critic) = Self::nets(&spec);
        let n = actor.num_params() + spec.continuous_dim + critic.num_params();
        Self {
            spec,
            actor,
            critic,
            theta: vec![0.0; n],
        }
    }

    pub fn new(spec: PolicySpec, rng: &mut impl Rng, init_log_std: f64) -> Self {
        let mut p = Self::zeros(spec);
        let a = p.actor.init(rng, 0.01);
        let c = p.critic.init(rng, 1.0);
        let (ar, lr, cr) = (p.actor_range(), p.log_std_range(), p.critic_range());
        p.theta[ar].copy_from_slice(&a);
        p.theta[lr].fill(clamp_log_std(init_log_std));
        p.theta[cr].copy_from_slice(&c);
        p
    }

    pub fn with_params(&self, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), self.theta.len());
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn actor_range(&self) -> Range<usize> {
        0..self.actor.num_params()
    }

    pub fn log_std_range(&self) -> Range<usize> {
        let a = self.actor.num_params();
        a..a + self.spec.continuous_dim
    }

    pub fn critic_range(&self) -> Range<usize> {
        let s = self.log_std_range().end;
        s..s + self.critic.num_params()
    }

    /// Named tensors `(name, shape, range)` covering `theta`.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, Range<usize>)> {
        let mut t = self.actor.tensors("actor", 0);
        t.push(("actor.log_std".into(), vec![self.spec.continuous_dim], self.log_std_range()));
        t.extend(self.critic.tensors("critic", self.critic_range().start));
        t
    }

    fn log_std(&self, i: usize) -> f64 {
        clamp_log_std(self.theta[self.log_std_range().start + i])
    }

    /// Raw actor output `[assoc logits | key logits | means]`.
    pub fn actor_output(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward(&self.theta[self.actor_range()], obs).output().to_vec()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(&self.theta[self.critic_range()], obs).output()[0]
    }

    fn split<'a>(&self, out: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (a, rest) = out.split_at(self.spec.assoc_len());
        let (k, m) = rest.split_at(self.spec.key_len());
        (a, k, m)
    }

    pub fn act(&self, obs: &[f64], rng: &mut impl Rng) -> Sampled {
        let out = self.actor_output(obs);
        let (al, kl, means) = self.split(&out);
        let s = &self.spec;
        let mut log_prob = 0.0;
        let assoc: Vec<usize> = al
            .chunks(s.assoc_choices.max(1))
            .take(s.assoc_heads)
            .map(|z| {
                let a = categorical_sample(z, rng);
                log_prob += categorical_log_prob(z, a).0;
                a
            })
            .collect();
        let keys: Vec<usize> = kl
            .chunks(s.key_choices.max(1))
            .take(s.key_heads)
            .map(|z| {
                let a = categorical_sample(z, rng);
                log_prob += categorical_log_prob(z, a).0;
                a
            })
            .collect();
        let pre_tanh: Vec<f64> = means
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let ls = self.log_std(i);
                let u = gaussian_sample(*m, ls, rng);
                log_prob += squashed_gaussian_log_prob(*m, ls, u).log_prob;
                u
            })
            .collect();
        Sampled {
            action: Action {
                assoc,
                keys,
                continuous: pre_tanh.iter().map(|u| u.tanh()).collect(),
            },
            pre_tanh,
            log_prob,
            value: self.value(obs),
        }
    }

    /// Categorical argmax and squashed Gaussian mean.
    pub fn act_greedy(&self, obs: &[f64]) -> Action {
        let out = self.actor_output(obs);
        let (al, kl, means) = self.split(&out);
        let s = &self.spec;
        Action {
            assoc: al.chunks(s.assoc_choices.max(1)).take(s.assoc_heads).map(argmax).collect(),
            keys: kl.chunks(s.key_choices.max(1)).take(s.key_heads).map(argmax).collect(),
            continuous: means.iter().map(|m| m.tanh()).collect(),
        }
    }

    /// Joint log-probability of a stored action under the current parameters.
    pub fn log_prob(&self, obs: &[f64], assoc: &[usize], keys: &[usize], pre_tanh: &[f64]) -> f64 {
        let out = self.actor_output(obs);
        let (al, kl, means) = self.split(&out);
        let s = &self.spec;
        let mut lp = 0.0;
        for (z, a) in al.chunks(s.assoc_choices.max(1)).zip(assoc) {
            lp += categorical_log_prob(z, *a).0;
        }
        for (z, a) in kl.chunks(s.key_choices.max(1)).zip(keys) {
            lp += categorical_log_prob(z, *a).0;
        }
        for (i, (m, u)) in means.iter().zip(pre_tanh).enumerate() {
            lp += squashed_gaussian_log_prob(*m, self.log_std(i), *u).log_prob;
        }
        lp
    }

    /// Mean PPO loss over `batch` and its gradient with respect to `theta`.
    pub fn loss_and_grad(&self, batch: &[&Sample], c: LossCoefs) -> (LossStats, Vec<f64>) {
        let s = &self.spec;
        let b = batch.len() as f64;
        let mut grad = vec![0.0; self.theta.len()];
        let mut st = LossStats::default();
        let ar = self.actor_range();
        let lr = self.log_std_range();
        let cr = self.critic_range();
        let ls_active: Vec<bool> = self.theta[lr.clone()]
            .iter()
            .map(|v| (LOG_STD_MIN..=LOG_STD_MAX).contains(v))
            .collect();
        for smp in batch {
            let cache = self.actor.forward(&self.theta[ar.clone()], &smp.obs);
            let out = cache.output();
            let (al, kl, means) = self.split(out);
            let mut d_logp = vec![0.0; out.len()];
            let mut d_ent = vec![0.0; out.len()];
            let mut d_logp_ls = vec![0.0; s.continuous_dim];
            let mut logp = 0.0;
            let mut ent = 0.0;

            let heads = al
                .chunks(s.assoc_choices.max(1))
                .zip(&smp.assoc)
                .enumerate()
                .map(|(h, (z, a))| (h * s.assoc_choices, z, *a))
                .chain(
                    kl.chunks(s.key_choices.max(1))
                        .zip(&smp.keys)
                        .enumerate()
                        .map(|(h, (z, a))| (s.assoc_len() + h * s.key_choices, z, *a)),
                );
            for (off, z, a) in heads {
                let (lp, g) = categorical_log_prob(z, a);
                let (h, ge) = categorical_entropy(z);
                logp += lp;
                ent += h;
                d_logp[off..off + z.len()].copy_from_slice(&g);
                d_ent[off..off + z.len()].copy_from_slice(&ge);
            }
            let base = s.assoc_len() + s.key_len();
            for (i, (m, u)) in means.iter().zip(&smp.pre_tanh).enumerate() {
                let ls = self.log_std(i);
                let t = squashed_gaussian_log_prob(*m, ls, *u);
                logp += t.log_prob;
                ent += gaussian_entropy(ls);
                d_logp[base + i] = t.d_mean;
                d_logp_ls[i] = t.d_log_std;
            }

            let surr = clipped_surrogate(logp, smp.log_prob_old, smp.advantage, c.clip);
            let g = clipped_surrogate_grad(logp, smp.log_prob_old, smp.advantage, c.clip);
            let ratio = (logp - smp.log_prob_old).exp();
            if (ratio - 1.0).abs() > c.clip {
                st.clip_fraction += 1.0 / b;
            }
            st.approx_kl += (smp.log_prob_old - logp) / b;
            st.policy -= surr / b;
            st.entropy += ent / b;

            let k_logp = -g / b;
            let k_ent = -c.entropy / b;
            let dout: Vec<f64> = d_logp.iter().zip(&d_ent).map(|(l, e)| k_logp * l + k_ent * e).collect();
            self.actor
                .backward(&self.theta[ar.clone()], &cache, &dout, &mut grad[ar.clone()]);
            for i in 0..s.continuous_dim {
                if ls_active[i] {
                    grad[lr.start + i] += k_logp * d_logp_ls[i] + k_ent;
                }
            }

            let vcache = self.critic.forward(&self.theta[cr.clone()], &smp.obs);
            let v = vcache.output()[0];
            st.value += (v - smp.ret).powi(2) / b;
            let dv = 2.0 * c.value * (v - smp.ret) / b;
            self.critic
                .backward(&self.theta[cr.clone()], &vcache, &[dv], &mut grad[cr.clone()]);
        }
        st.total = st.policy - c.entropy * st.entropy + c.value * st.value;
        (st, grad)
    }

    pub fn loss(&self, batch: &[&Sample], c: LossCoefs) -> f64 {
        self.loss_and_grad(batch, c).0.total
    }

    fn clamp_log_std_params(&mut self) {
        let r = self.log_std_range();
        for v in &mut self.theta[r] {
            *v = clamp_log_std(*v);
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn apply(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its 2-norm is at most `max_norm`. Returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= k;
        }
    }
    norm
}

/// Steps collected since the last update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub assoc: Vec<Vec<usize>>,
    pub keys: Vec<Vec<usize>>,
    pub pre_tanh: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Stores one step. `next_value` is ignored by GAE when `done`.
    pub fn push(&mut self, obs: Vec<f64>, s: &Sampled, reward: f64, next_value: f64, done: bool) {
        self.obs.push(obs);
        self.assoc.push(s.action.assoc.clone());
        self.keys.push(s.action.keys.clone());
        self.pre_tanh.push(s.pre_tanh.clone());
        self.log_probs.push(s.log_prob);
        self.values.push(s.value);
        self.next_values.push(next_value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    /// Samples with GAE advantages, normalized over the buffer.
    pub fn samples(&self, gamma: f64, lambda: f64) -> Vec<Sample> {
        let (mut adv, ret) = compute_gae(&self.rewards, &self.values, &self.next_values, &self.dones, gamma, lambda);
        normalize(&mut adv);
        (0..self.len())
            .map(|i| Sample {
                obs: self.obs[i].clone(),
                assoc: self.assoc[i].clone(),
                keys: self.keys[i].clone(),
                pre_tanh: self.pre_tanh[i].clone(),
                log_prob_old: self.log_probs[i],
                advantage: adv[i],
                ret: ret[i],
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub samples: usize,
    pub minibatches: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: Policy,
    pub adam: Adam,
    pub hp: PpoConfig,
    pub buffer: RolloutBuffer,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(spec: PolicySpec, hp: PpoConfig, mut rng: ChaCha8Rng) -> Self {
        let policy = Policy::new(spec, &mut rng, hp.init_log_std);
        Self::from_policy(policy, hp, rng)
    }

    pub fn from_policy(policy: Policy, hp: PpoConfig, rng: ChaCha8Rng) -> Self {
        let adam = Adam::new(policy.num_params(), hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
        Self {
            policy,
            adam,
            hp,
            buffer: RolloutBuffer::default(),
            rng,
        }
    }

    fn nonfinite_location(&self, v: &[f64]) -> Option<&'static str> {
        let bad = |r: Range<usize>| v[r].iter().any(|x| !x.is_finite());
        if bad(self.policy.actor_range()) {
            Some("actor")
        } else if bad(self.policy.log_std_range()) {
            Some("actor.log_std")
        } else if bad(self.policy.critic_range()) {
            Some("critic")
        } else {
            None
        }
    }

    /// PPO update over the buffer; clears it afterwards. The stored log-probs
    /// are those of the policy that collected the data.
    pub fn update(&mut self) -> Result<UpdateStats, AgentError> {
        if self.buffer.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        let samples = self.buffer.samples(self.hp.discount, self.hp.gae_lambda);
        let coefs = LossCoefs::from_config(&self.hp);
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        let mut stats = UpdateStats {
            samples: samples.len(),
            ..Default::default()
        };
        for epoch in 0..self.hp.epochs {
            idx.shuffle(&mut self.rng);
            for (mb, chunk) in idx.chunks(self.hp.minibatch_size).enumerate() {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                let (ls, mut grad) = self.policy.loss_and_grad(&batch, coefs);
                if let Some(location) = self.nonfinite_location(&grad) {
                    self.buffer.clear();
                    return Err(AgentError::NonFiniteGradient {
                        location,
                        epoch,
                        minibatch: mb,
                    });
                }
                stats.grad_norm += clip_grad_norm(&mut grad, self.hp.max_grad_norm);
                self.adam.apply(&mut self.policy.theta, &grad, self.hp.learning_rate);
                stats.minibatches += 1;
                let k = stats.minibatches as f64;
                let acc = |a: f64, b: f64| a + (b - a) / k;
                stats.loss.total = acc(stats.loss.total, ls.total);
                stats.loss.policy = acc(stats.loss.policy, ls.policy);
                stats.loss.value = acc(stats.loss.value, ls.value);
                stats.loss.entropy = acc(stats.loss.entropy, ls.entropy);
                stats.loss.clip_fraction = acc(stats.loss.clip_fraction, ls.clip_fraction);
                stats.loss.approx_kl = acc(stats.loss.approx_kl, ls.approx_kl);
            }
        }
        stats.grad_norm /= stats.minibatches.max(1) as f64;
        self.buffer.clear();
        if let Some(location) = self.nonfinite_location(&self.policy.theta) {
            return Err(AgentError::NonFiniteParameter(location));
        }
        self.policy.clamp_log_std_params();
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ActionMode;
    use crate::scenario::instance_rng;
    use rand::SeedableRng;

    fn tiny_spec(hidden: usize) -> PolicySpec {
        PolicySpec {
            obs_dim: 6,
            assoc_heads: 1,
            assoc_choices: 2,
            key_heads: 1,
            key_choices: 8,
            continuous_dim: 2,
            hidden,
        }
    }

    #[test]
    fn surrogate_examples() {
        let l = |m: f64| m.ln();
        assert!((clipped_surrogate(l(1.5), 0.0, 1.0, 0.2) - 1.2).abs() < 1e-12);
        assert!((clipped_surrogate(0.0, 0.0, -3.7, 0.2) + 3.7).abs() < 1e-12);
        assert!((clipped_surrogate(l(0.5), 0.0, -1.0, 0.2) + 0.8).abs() < 1e-12);
        assert!((clipped_surrogate(0.3 + 5.0, 0.1 + 5.0, 0.7, 0.2) - clipped_surrogate(0.3, 0.1, 0.7, 0.2)).abs() < 1e-12);
        assert_eq!(clipped_surrogate_grad(l(1.5), 0.0, 1.0, 0.2), 0.0);
        assert_eq!(clipped_surrogate_grad(l(0.5), 0.0, -1.0, 0.2), 0.0);
        assert!((clipped_surrogate_grad(l(0.5), 0.0, 1.0, 0.2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_policy_outputs() {
        let p = Policy::zeros(tiny_spec(4));
        let obs = [0.3; 6];
        assert!(p.actor_output(&obs).iter().all(|v| *v == 0.0));
        assert_eq!(p.value(&obs), 0.0);
        let a = p.act_greedy(&obs);
        assert_eq!(a.continuous, vec![0.0, 0.0]);
    }

    #[test]
    fn tiny_network_is_small() {
        let p = Policy::new(tiny_spec(4), &mut ChaCha8Rng::seed_from_u64(0), 0.0);
        assert!(p.num_params() <= 200, "{}", p.num_params());
        let covered: usize = p.tensors().iter().map(|t| t.2.len()).sum();
        assert_eq!(covered, p.num_params());
    }

    #[test]
    fn greedy_from_full_size_spec() {
        let spec = ActionSpec {
            mode: ActionMode::Factored,
            assoc_heads: 10,
            assoc_choices: 8,
            key_heads: 10,
            key_choices: 8,
            continuous_dim: 6,
        };
        let p = Policy::new(PolicySpec::new(46, &spec, 64), &mut ChaCha8Rng::seed_from_u64(3), 0.0);
        let a = p.act_greedy(&[0.5; 46]);
        assert_eq!((a.assoc.len(), a.keys.len(), a.continuous.len()), (10, 10, 6));
        assert!(a.assoc.iter().all(|i| *i < 8));
        let s = p.act(&[0.5; 46], &mut ChaCha8Rng::seed_from_u64(4));
        let lp = p.log_prob(&[0.5; 46], &s.action.assoc, &s.action.keys, &s.pre_tanh);
        assert!((lp - s.log_prob).abs() < 1e-9);
    }

    fn random_batch(p: &Policy, rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
                let s = p.act(&obs, rng);
                Sample {
                    obs,
                    assoc: s.action.assoc,
                    keys: s.action.keys,
                    pre_tanh: s.pre_tanh,
                    log_prob_old: s.log_prob + rng.random_range(-0.1..0.1),
                    advantage: rng.random_range(-2.0..2.0),
                    ret: rng.random_range(-1.0..1.0),
                }
            })
            .collect()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = Policy::new(tiny_spec(4), &mut rng, -0.3);
        let p = p.with_params(p.theta.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect());
        let batch = random_batch(&p, &mut rng, 5);
        let refs: Vec<&Sample> = batch.iter().collect();
        let c = LossCoefs {
            clip: 0.2,
            entropy: 0.01,
            value: 0.5,
        };
        let (_, g) = p.loss_and_grad(&refs, c);
        let h = 1e-5;
        for i in 0..p.num_params() {
            let mut a = p.theta.clone();
            let mut b = p.theta.clone();
            a[i] += h;
            b[i] -= h;
            let num = (p.with_params(a).loss(&refs, c) - p.with_params(b).loss(&refs, c)) / (2.0 * h);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {num}", g[i]);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let spec = tiny_spec(4);
        let hp = PpoConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut agent = Agent::new(spec, hp, instance_rng(1, 0));
        let before = agent.policy.theta.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 0..10 {
            let obs: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..1.0)).collect();
            let s = agent.policy.act(&obs, &mut rng);
            agent.buffer.push(obs, &s, rng.random_range(-1.0..1.0), 0.0, t == 9);
        }
        agent.update().unwrap();
        assert_eq!(agent.policy.theta, before);
        assert!(agent.buffer.is_empty());
    }

    #[test]
    fn first_epoch_ratio_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = Policy::new(tiny_spec(4), &mut rng, 0.0);
        let mut batch = random_batch(&p, &mut rng, 4);
        for s in &mut batch {
            s.log_prob_old = p.log_prob(&s.obs, &s.assoc, &s.keys, &s.pre_tanh);
        }
        let refs: Vec<&Sample> = batch.iter().collect();
        let (st, _) = p.loss_and_grad(
            &refs,
            LossCoefs {
                clip: 0.2,
                entropy: 0.0,
                value: 0.0,
            },
        );
        assert!(st.approx_kl.abs() < 1e-12);
        assert_eq!(st.clip_fraction, 0.0);
        let plain: f64 = -batch.iter().map(|s| s.advantage).sum::<f64>() / 4.0;
        assert!((st.policy - plain).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_leaves_only_entropy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = Policy::new(tiny_spec(4), &mut rng, 0.0);
        let mut batch = random_batch(&p, &mut rng, 3);
        for s in &mut batch {
            s.advantage = 0.0;
        }
        let refs: Vec<&Sample> = batch.iter().collect();
        let c = LossCoefs {
            clip: 0.2,
            entropy: 0.0,
            value: 0.0,
        };
        let (_, g) = p.loss_and_grad(&refs, c);
        assert!(g.iter().all(|v| *v == 0.0));
        let (_, g) = p.loss_and_grad(&refs, LossCoefs { entropy: 0.01, ..c });
        let ls = p.log_std_range();
        for v in &g[ls] {
            assert!((v + 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_buffer_rejected() {
        let mut agent = Agent::new(tiny_spec(4), PpoConfig::default(), instance_rng(0, 0));
        assert!(matches!(agent.update(), Err(AgentError::EmptyBuffer)));
    }

    #[test]
    fn nan_reward_reports_location() {
        let mut agent = Agent::new(tiny_spec(4), PpoConfig::default(), instance_rng(0, 0));
        let obs = vec![0.5; 6];
        let s = agent.policy.act(&obs, &mut ChaCha8Rng::seed_from_u64(0));
        agent.buffer.push(obs.clone(), &s, f64::NAN, 0.0, true);
        agent.buffer.push(obs, &s, 1.0, 0.0, true);
        let err = agent.update().unwrap_err();
        assert!(matches!(err, AgentError::NonFiniteGradient { epoch: 0, minibatch: 0, .. }), "{err}");
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2, 0.9, 0.999, 1e-8);
        let mut th = vec![1.0, -1.0];
        a.apply(&mut th, &[0.5, -2.0], 0.01);
        assert!((th[0] - 0.99).abs() < 1e-6);
        assert!((th[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn grad_clip() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
    }
}
