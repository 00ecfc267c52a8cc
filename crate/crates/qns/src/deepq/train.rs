//! Training loop: masked epsilon-greedy rollouts over standalone k-request
//! episodes, episode-level reward broadcast to every transition, experience
//! replay and a periodically synced target network.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::reward::episode_reward;
use super::{encode_state, masked_argmax, select_action, DeepqError, QNetworkModel};
use crate::engine::{attempt_entanglement, SlotConfig};
use crate::nettopo::Topology;
use crate::qlink::LookupTable;
use crate::traffic::Request;
use crate::rngutil;

/// One stored step of an episode.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub legal_mask: Vec<bool>,
    pub next_legal_mask: Vec<bool>,
}

/// Fixed-capacity ring buffer with uniform sampling.
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// Reward coefficients, optimizer and schedule settings for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c_d: f64,
    pub c_j: f64,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub replay_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_sync_period: u64,
    pub epochs: u32,
    pub episodes_per_epoch: u32,
    pub hidden_dims: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn default_for(k: usize, _node_count: usize) -> Self {
        Self {
            c_d: 0.9,
            c_j: 0.1,
            gamma: 0.9,
            // Gradients are batch means, so plain SGD wants a large step.
            lr: 0.1,
            batch: 64,
            replay_capacity: 100_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 5_000,
            target_sync_period: 250,
            epochs: 40,
            episodes_per_epoch: 100,
            hidden_dims: vec![128, 128],
            k,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DeepqError> {
        if self.c_d < 0.0 || self.c_j < 0.0 {
            return Err(DeepqError::InvalidConfig("coefficients must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(DeepqError::InvalidConfig(format!("gamma {}", self.gamma)));
        }
        for eps in [self.eps_start, self.eps_end] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(DeepqError::InvalidConfig(format!("epsilon {eps}")));
            }
        }
        if self.k == 0 || self.k > 8 {
            return Err(DeepqError::BadEpisodeSize(self.k));
        }
        if self.batch == 0 || self.replay_capacity == 0 || self.episodes_per_epoch == 0 {
            return Err(DeepqError::InvalidConfig("sizes must be positive".into()));
        }
        Ok(())
    }

    fn epsilon_at(&self, step: u64) -> f64 {
        let frac = (step as f64 / self.eps_decay_steps.max(1) as f64).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Per-epoch training curve point (means over `episodes_per_epoch` episodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    pub mean_loss: f64,
    pub mean_reward: f64,
}

/// Supplies standalone k-request training instances with realized service
/// durations.
pub trait EpisodeSampler {
    fn node_count(&self) -> usize;

    /// Draw k (src, dst) pairs and their realized service durations (ns).
    fn sample(&self, k: usize, rng: &mut ChaCha12Rng) -> Vec<((usize, usize), f64)>;
}

/// Episode instances drawn the way the slot engine serves requests: uniform
/// random distinct endpoints, durations from the retry/abort logic over the
/// lookup table.
pub struct EngineEpisodeSampler<'a> {
    pub topology: &'a Topology,
    pub lut: &'a LookupTable,
    pub cfg: SlotConfig,
}

impl EpisodeSampler for EngineEpisodeSampler<'_> {
    fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    fn sample(&self, k: usize, rng: &mut ChaCha12Rng) -> Vec<((usize, usize), f64)> {
        let v = self.topology.node_count();
        (0..k)
            .map(|i| {
                loop {
                    let src = rng.random_range(0..v);
                    let mut dst = rng.random_range(0..v - 1);
                    if dst >= src {
                        dst += 1;
                    }
                    let hops = self.topology.hop_distance(src, dst).unwrap_or(u32::MAX);
                    if hops == 0 || hops > self.lut.max_hops() {
                        continue;
                    }
                    let mut request = Request::new(i as u64, src, dst, 0);
                    attempt_entanglement(&mut request, self.lut, hops, &self.cfg, rng)
                        .expect("hop range checked");
                    // Both completions and drops consume exec_accum > 0.
                    return ((src, dst), request.exec_accum as f64);
                }
            })
            .collect()
    }
}

/// One Double-DQN minibatch update: y = r for terminal transitions, else
/// y = r + gamma * Q_target(s', argmax_legal Q_policy(s', a')). Mean squared
/// error on the taken action, one gradient-descent step. The target network
/// is left untouched.
pub fn train_step(
    policy: &mut QNetworkModel,
    target: &QNetworkModel,
    batch: &[&Transition],
    cfg: &TrainConfig,
) -> Result<f64, DeepqError> {
    if batch.is_empty() {
        return Err(DeepqError::InvalidConfig("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = policy.zero_gradients();
    let mut loss = 0.0;
    for t in batch {
        let y = if t.done {
            t.reward
        } else {
            let q_next = policy.forward(&t.next_state);
            match masked_argmax(&q_next, &t.next_legal_mask) {
                Some(a_next) => t.reward + cfg.gamma * target.forward(&t.next_state)[a_next],
                None => t.reward,
            }
        };
        let q = policy.forward(&t.state);
        let err = q[t.action] - y;
        loss += err * err / n;
        let mut out_grad = vec![0.0; q.len()];
        out_grad[t.action] = 2.0 * err / n;
        policy.accumulate_gradients(&t.state, &out_grad, &mut grads);
    }
    policy.apply_gradients(&grads, cfg.lr);
    Ok(loss)
}

/// Copy the policy weights into the target network.
pub fn sync_target(policy: &QNetworkModel, target: &mut QNetworkModel) {
    *target = policy.clone();
}

/// Full training run. Deterministic per config seed.
pub fn train(
    sampler: &dyn EpisodeSampler,
    cfg: &TrainConfig,
) -> Result<(QNetworkModel, Vec<EpochStats>), DeepqError> {
    cfg.validate()?;
    let v = sampler.node_count();
    let k = cfg.k;
    let mut dims = vec![2 * k * v];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(k);

    let mut policy = QNetworkModel::new(&dims, rngutil::derive_seed(cfg.seed, "deepq.weights", &[]))?;
    let mut target = policy.clone();
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut env_rng = rngutil::stream(cfg.seed, "deepq.env", &[]);
    let mut rollout_rng = rngutil::stream(cfg.seed, "deepq.rollout", &[]);
    let mut replay_rng = rngutil::stream(cfg.seed, "deepq.replay", &[]);

    let mut curves = Vec::with_capacity(cfg.epochs as usize);
    let mut global_step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut losses = Vec::new();
        let mut rewards = Vec::with_capacity(cfg.episodes_per_epoch as usize);
        for _ in 0..cfg.episodes_per_epoch {
            let instance = sampler.sample(k, &mut env_rng);
            let pairs: Vec<(usize, usize)> = instance.iter().map(|(p, _)| *p).collect();
            let durations: Vec<f64> = instance.iter().map(|(_, d)| *d).collect();

            let mut resolved = vec![false; k];
            let mut order = Vec::with_capacity(k);
            let mut steps: Vec<Transition> = Vec::with_capacity(k);
            for _ in 0..k {
                let state = encode_state(&pairs, &resolved, v)?;
                let mask: Vec<bool> = resolved.iter().map(|&r| !r).collect();
                let eps = cfg.epsilon_at(global_step + order.len() as u64);
                let action = select_action(&policy, &state, &mask, eps, &mut rollout_rng)?;
                resolved[action] = true;
                order.push(action);
                let next_state = encode_state(&pairs, &resolved, v)?;
                let next_mask: Vec<bool> = resolved.iter().map(|&r| !r).collect();
                steps.push(Transition {
                    state: state.flat().to_vec(),
                    action,
                    reward: 0.0,
                    next_state: next_state.flat().to_vec(),
                    done: false,
                    legal_mask: mask,
                    next_legal_mask: next_mask,
                });
            }

            let reward = episode_reward(&durations, &order, cfg.c_d, cfg.c_j)?;
            rewards.push(reward);
            let last = steps.len() - 1;
            for (i, mut t) in steps.into_iter().enumerate() {
                t.reward = reward;
                t.done = i == last;
                replay.push(t);
            }

            for _ in 0..k {
                global_step += 1;
                if replay.len() >= cfg.batch {
                    let batch = replay.sample(cfg.batch, &mut replay_rng);
                    losses.push(train_step(&mut policy, &target, &batch, cfg)?);
                }
                if global_step % cfg.target_sync_period == 0 {
                    sync_target(&policy, &mut target);
                }
            }
        }
        curves.push(EpochStats {
            epoch,
            mean_loss: if losses.is_empty() {
                0.0
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            },
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
        });
    }
    Ok((policy, curves))
}
