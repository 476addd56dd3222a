use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::adam::Adam;
use super::model::{masked_argmax, masked_max, Backward, Input, QNetwork, QValues, ACTIONS, PARAM_COUNT};
use super::replay::{Episode, ReplayBuffer, Transition};
use crate::network::{EnvState, Network};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub target_update_steps: u64,
    pub epsilon_base: f64,
    pub epsilon_decay_episodes: usize,
    pub epsilon_floor: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_episodes: usize,
    pub episodes: usize,
    pub eval_every: usize,
    pub eval_set_size: usize,
    /// Optimizer steps taken after each episode once the buffer holds a batch.
    pub updates_per_episode: usize,
    /// Rewards are multiplied by this before entering the TD target.
    pub reward_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            target_update_steps: 200,
            epsilon_base: 0.99,
            epsilon_decay_episodes: 1000,
            epsilon_floor: 0.01,
            buffer_capacity: 500,
            batch_size: 16,
            learning_rate: 1e-3,
            lr_decay: 0.8,
            lr_decay_episodes: 2000,
            episodes: 20_000,
            eval_every: 100,
            eval_set_size: 1000,
            updates_per_episode: 10,
            reward_scale: 0.0025,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("replay buffer holds {stored} episodes, batch needs {needed}")]
    EmptyBuffer { stored: usize, needed: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training pool is empty")]
    EmptyPool,
}

impl TrainConfig {
    /// `max(floor, base^floor(e / decay_episodes))`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let k = (episode / self.epsilon_decay_episodes.max(1)) as i32;
        self.epsilon_base.powi(k).max(self.epsilon_floor)
    }

    pub fn learning_rate_at(&self, episode: usize) -> f64 {
        let k = (episode / self.lr_decay_episodes.max(1)) as i32;
        self.learning_rate * self.lr_decay.powi(k)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer capacity must hold at least one batch");
        }
        if self.learning_rate <= 0.0 || self.lr_decay <= 0.0 || self.reward_scale <= 0.0 {
            return bad("learning rate, its decay and the reward scale must be positive");
        }
        if self.target_update_steps == 0 || self.eval_every == 0 || self.episodes == 0 || self.updates_per_episode == 0 {
            return bad("episode, evaluation and target-refresh counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) || self.epsilon_base <= 0.0 {
            return bad("epsilon base must be positive and the floor a probability");
        }
        Ok(())
    }
}

/// Epsilon-greedy move; the hidden state advances either way.
pub fn select_action(
    net: &QNetwork,
    hidden: &mut super::model::Hidden,
    state: &EnvState<'_>,
    epsilon: f64,
    rng: &mut seed::Rng,
) -> usize {
    let input = Input::from(&state.observe());
    let q = net.forward_q(hidden, &input);
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        state.choices().choose(rng).expect("node without outgoing edges").0
    } else {
        masked_argmax(&q, &input.mask).expect("node without outgoing edges")
    }
}

/// Plays one episode, recording the transitions.
pub fn play_episode(net: &QNetwork, network: &Network, epsilon: f64, rng: &mut seed::Rng) -> Episode {
    let mut state = EnvState::new(network);
    let mut hidden = QNetwork::initial_hidden();
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let obs = state.observe();
        let action = select_action(net, &mut hidden, &state, epsilon, rng);
        let reward = state.step(action).expect("selected action is reachable");
        steps.push(Transition { features: obs.flat(), mask: obs.mask, action, reward });
    }
    Episode { steps }
}

/// Mean squared TD error over every step of every episode, with targets
/// from `target`. The final step of an episode does not bootstrap.
/// Gradients w.r.t. the online parameters are accumulated into `grad`.
pub(crate) fn td_loss_grad(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[&Episode],
    gamma: f64,
    reward_scale: f64,
    grad: Option<&mut [f64]>,
    mode: Backward,
) -> f64 {
    let count: usize = batch.iter().map(|e| e.steps.len()).sum();
    if count == 0 {
        return 0.0;
    }
    let mut grad = grad;
    let mut loss = 0.0;
    for ep in batch {
        let features = ep.features();
        let targets = td_targets(target, ep, &features, gamma, reward_scale);
        let (qs, caches) = online.unroll(&features);
        let mut dq: Vec<QValues> = vec![[0.0; ACTIONS]; qs.len()];
        for (t, step) in ep.steps.iter().enumerate() {
            let diff = qs[t][step.action] - targets[t];
            loss += diff * diff;
            dq[t][step.action] = 2.0 * diff / count as f64;
        }
        if let Some(g) = grad.as_deref_mut() {
            online.backward(&caches, &dq, g, mode);
        }
    }
    loss / count as f64
}

/// `r + gamma * max_a' Q_target(o', a')`, or `r` on the last step.
pub fn td_targets(target: &QNetwork, ep: &Episode, features: &[super::model::Features], gamma: f64, reward_scale: f64) -> Vec<f64> {
    let q_next = target.unroll_q(features);
    ep.steps
        .iter()
        .enumerate()
        .map(|(t, step)| {
            let r = step.reward as f64 * reward_scale;
            match ep.steps.get(t + 1) {
                Some(next) => r + gamma * masked_max(&q_next[t + 1], &next.mask).unwrap_or(0.0),
                None => r,
            }
        })
        .collect()
}

/// Online network, frozen target copy and optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub online: QNetwork,
    pub target: QNetwork,
    pub optimizer: Adam,
    pub gamma: f64,
    pub reward_scale: f64,
    pub grad_clip: Option<f64>,
    pub target_update_steps: u64,
}

impl Learner {
    pub fn new(online: QNetwork, cfg: &TrainConfig) -> Self {
        Learner {
            target: online.clone(),
            online,
            optimizer: Adam::new(PARAM_COUNT, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
            gamma: cfg.gamma,
            reward_scale: cfg.reward_scale,
            grad_clip: cfg.grad_clip,
            target_update_steps: cfg.target_update_steps,
        }
    }

    /// One optimizer step on `batch`; returns the pre-update loss. The
    /// target copy is refreshed every `target_update_steps` steps.
    pub fn td_update(&mut self, batch: &[&Episode], lr: f64) -> f64 {
        let mut grad = vec![0.0; PARAM_COUNT];
        let loss = td_loss_grad(&self.online, &self.target, batch, self.gamma, self.reward_scale, Some(&mut grad), Backward::Exact);
        if let Some(limit) = self.grad_clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > limit {
                grad.iter_mut().for_each(|g| *g *= limit / norm);
            }
        }
        self.optimizer.step(self.online.params_mut(), &grad, lr);
        if self.optimizer.steps() % self.target_update_steps == 0 {
            self.target = self.online.clone();
        }
        loss
    }

    /// Samples a batch from `buffer` and applies [`Learner::td_update`].
    pub fn update_from(&mut self, buffer: &ReplayBuffer, batch_size: usize, lr: f64, rng: &mut seed::Rng) -> Result<f64, TrainError> {
        let batch = buffer
            .sample(batch_size, rng)
            .ok_or(TrainError::EmptyBuffer { stored: buffer.len(), needed: batch_size })?;
        Ok(self.td_update(&batch, lr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_max_level: f64,
    pub epsilon: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_reward: f64,
    pub mean_max_level: f64,
}

/// Greedy performance over `networks`. Parallel over networks; the result
/// does not depend on the thread count.
pub fn evaluate(net: &QNetwork, networks: &[Network]) -> Evaluation {
    let per: Vec<(i32, u8)> = networks
        .par_iter()
        .map(|n| {
            let t = super::greedy_trajectory(net, n);
            let top = t.moves.iter().filter_map(|&m| n.level(m)).max().unwrap_or(0);
            (t.total, top.max(n.level(n.start_node()).unwrap_or(0)))
        })
        .collect();
    let count = per.len().max(1) as f64;
    Evaluation {
        mean_reward: per.iter().map(|p| p.0 as f64).sum::<f64>() / count,
        mean_max_level: per.iter().map(|p| p.1 as f64).sum::<f64>() / count,
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: QNetwork,
    pub curve: Vec<CurvePoint>,
}

/// Trains a fresh network. Each episode plays one uniformly drawn training
/// network; `updates_per_episode` TD updates follow every episode once the buffer holds a
/// batch. The curve has a point before training and every `eval_every`
/// episodes.
pub fn train(cfg: &TrainConfig, training: &[Network], validation: &[Network]) -> Result<TrainOutcome, TrainError> {
    train_with(cfg, training, validation, |_| {})
}

pub fn train_with(
    cfg: &TrainConfig,
    training: &[Network],
    validation: &[Network],
    mut on_eval: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if training.is_empty() {
        return Err(TrainError::EmptyPool);
    }
    let eval_set = &validation[..validation.len().min(cfg.eval_set_size)];
    let mut learner = Learner::new(QNetwork::new(cfg.seed), cfg);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut act_rng = seed::rng_at(cfg.seed, &[seed::label("act")]);
    let mut sample_rng = seed::rng_at(cfg.seed, &[seed::label("sample")]);
    let mut curve = Vec::new();
    let mut record = |episode: usize, net: &QNetwork, curve: &mut Vec<CurvePoint>| {
        let e = evaluate(net, eval_set);
        let point = CurvePoint {
            episode,
            mean_reward: e.mean_reward,
            mean_max_level: e.mean_max_level,
            epsilon: cfg.epsilon(episode),
            lr: cfg.learning_rate_at(episode),
        };
        on_eval(&point);
        curve.push(point);
    };
    record(0, &learner.online, &mut curve);
    for episode in 0..cfg.episodes {
        let network = training.choose(&mut act_rng).expect("non-empty pool");
        let ep = play_episode(&learner.online, network, cfg.epsilon(episode), &mut act_rng);
        buffer.push(ep);
        if buffer.len() >= cfg.batch_size {
            for _ in 0..cfg.updates_per_episode {
                learner.update_from(&buffer, cfg.batch_size, cfg.learning_rate_at(episode), &mut sample_rng)?;
            }
        }
        if (episode + 1) % cfg.eval_every == 0 {
            record(episode + 1, &learner.online, &mut curve);
        }
    }
    Ok(TrainOutcome { policy: learner.online, curve })
}
