//! Online independent DQN used to generate the behavior data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_indices, Batch, Normalizer, Transition};
use crate::algos::{clip_global_norm, dqn_loss, greedy_action};
use crate::env::{AgentAction, EnvConfig, UavEnv};
use crate::error::{Error, Result};
use crate::nn::MlpNet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    /// Episode budget; training may stop earlier on stagnation.
    pub episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the episode budget over which ε is annealed linearly.
    pub anneal_fraction: f64,
    pub replay_capacity: usize,
    pub target_sync_steps: usize,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Environment steps between gradient steps.
    pub train_every: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    pub hidden_width: usize,
    pub grad_clip: Option<f64>,
    /// Moving-average window for the stagnation check.
    pub stagnation_window: usize,
    /// Episodes between the two moving averages that are compared.
    pub stagnation_patience: usize,
    /// Relative change below which training stops early.
    pub stagnation_tolerance: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            episodes: 3000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.5,
            replay_capacity: 100_000,
            target_sync_steps: 200,
            lr: 1e-4,
            gamma: 0.99,
            batch_size: 128,
            train_every: 4,
            warmup: 1000,
            hidden_width: crate::nn::HIDDEN_WIDTH,
            grad_clip: Some(10.0),
            stagnation_window: 100,
            stagnation_patience: 500,
            stagnation_tolerance: 0.01,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(Error::Config("epsilon values must lie in [0, 1]".into()));
        }
        if !(self.lr > 0.0) || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("behavior lr must be positive and gamma in (0, 1)".into()));
        }
        if self.batch_size == 0 || self.train_every == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("batch_size, train_every and replay_capacity must be positive".into()));
        }
        if self.target_sync_steps == 0 || self.hidden_width == 0 {
            return Err(Error::Config("target_sync_steps and hidden_width must be positive".into()));
        }
        Ok(())
    }

    fn epsilon(&self, episode: usize) -> f64 {
        let horizon = (self.anneal_fraction * self.episodes as f64).max(1.0);
        let progress = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }
}

#[derive(Clone, Debug)]
pub struct BehaviorOutcome {
    pub nets: Vec<MlpNet>,
    /// Every transition observed, in order.
    pub log: Vec<Transition>,
    /// Undiscounted return of each episode.
    pub episode_returns: Vec<f64>,
}

impl BehaviorOutcome {
    pub fn episodes_run(&self) -> usize {
        self.episode_returns.len()
    }

    /// Mean return over the last `window` episodes (all if fewer).
    pub fn tail_mean(&self, window: usize) -> f64 {
        let n = self.episode_returns.len();
        if n == 0 {
            return 0.0;
        }
        let tail = &self.episode_returns[n.saturating_sub(window)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Trains one ε-greedy DQN per UAV online and records all experience.
pub fn train_behavior_policy<R: Rng + ?Sized>(
    env_config: &EnvConfig,
    cfg: &BehaviorConfig,
    rng: &mut R,
) -> Result<BehaviorOutcome> {
    cfg.validate()?;
    let env = UavEnv::new(env_config.clone())?;
    let dims = [
        env_config.state_dim(),
        cfg.hidden_width,
        cfg.hidden_width,
        env_config.actions_per_agent(),
    ];
    let mut nets = (0..env_config.num_uavs)
        .map(|_| MlpNet::new(&dims, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut targets = nets.clone();
    let normalizer = Normalizer::for_env(env_config);
    let n_actions = env_config.actions_per_agent();

    let mut log: Vec<Transition> = Vec::with_capacity(cfg.episodes * env_config.episode_len);
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut env_steps = 0usize;
    let mut grad_steps = 0usize;

    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode);
        let mut state = env.reset(rng);
        let mut total = 0.0;
        for _ in 0..env_config.episode_len {
            let input = normalizer.apply(&state.to_vec());
            let mut joint = Vec::with_capacity(nets.len());
            let mut indices = Vec::with_capacity(nets.len());
            for net in &nets {
                let idx = if rng.random::<f64>() < eps {
                    rng.random_range(0..n_actions)
                } else {
                    greedy_action(&net.forward(&input)?, 1)
                };
                indices.push(idx as u32);
                joint.push(AgentAction::from_index(idx, env_config.num_devices)?);
            }
            let out = env.step(&state, &joint, rng)?;
            total += out.reward;
            log.push(Transition {
                state: state.to_vec(),
                actions: indices,
                reward: out.reward,
                next_state: out.next.to_vec(),
            });
            state = out.next;
            env_steps += 1;

            if log.len() >= cfg.warmup.max(1) && env_steps.is_multiple_of(cfg.train_every) {
                let start = log.len().saturating_sub(cfg.replay_capacity);
                let idx = sample_indices(log.len() - start, cfg.batch_size, rng)?;
                let batch = Batch::from_transitions(idx.iter().map(|&i| &log[start + i]), &normalizer);
                for (agent, net) in nets.iter_mut().enumerate() {
                    let mut loss = dqn_loss(&batch, agent, &*net, &targets[agent], cfg.gamma)
                        .map_err(|e| Error::Diverged {
                            iteration: episode,
                            reason: e.to_string(),
                        })?;
                    if let Some(max) = cfg.grad_clip {
                        clip_global_norm::<MlpNet>(std::slice::from_mut(&mut loss.grad), max);
                    }
                    net.adam_step(&loss.grad, cfg.lr).map_err(|e| Error::Diverged {
                        iteration: episode,
                        reason: e.to_string(),
                    })?;
                }
                grad_steps += 1;
                if grad_steps.is_multiple_of(cfg.target_sync_steps) {
                    for (t, n) in targets.iter_mut().zip(&nets) {
                        t.copy_params_from(n);
                    }
                }
            }
        }
        returns.push(total);
        if stagnated(&returns, cfg, episode) {
            break;
        }
    }
    Ok(BehaviorOutcome {
        nets,
        log,
        episode_returns: returns,
    })
}

fn stagnated(returns: &[f64], cfg: &BehaviorConfig, episode: usize) -> bool {
    let w = cfg.stagnation_window;
    let p = cfg.stagnation_patience;
    let anneal_end = (cfg.anneal_fraction * cfg.episodes as f64).ceil() as usize;
    if w == 0 || episode < anneal_end || returns.len() < w + p {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let n = returns.len();
    let now = mean(&returns[n - w..]);
    let then = mean(&returns[n - w - p..n - p]);
    (now - then).abs() <= cfg.stagnation_tolerance * then.abs().max(f64::MIN_POSITIVE)
}
