//! Online rollouts of trained policies and the reported metrics.

mod pareto;

pub use pareto::{pareto_sweep, read_pareto_csv, ParetoPoint, SweepSpec, PARETO_HEADER};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algos::Policy;
use crate::env::{EnvConfig, TrajectoryStep, UavEnv};
use crate::error::{Error, Result};

/// Everything recorded about one evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub rewards: Vec<f64>,
    /// `Σ_t γ^t r_t`.
    pub discounted_return: f64,
    /// Per step: some UAV ended the step inside the risk rectangle.
    pub in_risk: Vec<bool>,
    pub sum_aoi: Vec<f64>,
    pub sum_power: Vec<f64>,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Runs `episodes` fixed-horizon episodes of `policy`.
pub fn rollout<P: Policy + ?Sized, R: Rng + ?Sized>(
    config: &EnvConfig,
    policy: &P,
    episodes: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<EpisodeTrace>> {
    let env = UavEnv::new(config.clone())?;
    let mut traces = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        let horizon = config.episode_len;
        let mut trace = EpisodeTrace {
            rewards: Vec::with_capacity(horizon),
            discounted_return: 0.0,
            in_risk: Vec::with_capacity(horizon),
            sum_aoi: Vec::with_capacity(horizon),
            sum_power: Vec::with_capacity(horizon),
        };
        let mut discount = 1.0;
        for _ in 0..horizon {
            let actions = policy.act(&state)?;
            let out = env.step(&state, &actions, rng)?;
            trace.discounted_return += discount * out.reward;
            discount *= gamma;
            trace.rewards.push(out.reward);
            trace.in_risk.push(out.info.in_risk);
            trace.sum_aoi.push(out.info.sum_aoi);
            trace.sum_power.push(out.info.sum_power);
            state = out.next;
        }
        traces.push(trace);
    }
    Ok(traces)
}

/// One episode recorded step by step for the trajectory CSV.
pub fn record_trajectory<P: Policy + ?Sized, R: Rng + ?Sized>(
    config: &EnvConfig,
    policy: &P,
    rng: &mut R,
) -> Result<Vec<TrajectoryStep>> {
    let env = UavEnv::new(config.clone())?;
    let mut state = env.reset(rng);
    let mut steps = Vec::with_capacity(config.episode_len);
    for step in 0..config.episode_len {
        let actions = policy.act(&state)?;
        let out = env.step(&state, &actions, rng)?;
        steps.push(TrajectoryStep {
            step,
            actions,
            next: out.next.clone(),
            reward: out.reward,
            in_risk: out.info.in_risk,
        });
        state = out.next;
    }
    Ok(steps)
}

/// Mean of the `⌈ξ·n⌉` smallest returns.
pub fn cvar_of(returns: &[f64], xi: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Empty("CVaR of an empty return list".into()));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::Config(format!("CVaR level must lie in (0, 1], got {xi}")));
    }
    let n = returns.len();
    // 0.15 * 100 evaluates to 15.000000000000002
    let k = ((xi * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Percentage of timesteps at which at least one UAV was in the risk region.
pub fn violation_pct(traces: &[EpisodeTrace]) -> Result<f64> {
    let total: usize = traces.iter().map(EpisodeTrace::len).sum();
    if total == 0 {
        return Err(Error::Empty("no timesteps to score".into()));
    }
    let flagged: usize = traces
        .iter()
        .map(|t| t.in_risk.iter().filter(|&&f| f).count())
        .sum();
    Ok(100.0 * flagged as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_return: f64,
    pub cvar_return: f64,
    pub xi: f64,
    pub violation_pct: f64,
    /// Per-step sum of device AoI, averaged over all steps.
    pub mean_sum_aoi: f64,
    /// Per-step total transmit power in watts, averaged over all steps.
    pub mean_sum_power: f64,
    pub episodes: usize,
    pub returns: Vec<f64>,
}

impl EvalReport {
    pub fn from_traces(traces: &[EpisodeTrace], xi: f64) -> Result<Self> {
        let returns: Vec<f64> = traces.iter().map(|t| t.discounted_return).collect();
        let avg_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        let cvar_return = cvar_of(&returns, xi)?;
        let steps: usize = traces.iter().map(EpisodeTrace::len).sum();
        let mean = |f: fn(&EpisodeTrace) -> &[f64]| {
            traces.iter().flat_map(|t| f(t).iter()).sum::<f64>() / steps.max(1) as f64
        };
        let report = Self {
            avg_return,
            cvar_return,
            xi,
            violation_pct: violation_pct(traces)?,
            mean_sum_aoi: mean(|t| &t.sum_aoi),
            mean_sum_power: mean(|t| &t.sum_power),
            episodes: traces.len(),
            returns,
        };
        if !report.avg_return.is_finite() || !report.cvar_return.is_finite() {
            return Err(Error::NonFinite("evaluation returns".into()));
        }
        Ok(report)
    }
}

/// Rollouts followed by metric assembly.
pub fn evaluate<P: Policy + ?Sized, R: Rng + ?Sized>(
    config: &EnvConfig,
    policy: &P,
    episodes: usize,
    gamma: f64,
    xi: f64,
    rng: &mut R,
) -> Result<EvalReport> {
    let traces = rollout(config, policy, episodes, gamma, rng)?;
    EvalReport::from_traces(&traces, xi)
}
