use rand::Rng;
use serde::{Deserialize, Serialize};

use super::physics::{channel_gain, tx_power, update_aoi};
use super::{AgentAction, EnvConfig, EnvState};
use crate::error::{Error, Result};

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub sum_aoi: f64,
    pub sum_power: f64,
    /// At least one UAV ended the step inside the risk rectangle.
    pub in_risk: bool,
    /// The risk penalty was actually charged.
    pub risk_triggered: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub info: StepInfo,
}

/// Transmit power for device `device` (0-based) served from `cell`.
pub fn link_power(config: &EnvConfig, cell: (usize, usize), device: usize) -> f64 {
    let [ux, uy] = config.cell_center_m(cell);
    let [dx, dy] = config.device_positions[device];
    let dist = ((ux - dx).powi(2) + (uy - dy).powi(2)).sqrt();
    let gain = channel_gain(config.g0, config.height_m, dist);
    tx_power(gain, config.packet_bits, config.bandwidth_hz, config.noise_power_w)
        .expect("gain is positive for positive g0")
}

/// Total power over `(uav, device)` selections, with 0-based device indices,
/// evaluated at the UAV cells of `next`.
pub fn served_power(next: &EnvState, served: &[(usize, usize)], config: &EnvConfig) -> f64 {
    served
        .iter()
        .map(|&(uav, device)| link_power(config, next.uav_cells[uav], device))
        .sum()
}

/// Reward before any risk penalty: negative mean AoI minus λ-weighted power.
pub fn base_reward(next: &EnvState, served: &[(usize, usize)], config: &EnvConfig) -> f64 {
    let mean_aoi = next.aoi.iter().map(|&a| a as f64).sum::<f64>() / next.aoi.len() as f64;
    -mean_aoi - config.lambda * served_power(next, served, config)
}

/// `(uav, device)` pairs with 0-based device indices for every UAV that serves.
pub fn served_pairs(actions: &[AgentAction]) -> Vec<(usize, usize)> {
    actions
        .iter()
        .enumerate()
        .filter(|(_, a)| a.serve > 0)
        .map(|(i, a)| (i, a.serve - 1))
        .collect()
}

/// Deterministic part of a transition: moves and AoI updates.
pub fn advance(state: &EnvState, actions: &[AgentAction], config: &EnvConfig) -> EnvState {
    let uav_cells = state
        .uav_cells
        .iter()
        .zip(actions)
        .map(|(&cell, a)| a.mv.apply(cell, config.grid_w, config.grid_h))
        .collect();
    let mut served = vec![false; config.num_devices];
    for a in actions.iter().filter(|a| a.serve > 0) {
        served[a.serve - 1] = true;
    }
    let aoi = state
        .aoi
        .iter()
        .zip(&served)
        .map(|(&a, &s)| update_aoi(a, s, config.a_max))
        .collect();
    EnvState { uav_cells, aoi }
}

/// The multi-UAV data-collection grid world.
#[derive(Clone, Debug)]
pub struct UavEnv {
    config: EnvConfig,
}

impl UavEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Uniform random UAV cells, every AoI at 1.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let c = &self.config;
        EnvState {
            uav_cells: (0..c.num_uavs)
                .map(|_| (rng.random_range(0..c.grid_w), rng.random_range(0..c.grid_h)))
                .collect(),
            aoi: vec![1; c.num_devices],
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        actions: &[AgentAction],
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let c = &self.config;
        if actions.len() != c.num_uavs {
            return Err(Error::Dimension(format!(
                "{} actions for {} UAVs",
                actions.len(),
                c.num_uavs
            )));
        }
        if let Some(a) = actions.iter().find(|a| a.serve > c.num_devices) {
            return Err(Error::Config(format!("serve target {} out of range", a.serve)));
        }
        let next = advance(state, actions, c);
        let pairs = served_pairs(actions);
        let sum_power = served_power(&next, &pairs, c);
        let mean_aoi = next.aoi.iter().map(|&a| a as f64).sum::<f64>() / c.num_devices as f64;
        let mut reward = -mean_aoi - c.lambda * sum_power;
        let in_risk = next.uav_cells.iter().any(|&cell| c.in_risk_region(cell));
        let risk_triggered = in_risk && c.p_risk > 0.0 && rng.random::<f64>() < c.p_risk;
        if risk_triggered {
            reward -= c.risk_penalty;
        }
        let info = StepInfo {
            sum_aoi: mean_aoi * c.num_devices as f64,
            sum_power,
            in_risk,
            risk_triggered,
        };
        Ok(StepOutcome { next, reward, info })
    }
}
