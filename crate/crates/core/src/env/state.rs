use serde::{Deserialize, Serialize};

use super::EnvConfig;
use crate::error::{Error, Result};

/// UAV cells plus per-device age of information.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub uav_cells: Vec<(usize, usize)>,
    pub aoi: Vec<u32>,
}

impl EnvState {
    /// `[x1, y1, …, xI, yI, A1, …, AM]` in raw units.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.uav_cells.len() + self.aoi.len());
        for &(x, y) in &self.uav_cells {
            v.push(x as f64);
            v.push(y as f64);
        }
        v.extend(self.aoi.iter().map(|&a| a as f64));
        v
    }

    pub fn from_vec(v: &[f64], config: &EnvConfig) -> Result<Self> {
        if v.len() != config.state_dim() {
            return Err(Error::Dimension(format!(
                "state vector of length {} for state_dim {}",
                v.len(),
                config.state_dim()
            )));
        }
        let as_int = |x: f64| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
                Ok(x as usize)
            } else {
                Err(Error::Format(format!("state entry {x} is not a non-negative integer")))
            }
        };
        let i = config.num_uavs;
        let uav_cells = (0..i)
            .map(|k| Ok((as_int(v[2 * k])?, as_int(v[2 * k + 1])?)))
            .collect::<Result<Vec<_>>>()?;
        let aoi = v[2 * i..]
            .iter()
            .map(|&a| as_int(a).map(|a| a as u32))
            .collect::<Result<Vec<_>>>()?;
        let state = Self { uav_cells, aoi };
        state.validate(config)?;
        Ok(state)
    }

    pub fn validate(&self, config: &EnvConfig) -> Result<()> {
        if self.uav_cells.len() != config.num_uavs || self.aoi.len() != config.num_devices {
            return Err(Error::Dimension("state does not match UAV/device counts".into()));
        }
        if let Some(c) = self
            .uav_cells
            .iter()
            .find(|&&(x, y)| x >= config.grid_w || y >= config.grid_h)
        {
            return Err(Error::Config(format!("UAV cell {c:?} outside the grid")));
        }
        if let Some(a) = self.aoi.iter().find(|&&a| a < 1 || a > config.a_max) {
            return Err(Error::Config(format!("AoI {a} outside [1, {}]", config.a_max)));
        }
        Ok(())
    }
}

/// Movement component of an agent's action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    North,
    South,
    East,
    West,
    Hover,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::North, Move::South, Move::East, Move::West, Move::Hover];

    /// Applies the move, clamping at the grid border.
    pub fn apply(self, (x, y): (usize, usize), grid_w: usize, grid_h: usize) -> (usize, usize) {
        match self {
            Move::North => (x, (y + 1).min(grid_h - 1)),
            Move::South => (x, y.saturating_sub(1)),
            Move::East => ((x + 1).min(grid_w - 1), y),
            Move::West => (x.saturating_sub(1), y),
            Move::Hover => (x, y),
        }
    }
}

/// One UAV's decision: a move and the device it serves (0 = none, else 1..=M).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentAction {
    pub mv: Move,
    pub serve: usize,
}

impl AgentAction {
    pub fn new(mv: Move, serve: usize) -> Self {
        Self { mv, serve }
    }

    /// Flat index `move · (M + 1) + serve`.
    pub fn index(self, num_devices: usize) -> usize {
        self.mv as usize * (num_devices + 1) + self.serve
    }

    pub fn from_index(index: usize, num_devices: usize) -> Result<Self> {
        let per_move = num_devices + 1;
        if index >= 5 * per_move {
            return Err(Error::Config(format!(
                "action index {index} out of range for {num_devices} devices"
            )));
        }
        Ok(Self {
            mv: Move::ALL[index / per_move],
            serve: index % per_move,
        })
    }
}
