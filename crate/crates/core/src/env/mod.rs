//! Multi-UAV age-of-information grid world.

mod config;
mod physics;
mod sim;
mod state;
mod trajectory;

pub use config::{db_to_linear, dbm_to_watts, EnvConfig};
pub(crate) use config::hex_digest;
pub use physics::{channel_gain, tx_power, update_aoi};
pub use sim::{advance, base_reward, link_power, served_pairs, served_power, StepInfo, StepOutcome, UavEnv};
pub use state::{AgentAction, EnvState, Move};
pub use trajectory::{write_trajectory_csv, TrajectoryStep};
