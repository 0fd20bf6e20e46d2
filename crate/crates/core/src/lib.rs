//! Offline multi-agent reinforcement learning with conservative and
//! distributional (CVaR) Q-learning, exercised on a UAV age-of-information
//! grid world.
//!
//! Pipeline: [`dataset::train_behavior_policy`] collects experience online,
//! [`dataset::subsample`] builds the offline dataset, [`algos::train`] fits one
//! of six learners and [`eval::evaluate`] scores the greedy policy.

pub mod algos;
pub mod cli;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod io_util;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
