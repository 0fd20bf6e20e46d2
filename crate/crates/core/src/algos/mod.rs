//! Offline multi-agent learners: loss functions, the shared training loop and
//! greedy policy extraction.

mod config;
mod head;
mod losses;
mod policy;
mod trainer;

pub use config::{Algorithm, TrainerConfig};
pub use head::{QHead, TabularHead};
pub use losses::{
    action_means, argmax, cql_penalty, dqn_loss, greedy_action, ma_ccql_loss, ma_ccqr_loss,
    ma_ciql_loss, ma_ciqr_loss, qr_dqn_loss, quantile_huber, quantile_huber_grad,
    quantile_midpoints, quantile_td_matrix, vdn_target, AgentLoss, JointLoss, LossValue,
};
pub use policy::{GreedyPolicy, Policy};
pub use trainer::{
    check_compatible, clip_global_norm, init_heads, mean_action_value, train, LossRecord,
    TrainOutcome,
};
