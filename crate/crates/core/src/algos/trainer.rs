use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, TrainerConfig};
use super::head::QHead;
use super::losses::{
    action_means, dqn_loss, ma_ccql_loss, ma_ccqr_loss, ma_ciql_loss, ma_ciqr_loss, qr_dqn_loss,
    quantile_midpoints, LossValue,
};
use crate::dataset::{sample_indices, Batch, Dataset};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::MlpNet;
use crate::rng::{stream_rng, streams};

/// Loss of one gradient step. For independent variants the per-agent losses
/// are summed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub step: usize,
    pub total: f64,
    pub td: f64,
    pub conservative: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<H> {
    pub heads: Vec<H>,
    pub trace: Vec<LossRecord>,
}

/// Freshly initialised online networks, one per UAV.
pub fn init_heads<R: Rng + ?Sized>(
    env: &EnvConfig,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<Vec<MlpNet>> {
    let dims = [
        env.state_dim(),
        cfg.hidden_width,
        cfg.hidden_width,
        env.actions_per_agent() * cfg.quantiles(),
    ];
    (0..env.num_uavs).map(|_| MlpNet::new(&dims, rng)).collect()
}

/// Rescales `grads` jointly so that their global L2 norm is at most `max`.
/// Returns the norm before clipping.
pub fn clip_global_norm<H: QHead>(grads: &mut [H::Grad], max: f64) -> f64 {
    let norm = grads.iter().map(H::grad_squared_norm).sum::<f64>().sqrt();
    if norm > max {
        for g in grads.iter_mut() {
            H::grad_scale(g, max / norm);
        }
    }
    norm
}

/// Dataset, environment and heads must agree before training starts.
pub fn check_compatible<H: QHead>(
    dataset: &Dataset,
    env: &EnvConfig,
    cfg: &TrainerConfig,
    heads: &[H],
) -> Result<()> {
    if dataset.meta.env_hash != env.hash() {
        return Err(Error::Config(format!(
            "dataset was collected under env hash {} but the config hashes to {}",
            dataset.meta.env_hash,
            env.hash()
        )));
    }
    if heads.len() != env.num_uavs {
        return Err(Error::Dimension(format!(
            "{} heads for {} UAVs",
            heads.len(),
            env.num_uavs
        )));
    }
    let outputs = env.actions_per_agent() * cfg.quantiles();
    for h in heads {
        if h.input_dim() != env.state_dim() || h.output_dim() != outputs {
            return Err(Error::Dimension(format!(
                "head maps {} -> {} but the task needs {} -> {}",
                h.input_dim(),
                h.output_dim(),
                env.state_dim(),
                outputs
            )));
        }
    }
    Ok(())
}

/// Offline training: `K` outer iterations, each starting with a target copy
/// followed by `G` gradient steps on fresh minibatches. `on_iteration` is
/// called after every iteration with its index and the current heads.
pub fn train<H, F>(
    dataset: &Dataset,
    cfg: &TrainerConfig,
    env: &EnvConfig,
    mut heads: Vec<H>,
    mut on_iteration: F,
) -> Result<TrainOutcome<H>>
where
    H: QHead,
    F: FnMut(usize, &[H]) -> Result<()>,
{
    cfg.validate()?;
    check_compatible(dataset, env, cfg, &heads)?;
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset has no transitions".into()));
    }
    let mut rng = stream_rng(cfg.seed, streams::BATCHES);
    let alpha = cfg.effective_alpha();
    let midpoints = quantile_midpoints(cfg.num_quantiles, cfg.effective_xi());
    let lr = cfg.learning_rate();
    let mut trace = Vec::with_capacity(cfg.iterations * cfg.grad_steps);

    for k in 0..cfg.iterations {
        let targets = heads.clone();
        for step in 0..cfg.grad_steps {
            let idx = sample_indices(dataset.len(), cfg.batch_size, &mut rng)?;
            let batch = Batch::from_transitions(
                idx.iter().map(|&i| &dataset.transitions[i]),
                &dataset.meta.normalizer,
            );
            let value = gradient_step(cfg, &batch, &mut heads, &targets, alpha, &midpoints, lr)
                .map_err(|e| diverged(k, e))?;
            trace.push(LossRecord {
                iteration: k,
                step,
                total: value.total,
                td: value.td,
                conservative: value.conservative,
            });
        }
        on_iteration(k, &heads)?;
    }
    Ok(TrainOutcome { heads, trace })
}

fn diverged(iteration: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(reason) => Error::Diverged { iteration, reason },
        other => other,
    }
}

fn gradient_step<H: QHead>(
    cfg: &TrainerConfig,
    batch: &Batch,
    heads: &mut [H],
    targets: &[H],
    alpha: f64,
    midpoints: &[f64],
    lr: f64,
) -> Result<LossValue> {
    let n = cfg.num_quantiles;
    let gamma = cfg.gamma;
    if cfg.algorithm.is_centralized() {
        let mut joint = match cfg.algorithm {
            Algorithm::MaCcql => ma_ccql_loss(batch, heads, targets, alpha, gamma)?,
            _ => ma_ccqr_loss(batch, heads, targets, alpha, gamma, midpoints)?,
        };
        if let Some(max) = cfg.grad_clip {
            clip_global_norm::<H>(&mut joint.grads, max);
        }
        for (h, g) in heads.iter_mut().zip(&joint.grads) {
            h.apply(g, lr)?;
        }
        return Ok(joint.value);
    }
    let mut total = LossValue::default();
    for agent in 0..heads.len() {
        let head = &heads[agent];
        let target = &targets[agent];
        let mut loss = match cfg.algorithm {
            Algorithm::MaDqn => dqn_loss(batch, agent, head, target, gamma)?,
            Algorithm::MaQrDqn => qr_dqn_loss(batch, agent, head, target, gamma, n)?,
            Algorithm::MaCiql => ma_ciql_loss(batch, agent, head, target, alpha, gamma)?,
            _ => ma_ciqr_loss(batch, agent, head, target, alpha, gamma, midpoints)?,
        };
        if let Some(max) = cfg.grad_clip {
            clip_global_norm::<H>(std::slice::from_mut(&mut loss.grad), max);
        }
        heads[agent].apply(&loss.grad, lr)?;
        total += loss.value;
    }
    Ok(total)
}

/// Mean over `states` of the head's value for `action` (the quantile mean for
/// distributional heads).
pub fn mean_action_value<H: QHead>(
    head: &H,
    states: ArrayView2<f64>,
    action: usize,
    quantiles: usize,
) -> Result<f64> {
    if states.nrows() == 0 {
        return Err(Error::Empty("no states to average over".into()));
    }
    let out = head.forward(states)?;
    let mut sum = 0.0;
    for row in out.rows() {
        let row = row.to_vec();
        sum += action_means(&row, quantiles)
            .nth(action)
            .ok_or_else(|| Error::Config(format!("action {action} out of range")))?;
    }
    Ok(sum / states.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::toy_log;
    use crate::dataset::{BehaviorDescriptor, DatasetMeta};

    fn toy_dataset(n: usize) -> (EnvConfig, Dataset) {
        let (env, log) = toy_log(n);
        let meta = DatasetMeta::new(
            env.clone(),
            BehaviorDescriptor {
                kind: "test".into(),
                config: None,
                episodes_run: 1,
                final_mean_return: 0.0,
            },
            0,
        );
        (env, Dataset { meta, transitions: log })
    }

    fn small(algorithm: Algorithm) -> TrainerConfig {
        TrainerConfig {
            num_quantiles: 3,
            batch_size: 8,
            iterations: 2,
            grad_steps: 3,
            hidden_width: 8,
            ..TrainerConfig::new(algorithm)
        }
    }

    #[test]
    fn zero_iterations_leave_heads_untouched() {
        let (env, ds) = toy_dataset(20);
        let mut cfg = small(Algorithm::MaCiql);
        cfg.iterations = 0;
        let heads = init_heads(&env, &cfg, &mut stream_rng(0, streams::INIT)).unwrap();
        let out = train(&ds, &cfg, &env, heads.clone(), |_, _| Ok(())).unwrap();
        assert_eq!(out.heads, heads);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn every_algorithm_trains_and_is_deterministic() {
        let (env, ds) = toy_dataset(40);
        for algorithm in Algorithm::ALL {
            let cfg = small(algorithm);
            let heads = init_heads(&env, &cfg, &mut stream_rng(1, streams::INIT)).unwrap();
            let mut calls = Vec::new();
            let a = train(&ds, &cfg, &env, heads.clone(), |k, _| {
                calls.push(k);
                Ok(())
            })
            .unwrap();
            assert_eq!(calls, vec![0, 1]);
            assert_eq!(a.trace.len(), 6);
            assert!(a.trace.iter().all(|r| r.total.is_finite()));
            assert_ne!(a.heads, heads, "{algorithm} did not move");
            let b = train(&ds, &cfg, &env, heads, |_, _| Ok(())).unwrap();
            assert_eq!(a.heads, b.heads);
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn baseline_losses_have_no_conservative_part() {
        let (env, ds) = toy_dataset(40);
        for algorithm in [Algorithm::MaDqn, Algorithm::MaQrDqn] {
            let cfg = small(algorithm);
            let heads = init_heads(&env, &cfg, &mut stream_rng(1, streams::INIT)).unwrap();
            let out = train(&ds, &cfg, &env, heads, |_, _| Ok(())).unwrap();
            assert!(out.trace.iter().all(|r| r.conservative == 0.0));
        }
    }

    #[test]
    fn env_mismatch_refused() {
        let (mut env, ds) = toy_dataset(10);
        let cfg = small(Algorithm::MaCiql);
        let heads = init_heads(&env, &cfg, &mut stream_rng(0, streams::INIT)).unwrap();
        env.lambda += 1.0;
        assert!(matches!(
            train(&ds, &cfg, &env, heads, |_, _| Ok(())),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn divergence_reports_iteration() {
        let (env, mut ds) = toy_dataset(10);
        let cfg = small(Algorithm::MaDqn);
        for t in &mut ds.transitions {
            t.reward = f64::NAN;
        }
        let heads = init_heads(&env, &cfg, &mut stream_rng(0, streams::INIT)).unwrap();
        match train(&ds, &cfg, &env, heads, |_, _| Ok(())) {
            Err(Error::Diverged { iteration, .. }) => assert_eq!(iteration, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn clipping_bounds_joint_norm() {
        let mut g = vec![ndarray::Array2::from_elem((2, 2), 3.0), ndarray::Array2::from_elem((1, 1), 4.0)];
        let before = clip_global_norm::<crate::algos::TabularHead>(&mut g, 1.0);
        assert!((before - (36.0f64 + 16.0).sqrt()).abs() < 1e-12);
        let after: f64 = g.iter().flat_map(|a| a.iter()).map(|x| x * x).sum();
        assert!((after.sqrt() - 1.0).abs() < 1e-12);
    }
}
