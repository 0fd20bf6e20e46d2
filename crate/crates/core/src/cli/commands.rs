use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::algos::{init_heads, train, Algorithm, GreedyPolicy, LossRecord, TrainerConfig};
use crate::dataset::{
    self, subsample, train_behavior_policy, BehaviorConfig, BehaviorDescriptor, Dataset, DatasetMeta,
};
use crate::env::{hex_digest, write_trajectory_csv};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, pareto_sweep, record_trajectory, EvalReport, ParetoPoint, SweepSpec,
};
use crate::io_util::atomic_write;
use crate::nn::{load_checkpoint, write_checkpoint, MlpNet};
use crate::rng::{stream_rng, streams};

/// Column order of the per-step loss CSV.
pub const LOSS_HEADER: [&str; 5] = ["iteration", "step", "total", "td", "conservative"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectedDataset {
    pub fraction: f64,
    pub path: PathBuf,
    pub transitions: usize,
    pub content_hash: String,
}

/// JSON sidecar written next to the dataset by `collect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub seed: u64,
    pub env_hash: String,
    pub behavior: BehaviorConfig,
    pub episodes_run: usize,
    pub log_len: usize,
    pub final_mean_return: f64,
    /// Undiscounted return of every behavior episode, in order.
    pub episode_returns: Vec<f64>,
    pub datasets: Vec<CollectedDataset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub file: String,
    pub sha256: String,
}

/// Run manifest written by `train`. Contains no timestamps so reruns with
/// the same config produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub algorithm: Algorithm,
    pub trainer: TrainerConfig,
    pub env_hash: String,
    pub dataset_hash: String,
    pub dataset_len: usize,
    pub quantiles: usize,
    pub checkpoints: Vec<CheckpointEntry>,
    pub loss_csv: String,
    /// Mean total loss of each outer iteration.
    pub iteration_losses: Vec<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex_digest(&Sha256::digest(bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T], path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))
}

fn summary_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

/// Loads the dataset and refuses it unless it was collected under `cfg.env`.
fn load_matching_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.training_dataset_path();
    let data = dataset::load(&path)?;
    if data.meta.env_hash != cfg.env.hash() {
        return Err(Error::Config(format!(
            "dataset {} was collected under a different environment config",
            path.display()
        )));
    }
    data.validate()?;
    Ok(data)
}

pub fn cmd_collect(cfg: &RunConfig) -> Result<CollectSummary> {
    let mut rng = stream_rng(cfg.seed, streams::BEHAVIOR);
    let outcome = train_behavior_policy(&cfg.env, &cfg.behavior, &mut rng)?;
    let final_mean_return = outcome.tail_mean(100);
    let descriptor = BehaviorDescriptor {
        kind: "independent-dqn".into(),
        config: Some(cfg.behavior.clone()),
        episodes_run: outcome.episodes_run(),
        final_mean_return,
    };
    let meta = DatasetMeta::new(cfg.env.clone(), descriptor, cfg.seed);
    let mut datasets = Vec::new();
    for &fraction in &cfg.collect.fractions {
        let mut sub_rng = stream_rng(cfg.seed ^ fraction.to_bits(), streams::SUBSAMPLE);
        let data = subsample(&outcome.log, fraction, meta.clone(), &mut sub_rng)?;
        let path = cfg.dataset_path_for(fraction);
        dataset::save(&data, &path)?;
        datasets.push(CollectedDataset {
            fraction,
            path,
            transitions: data.len(),
            content_hash: data.content_hash(),
        });
    }
    let summary = CollectSummary {
        seed: cfg.seed,
        env_hash: cfg.env.hash(),
        behavior: cfg.behavior.clone(),
        episodes_run: outcome.episodes_run(),
        log_len: outcome.log.len(),
        final_mean_return,
        episode_returns: outcome.episode_returns,
        datasets,
    };
    write_json(&summary_path(&cfg.paths.dataset), &summary)?;
    Ok(summary)
}

#[derive(Serialize)]
struct CurveRow {
    iteration: usize,
    avg_return: f64,
    cvar_return: f64,
    violation_pct: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainManifest> {
    let data = load_matching_dataset(cfg)?;
    let trainer = &cfg.trainer;
    let quantiles = trainer.quantiles();
    let heads = init_heads(&cfg.env, trainer, &mut stream_rng(cfg.seed, streams::INIT))?;
    let mut curve = Vec::new();
    let mut eval_rng = stream_rng(cfg.seed, streams::EVAL);
    let outcome = train(&data, trainer, &cfg.env, heads, |k, heads: &[MlpNet]| {
        if cfg.eval.curve_episodes == 0 {
            return Ok(());
        }
        let policy = GreedyPolicy::new(heads.to_vec(), quantiles, &cfg.env)?;
        let r = evaluate(
            &cfg.env,
            &policy,
            cfg.eval.curve_episodes,
            trainer.gamma,
            cfg.eval.xi,
            &mut eval_rng,
        )?;
        curve.push(CurveRow {
            iteration: k,
            avg_return: r.avg_return,
            cvar_return: r.cvar_return,
            violation_pct: r.violation_pct,
        });
        Ok(())
    })?;

    let dir = &cfg.paths.checkpoint_dir;
    let mut checkpoints = Vec::new();
    for (i, head) in outcome.heads.iter().enumerate() {
        let file = format!("agent_{i}.ckpt");
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, head, quantiles as u32, true)
            .map_err(|e| Error::io(dir.join(&file), e))?;
        atomic_write(&dir.join(&file), &bytes)?;
        checkpoints.push(CheckpointEntry {
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let loss_path = dir.join("losses.csv");
    atomic_write(&loss_path, &csv_bytes(&LOSS_HEADER, &outcome.trace, &loss_path)?)?;
    if cfg.eval.curve_episodes > 0 {
        let path = cfg.paths.report_dir.join("learning_curve.csv");
        let header = ["iteration", "avg_return", "cvar_return", "violation_pct"];
        atomic_write(&path, &csv_bytes(&header, &curve, &path)?)?;
    }
    let manifest = TrainManifest {
        algorithm: trainer.algorithm,
        trainer: trainer.clone(),
        env_hash: cfg.env.hash(),
        dataset_hash: data.content_hash(),
        dataset_len: data.len(),
        quantiles,
        checkpoints,
        loss_csv: "losses.csv".into(),
        iteration_losses: iteration_means(&outcome.trace, trainer.iterations),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn iteration_means(trace: &[LossRecord], iterations: usize) -> Vec<f64> {
    let mut sums = vec![(0.0, 0usize); iterations];
    for r in trace {
        sums[r.iteration].0 += r.total;
        sums[r.iteration].1 += 1;
    }
    sums.into_iter()
        .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

/// Loads `agent_{i}.ckpt` for every UAV and checks they share one layout.
pub fn load_policy_heads(cfg: &RunConfig) -> Result<(Vec<MlpNet>, usize)> {
    let mut heads = Vec::with_capacity(cfg.env.num_uavs);
    let mut quantiles = None;
    for i in 0..cfg.env.num_uavs {
        let ck = load_checkpoint(&cfg.paths.checkpoint_dir.join(format!("agent_{i}.ckpt")))?;
        let q = ck.quantiles as usize;
        if *quantiles.get_or_insert(q) != q {
            return Err(Error::Dimension("checkpoints disagree on quantile count".into()));
        }
        heads.push(ck.net);
    }
    Ok((heads, quantiles.unwrap_or(1)))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let (heads, quantiles) = load_policy_heads(cfg)?;
    let policy = GreedyPolicy::new(heads, quantiles, &cfg.env)?;
    let report = evaluate(
        &cfg.env,
        &policy,
        cfg.eval.episodes,
        cfg.trainer.gamma,
        cfg.eval.xi,
        &mut stream_rng(cfg.seed, streams::EVAL),
    )?;
    write_json(&cfg.paths.report_dir.join("eval_report.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct IdlePoint {
    mean_sum_aoi: f64,
    mean_sum_power: f64,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<ParetoPoint>> {
    let data = load_matching_dataset(cfg)?;
    let spec = SweepSpec {
        lambdas: cfg.sweep.lambdas.clone(),
        risk_ratio: cfg.sweep.risk_ratio,
        eval_episodes: cfg.eval.episodes,
        xi_eval: cfg.eval.xi,
    };
    let csv = cfg.paths.report_dir.join("pareto.csv");
    let points = pareto_sweep(&data, &cfg.trainer, &spec, Some(&csv))?;
    let (aoi, power) = ParetoPoint::idle(cfg.env.a_max, cfg.env.num_devices);
    write_json(
        &cfg.paths.report_dir.join("pareto_idle.json"),
        &IdlePoint {
            mean_sum_aoi: aoi,
            mean_sum_power: power,
        },
    )?;
    Ok(points)
}

pub fn cmd_export_traj(cfg: &RunConfig) -> Result<PathBuf> {
    let (heads, quantiles) = load_policy_heads(cfg)?;
    let policy = GreedyPolicy::new(heads, quantiles, &cfg.env)?;
    let steps = record_trajectory(&cfg.env, &policy, &mut stream_rng(cfg.seed, streams::EVAL))?;
    let mut bytes = Vec::new();
    write_trajectory_csv(&mut bytes, &steps)?;
    let path = cfg.paths.report_dir.join("trajectory.csv");
    atomic_write(&path, &bytes)?;
    Ok(path)
}
