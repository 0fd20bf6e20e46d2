//! AoI–power trade-off sweep over λ.
//!
//! CSV columns, in order: `lambda, risk_penalty, mean_sum_aoi,
//! mean_sum_power, avg_return, cvar_return, violation_pct`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::algos::{init_heads, train, GreedyPolicy, TrainerConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::rng::{stream_rng, streams};

pub const PARETO_HEADER: [&str; 7] = [
    "lambda",
    "risk_penalty",
    "mean_sum_aoi",
    "mean_sum_power",
    "avg_return",
    "cvar_return",
    "violation_pct",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub risk_penalty: f64,
    pub mean_sum_aoi: f64,
    pub mean_sum_power: f64,
    pub avg_return: f64,
    pub cvar_return: f64,
    pub violation_pct: f64,
}

impl ParetoPoint {
    /// The never-serve limit: every AoI saturated at `a_max`, no power.
    pub fn idle(a_max: u32, num_devices: usize) -> (f64, f64) {
        (f64::from(a_max) * num_devices as f64, 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    /// When set, the risk penalty is coupled as `λ · ratio`.
    pub risk_ratio: Option<f64>,
    pub eval_episodes: usize,
    pub xi_eval: f64,
}

/// Relabels `base` for each λ, retrains from the same initialisation and
/// evaluates. With `csv_path`, rows already present are kept and their λ
/// skipped; the file is rewritten atomically after every new row.
pub fn pareto_sweep(
    base: &Dataset,
    trainer: &TrainerConfig,
    spec: &SweepSpec,
    csv_path: Option<&Path>,
) -> Result<Vec<ParetoPoint>> {
    let mut points = match csv_path {
        Some(p) if p.exists() => read_pareto_csv(p)?,
        _ => Vec::new(),
    };
    if let Some(p) = csv_path {
        write_csv(p, &points)?;
    }
    let mut seen: Vec<u64> = points.iter().map(|p| p.lambda.to_bits()).collect();
    for &lambda in &spec.lambdas {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if seen.contains(&lambda.to_bits()) {
            continue;
        }
        seen.push(lambda.to_bits());
        let mut env = base.meta.env.clone();
        env.lambda = lambda;
        if let Some(ratio) = spec.risk_ratio {
            env.risk_penalty = lambda * ratio;
        }
        let salt = trainer.seed ^ lambda.to_bits().rotate_left(17);
        let data = base.relabel(&env, &mut stream_rng(salt, streams::RELABEL))?;
        let heads = init_heads(&env, trainer, &mut stream_rng(trainer.seed, streams::INIT))?;
        let out = train(&data, trainer, &env, heads, |_, _| Ok(()))?;
        let policy = GreedyPolicy::new(out.heads, trainer.quantiles(), &env)?;
        let report = evaluate(
            &env,
            &policy,
            spec.eval_episodes,
            trainer.gamma,
            spec.xi_eval,
            &mut stream_rng(salt, streams::EVAL),
        )?;
        points.push(ParetoPoint {
            lambda,
            risk_penalty: env.risk_penalty,
            mean_sum_aoi: report.mean_sum_aoi,
            mean_sum_power: report.mean_sum_power,
            avg_return: report.avg_return,
            cvar_return: report.cvar_return,
            violation_pct: report.violation_pct,
        });
        if let Some(p) = csv_path {
            write_csv(p, &points)?;
        }
    }
    Ok(points)
}

fn write_csv(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(PARETO_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

pub fn read_pareto_csv(path: &Path) -> Result<Vec<ParetoPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != PARETO_HEADER {
        return Err(Error::Format(format!(
            "{} does not have the Pareto CSV header",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
