//! Command-line front end: `collect`, `train`, `eval`, `sweep`, `export-traj`.

mod commands;
mod config;

pub use commands::{
    cmd_collect, cmd_eval, cmd_export_traj, cmd_sweep, cmd_train, load_policy_heads,
    CollectSummary, TrainManifest, LOSS_HEADER,
};
pub use config::{
    fraction_path, CollectSettings, EvalSettings, Overrides, PathSettings, RunConfig,
    SweepSettings,
};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::algos::Algorithm;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "cdmarl", version, about = "Offline conservative multi-agent Q-learning on a UAV grid world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the behavior policy online and write the offline dataset(s).
    Collect(CommonArgs),
    /// Train the configured algorithm on the dataset.
    Train(CommonArgs),
    /// Evaluate saved checkpoints and write the report JSON.
    Eval(CommonArgs),
    /// Retrain and evaluate for every λ and write the Pareto CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated λ values replacing `sweep.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Roll out one episode of the saved policy and write it as CSV.
    ExportTraj(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the master seed from the config.
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Base directory for relative paths in the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Replaces `trainer.algorithm`, e.g. MA-CCQR.
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm_override: Option<Algorithm>,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: crate::error::Error| e.to_string())
}

impl CommonArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed_override,
            out_dir: self.out_dir.clone(),
            algorithm: self.algorithm_override,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => cmd_collect(&a.load()?).map(drop),
        Command::Train(a) => cmd_train(&a.load()?).map(drop),
        Command::Eval(a) => {
            let report = cmd_eval(&a.load()?)?;
            println!(
                "average return {:.4}  CVaR_{} return {:.4}  violations {:.2}%",
                report.avg_return, report.xi, report.cvar_return, report.violation_pct
            );
            Ok(())
        }
        Command::Sweep { common, lambdas } => {
            let mut cfg = common.load()?;
            if let Some(l) = lambdas {
                cfg.sweep.lambdas = l;
            }
            cmd_sweep(&cfg).map(drop)
        }
        Command::ExportTraj(a) => cmd_export_traj(&a.load()?).map(drop),
    }
}
