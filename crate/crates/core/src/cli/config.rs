use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algos::{Algorithm, TrainerConfig};
use crate::dataset::BehaviorConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};

/// The single JSON document every subcommand reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for collection, initialisation, batches and evaluation.
    /// `env.seed` only fixes the device layout.
    pub seed: u64,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    #[serde(default)]
    pub collect: CollectSettings,
    pub paths: PathSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSettings {
    /// Fractions of the behavior log to keep, one dataset per entry.
    pub fractions: Vec<f64>,
}

impl Default for CollectSettings {
    fn default() -> Self {
        Self { fractions: vec![1.0] }
    }
}

/// Relative paths are resolved against `--out-dir` when given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSettings {
    pub dataset: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub episodes: usize,
    pub xi: f64,
    /// Episodes evaluated after every training iteration for the learning
    /// curve; 0 disables it.
    pub curve_episodes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 100,
            xi: 0.15,
            curve_episodes: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub lambdas: Vec<f64>,
    /// Couples the risk penalty to λ as `λ · risk_ratio`.
    pub risk_ratio: Option<f64>,
}

/// Command-line adjustments applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.env.device_positions.is_empty() {
            cfg.env.place_devices();
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(a) = o.algorithm {
            self.trainer.algorithm = a;
        }
        if let Some(dir) = &o.out_dir {
            for p in [
                &mut self.paths.dataset,
                &mut self.paths.checkpoint_dir,
                &mut self.paths.report_dir,
            ] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        self.trainer.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.trainer.validate()?;
        self.behavior.validate()?;
        if self.collect.fractions.is_empty() {
            return Err(Error::Config("collect.fractions is empty".into()));
        }
        if let Some(f) = self.collect.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("collect fraction {f} outside (0, 1]")));
        }
        if !(self.eval.xi > 0.0 && self.eval.xi <= 1.0) {
            return Err(Error::Config(format!("eval.xi must lie in (0, 1], got {}", self.eval.xi)));
        }
        Ok(())
    }

    /// Dataset path for one collected fraction. A single fraction writes to
    /// `paths.dataset`; several get `_<fraction>` before the extension.
    pub fn dataset_path_for(&self, fraction: f64) -> PathBuf {
        if self.collect.fractions.len() <= 1 {
            return self.paths.dataset.clone();
        }
        fraction_path(&self.paths.dataset, fraction)
    }

    /// Dataset read by `train` and `sweep`: the first listed fraction.
    pub fn training_dataset_path(&self) -> PathBuf {
        self.dataset_path_for(self.collect.fractions.first().copied().unwrap_or(1.0))
    }
}

pub fn fraction_path(base: &Path, fraction: f64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{fraction}.{ext}"),
        None => format!("{stem}_{fraction}"),
    };
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        let env = serde_json::to_value(EnvConfig::standard(1)).unwrap();
        serde_json::json!({
            "seed": 5,
            "env": env,
            "trainer": {"algorithm": "MA-CIQL"},
            "paths": {"dataset": "d.bin", "checkpoint_dir": "ck", "report_dir": "rep"}
        })
        .to_string()
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(&sample()).unwrap();
        assert_eq!(cfg.eval.episodes, 100);
        assert_eq!(cfg.eval.xi, 0.15);
        assert_eq!(cfg.collect.fractions, vec![1.0]);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&sample()).unwrap();
        v["trainer"]["alpah"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&sample()).unwrap();
        v["extra"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::from_json(&sample()).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            out_dir: Some("/tmp/x".into()),
            algorithm: Some(Algorithm::MaCcqr),
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trainer.seed, 9);
        assert_eq!(cfg.trainer.algorithm, Algorithm::MaCcqr);
        assert_eq!(cfg.paths.dataset, PathBuf::from("/tmp/x/d.bin"));
    }

    #[test]
    fn fraction_paths() {
        assert_eq!(fraction_path(Path::new("a/d.bin"), 0.16), PathBuf::from("a/d_0.16.bin"));
        assert_eq!(fraction_path(Path::new("d"), 0.06), PathBuf::from("d_0.06"));
    }

    #[test]
    fn training_reads_first_fraction() {
        let mut cfg = RunConfig::from_json(&sample()).unwrap();
        assert_eq!(cfg.training_dataset_path(), PathBuf::from("d.bin"));
        cfg.collect.fractions = vec![0.06, 0.16];
        assert_eq!(cfg.training_dataset_path(), PathBuf::from("d_0.06.bin"));
    }
}
