use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "MA-DQN")]
    MaDqn,
    #[serde(rename = "MA-QR-DQN")]
    MaQrDqn,
    #[serde(rename = "MA-CIQL")]
    MaCiql,
    #[serde(rename = "MA-CIQR")]
    MaCiqr,
    #[serde(rename = "MA-CCQL")]
    MaCcql,
    #[serde(rename = "MA-CCQR")]
    MaCcqr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::MaDqn,
        Algorithm::MaQrDqn,
        Algorithm::MaCiql,
        Algorithm::MaCiqr,
        Algorithm::MaCcql,
        Algorithm::MaCcqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::MaDqn => "MA-DQN",
            Algorithm::MaQrDqn => "MA-QR-DQN",
            Algorithm::MaCiql => "MA-CIQL",
            Algorithm::MaCiqr => "MA-CIQR",
            Algorithm::MaCcql => "MA-CCQL",
            Algorithm::MaCcqr => "MA-CCQR",
        }
    }

    /// Quantile heads rather than value heads.
    pub fn is_distributional(self) -> bool {
        matches!(self, Algorithm::MaQrDqn | Algorithm::MaCiqr | Algorithm::MaCcqr)
    }

    /// One joint loss over the sum of agent heads.
    pub fn is_centralized(self) -> bool {
        matches!(self, Algorithm::MaCcql | Algorithm::MaCcqr)
    }

    /// Baselines train without the conservative penalty and with ξ = 1.
    pub fn is_baseline(self) -> bool {
        matches!(self, Algorithm::MaDqn | Algorithm::MaQrDqn)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm {s:?}; expected one of {}",
                    Algorithm::ALL.map(Algorithm::name).join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// CVaR level of the quantile targets; 1 is risk neutral.
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_quantiles")]
    pub num_quantiles: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Defaults to 1e-4 for value heads and 1e-5 for quantile heads.
    #[serde(default)]
    pub lr: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Outer iterations K; targets are refreshed at the start of each.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Gradient steps G per outer iteration.
    #[serde(default = "default_grad_steps")]
    pub grad_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Global-norm clip applied to each gradient step; `None` disables it.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_xi() -> f64 {
    1.0
}
fn default_quantiles() -> usize {
    8
}
fn default_gamma() -> f64 {
    0.99
}
fn default_batch() -> usize {
    128
}
fn default_iterations() -> usize {
    150
}
fn default_grad_steps() -> usize {
    500
}
fn default_clip() -> Option<f64> {
    Some(10.0)
}
fn default_hidden() -> usize {
    crate::nn::HIDDEN_WIDTH
}

impl TrainerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            alpha: default_alpha(),
            xi: default_xi(),
            num_quantiles: default_quantiles(),
            gamma: default_gamma(),
            lr: None,
            batch_size: default_batch(),
            iterations: default_iterations(),
            grad_steps: default_grad_steps(),
            seed: 0,
            grad_clip: default_clip(),
            hidden_width: default_hidden(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::Config(format!("xi must lie in (0, 1], got {}", self.xi)));
        }
        if self.num_quantiles == 0 {
            return Err(Error::Config("num_quantiles must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("lr must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 || self.hidden_width == 0 {
            return Err(Error::Config("batch_size and hidden_width must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }

    pub fn effective_alpha(&self) -> f64 {
        if self.algorithm.is_baseline() {
            0.0
        } else {
            self.alpha
        }
    }

    pub fn effective_xi(&self) -> f64 {
        if self.algorithm.is_baseline() {
            1.0
        } else {
            self.xi
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(if self.algorithm.is_distributional() { 1e-5 } else { 1e-4 })
    }

    /// Outputs per action: N for quantile heads, 1 otherwise.
    pub fn quantiles(&self) -> usize {
        if self.algorithm.is_distributional() {
            self.num_quantiles
        } else {
            1
        }
    }
}
