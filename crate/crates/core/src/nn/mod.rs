//! Dense ReLU networks with hand-derived gradients and Adam.

mod checkpoint;
mod mlp;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::{AdamConfig, AdamState, GradientBundle, Layer, MlpNet, Tape};

use crate::error::{Error, Result};

/// Hidden width used by every value and quantile network.
pub const HIDDEN_WIDTH: usize = 256;

/// `log Σ exp(v_k)` with max subtraction.
pub fn logsumexp_stable(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("logsumexp of an empty vector".into()));
    }
    Ok(logsumexp(values))
}

/// Infallible variant for callers that already guarantee a non-empty row.
pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Softmax of a row, written into `out`.
pub(crate) fn softmax_into(values: &[f64], out: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(values) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
