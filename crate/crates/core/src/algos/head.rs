use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{GradientBundle, MlpNet, Tape};

/// A trainable map from a batch of states to per-action outputs.
///
/// Implemented by [`MlpNet`] (Adam updates) and by [`TabularHead`]
/// (plain gradient descent, one parameter per state-output pair).
pub trait QHead: Clone {
    type Grad: Clone;
    type Tape;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>>;
    fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Self::Tape)>;
    /// Gradient of `Σ_b upstream[b] · output[b]`.
    fn backward(&self, tape: &Self::Tape, upstream: ArrayView2<f64>) -> Result<Self::Grad>;
    /// One optimizer step.
    fn apply(&mut self, grad: &Self::Grad, lr: f64) -> Result<()>;
    fn grad_squared_norm(grad: &Self::Grad) -> f64;
    fn grad_scale(grad: &mut Self::Grad, factor: f64);
}

impl QHead for MlpNet {
    type Grad = GradientBundle;
    type Tape = Tape;

    fn input_dim(&self) -> usize {
        MlpNet::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        MlpNet::output_dim(self)
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward_batch(inputs)
    }

    fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        MlpNet::forward_tape(self, inputs)
    }

    fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<GradientBundle> {
        self.backward_batch(tape, upstream)
    }

    fn apply(&mut self, grad: &GradientBundle, lr: f64) -> Result<()> {
        self.adam_step(grad, lr)
    }

    fn grad_squared_norm(grad: &GradientBundle) -> f64 {
        grad.squared_norm()
    }

    fn grad_scale(grad: &mut GradientBundle, factor: f64) {
        grad.scale(factor)
    }
}

/// Exact lookup table over an enumerated set of state vectors.
#[derive(Clone, Debug)]
pub struct TabularHead {
    index: Arc<HashMap<Vec<u64>, usize>>,
    input_dim: usize,
    pub table: Array2<f64>,
}

impl TabularHead {
    /// Zero-initialised table with one row per distinct state in `states`.
    pub fn new(states: &[Vec<f64>], outputs: usize) -> Result<Self> {
        let input_dim = states
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Empty("tabular head needs at least one state".into()))?;
        let mut index = HashMap::new();
        for s in states {
            if s.len() != input_dim {
                return Err(Error::Dimension("ragged state list".into()));
            }
            let next = index.len();
            index.entry(key(s)).or_insert(next);
        }
        let rows = index.len();
        Ok(Self {
            index: Arc::new(index),
            input_dim,
            table: Array2::zeros((rows, outputs)),
        })
    }

    pub fn row_of(&self, state: &[f64]) -> Option<usize> {
        self.index.get(&key(state)).copied()
    }

    fn rows(&self, inputs: ArrayView2<f64>) -> Result<Vec<usize>> {
        if inputs.ncols() != self.input_dim {
            return Err(Error::Config(format!(
                "input width {} != table state width {}",
                inputs.ncols(),
                self.input_dim
            )));
        }
        inputs
            .rows()
            .into_iter()
            .map(|r| {
                let v: Vec<f64> = r.to_vec();
                self.row_of(&v)
                    .ok_or_else(|| Error::Config(format!("state {v:?} not in table")))
            })
            .collect()
    }
}

fn key(state: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must share a row
    state.iter().map(|x| (x + 0.0).to_bits()).collect()
}

impl QHead for TabularHead {
    type Grad = Array2<f64>;
    type Tape = Vec<usize>;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.table.ncols()
    }

    fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_tape(inputs)?.0)
    }

    fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
        let rows = self.rows(inputs)?;
        let out = self.table.select(ndarray::Axis(0), &rows);
        Ok((out, rows))
    }

    fn backward(&self, rows: &Vec<usize>, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        if upstream.dim() != (rows.len(), self.output_dim()) {
            return Err(Error::Dimension("upstream does not match batch".into()));
        }
        let mut grad = Array2::zeros(self.table.raw_dim());
        for (&r, up) in rows.iter().zip(upstream.rows()) {
            let mut g = grad.row_mut(r);
            g += &up;
        }
        Ok(grad)
    }

    fn apply(&mut self, grad: &Array2<f64>, lr: f64) -> Result<()> {
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("tabular gradient".into()));
        }
        self.table.scaled_add(-lr, grad);
        Ok(())
    }

    fn grad_squared_norm(grad: &Array2<f64>) -> f64 {
        grad.iter().map(|g| g * g).sum()
    }

    fn grad_scale(grad: &mut Array2<f64>, factor: f64) {
        grad.mapv_inplace(|g| g * factor);
    }
}
