use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// One affine layer. `weights` is `(out, in)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, congruent with the layers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: GradientBundle,
    pub v: GradientBundle,
}

/// Per-parameter gradient arrays, congruent with an [`MlpNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(net: &MlpNet) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    /// Flattened in checkpoint order: per layer, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn squared_norm(&self) -> f64 {
        let w: f64 = self.weights.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>()).sum();
        let b: f64 = self.biases.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>()).sum();
        w + b
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|x| x * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|x| x * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn congruent_with(&self, net: &MlpNet) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && net.layers.iter().zip(&self.weights).all(|(l, w)| l.weights.dim() == w.dim())
            && net.layers.iter().zip(&self.biases).all(|(l, b)| l.bias.dim() == b.dim())
    }
}

/// Activations recorded during a batched forward pass: the input to every layer.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Array2<f64>>,
}

/// Fully connected network with ReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    adam: AdamState,
    adam_config: AdamConfig,
}

impl MlpNet {
    /// Uniform He initialisation: weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.random_range(-bound..bound)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self::from_layers(dims.to_vec(), layers)
    }

    /// Standard `input → 256 → 256 → output` architecture.
    pub fn standard<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Self::new(&[input, super::HIDDEN_WIDTH, super::HIDDEN_WIDTH, output], rng)
    }

    pub fn from_layers(dims: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        validate_dims(&dims)?;
        if layers.len() + 1 != dims.len() {
            return Err(Error::Dimension(format!(
                "{} layers for {} layer dims",
                layers.len(),
                dims.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.dim() != (dims[i + 1], dims[i]) || layer.bias.len() != dims[i + 1] {
                return Err(Error::Dimension(format!("layer {i} does not match dims {dims:?}")));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        let mut net = Self {
            dims,
            layers,
            adam: AdamState {
                step: 0,
                m: GradientBundle {
                    weights: vec![],
                    biases: vec![],
                },
                v: GradientBundle {
                    weights: vec![],
                    biases: vec![],
                },
            },
            adam_config: AdamConfig::default(),
        };
        net.adam.m = GradientBundle::zeros_like(&net);
        net.adam.v = GradientBundle::zeros_like(&net);
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn set_adam_config(&mut self, config: AdamConfig) {
        self.adam_config = config;
    }

    /// Replaces the optimizer state, e.g. when restoring a checkpoint.
    pub fn set_adam_state(&mut self, state: AdamState) -> Result<()> {
        if !state.m.congruent_with(self) || !state.v.congruent_with(self) {
            return Err(Error::Dimension("adam moments do not match network".into()));
        }
        if !state.m.is_finite() || !state.v.is_finite() {
            return Err(Error::NonFinite("adam moments".into()));
        }
        self.adam = state;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened in checkpoint order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Mutable access to the parameter at a flat checkpoint-order index.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[[index / cols, index % cols]];
            }
            index -= nw;
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input length {} != layer_dims[0] = {}",
                input.len(),
                self.input_dim()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass; one input per row.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(inputs)?;
        let last = self.layers.len() - 1;
        let mut act = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            act = affine(act.view(), layer);
            if i < last {
                act.mapv_inplace(relu);
            }
        }
        Ok(act)
    }

    /// Forward pass that keeps what [`MlpNet::backward_batch`] needs.
    pub fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_batch(inputs)?;
        let last = self.layers.len() - 1;
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut act = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = affine(act.view(), layer);
            if i < last {
                next.mapv_inplace(relu);
            }
            tape.push(act);
            act = next;
        }
        Ok((act, Tape { inputs: tape }))
    }

    /// Gradient of `upstream · output` for a single input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient length {} != output length {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input length {} != layer_dims[0] = {}",
                input.len(),
                self.input_dim()
            )));
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let (_, tape) = self.forward_tape(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row view");
        self.backward_batch(&tape, up)
    }

    /// Gradient of `Σ_b upstream[b] · output[b]` with respect to every parameter.
    pub fn backward_batch(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<GradientBundle> {
        let batch = tape.inputs[0].nrows();
        if upstream.dim() != (batch, self.output_dim()) {
            return Err(Error::Dimension(format!(
                "upstream gradient shape {:?} != ({batch}, {})",
                upstream.dim(),
                self.output_dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = upstream.to_owned();
        for i in (0..n).rev() {
            let input = &tape.inputs[i];
            weights.push(delta.t().dot(input));
            biases.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                Zip::from(&mut back).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        weights.reverse();
        biases.reverse();
        Ok(GradientBundle { weights, biases })
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &GradientBundle, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !grads.congruent_with(self) {
            return Err(Error::Dimension("gradient bundle does not match network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to adam_step".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam_config;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (i, layer) in self.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.adam.m.weights[i])
                .and(&mut self.adam.v.weights[i])
                .and(&grads.weights[i])
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut self.adam.m.biases[i])
                .and(&mut self.adam.v.biases[i])
                .and(&grads.biases[i])
                .for_each(update);
        }
        if !self
            .layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "parameters after adam step {}",
                self.adam.step
            )));
        }
        Ok(())
    }

    /// Copies parameters from `other`, leaving this network's optimizer state alone.
    pub fn copy_params_from(&mut self, other: &MlpNet) {
        assert_eq!(self.dims, other.dims, "copy between different architectures");
        self.layers.clone_from(&other.layers);
    }

    fn check_batch(&self, inputs: ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Config(format!(
                "input width {} != layer_dims[0] = {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dims must hold at least two positive entries, got {dims:?}"
        )));
    }
    Ok(())
}

fn affine(x: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = x.dot(&layer.weights.t());
    z += &layer.bias;
    z
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded(dims: &[usize], seed: u64) -> MlpNet {
        MlpNet::new(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn zero_net(dims: &[usize]) -> MlpNet {
        let layers = dims
            .windows(2)
            .map(|p| Layer {
                weights: Array2::zeros((p[1], p[0])),
                bias: Array1::zeros(p[1]),
            })
            .collect();
        MlpNet::from_layers(dims.to_vec(), layers).unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = zero_net(&[3, 5, 5, 4]);
        assert_eq!(net.forward(&[1.0, -7.0, 3.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_layer_and_relu() {
        let id = Layer {
            weights: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![0.0, 0.0],
        };
        let single = MlpNet::from_layers(vec![2, 2], vec![id.clone()]).unwrap();
        assert_eq!(single.forward(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
        // identity hidden layer followed by identity output exposes the ReLU
        let two = MlpNet::from_layers(vec![2, 2, 2], vec![id.clone(), id]).unwrap();
        assert_eq!(two.forward(&[1.0, -2.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let net = seeded(&[3, 4, 4, 2], 11);
        let x = [0.3, -0.7, 1.1];
        let mut act = x.to_vec();
        for (li, layer) in net.layers().iter().enumerate() {
            let mut next = vec![0.0; layer.bias.len()];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (k, a) in act.iter().enumerate() {
                    acc += layer.weights[[o, k]] * a;
                }
                *slot = if li + 1 < net.layers().len() { acc.max(0.0) } else { acc };
            }
            act = next;
        }
        let out = net.forward(&x).unwrap();
        for (a, b) in out.iter().zip(&act) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = seeded(&[3, 4, 2], 0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_bundle() {
        let net = seeded(&[3, 4, 4, 2], 5);
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_net_weight_gradient_is_input() {
        let net = seeded(&[3, 2], 9);
        let x = [0.5, -1.5, 2.0];
        let g = net.backward(&x, &[1.0, 0.0]).unwrap();
        for j in 0..3 {
            assert_eq!(g.weights[0][[0, j]], x[j]);
            assert_eq!(g.weights[0][[1, j]], 0.0);
        }
        assert_eq!(g.biases[0][0], 1.0);
    }

    #[test]
    fn backward_matches_central_differences() {
        for seed in 0..5 {
            let mut net = seeded(&[5, 8, 7, 3], 100 + seed);
            let x = [0.3, -0.2, 0.9, 0.05, -1.2];
            let up = [0.7, -1.3, 0.4];
            let analytic = net.backward(&x, &up).unwrap().to_flat();
            let h = 1e-5;
            let f = |n: &MlpNet| -> f64 {
                n.forward(&x).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum()
            };
            for (i, a) in analytic.iter().enumerate() {
                let orig = *net.param_mut(i);
                *net.param_mut(i) = orig + h;
                let fp = f(&net);
                *net.param_mut(i) = orig - h;
                let fm = f(&net);
                *net.param_mut(i) = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let tol = 1e-4 * a.abs().max(numeric.abs()) + 1e-8;
                assert!((a - numeric).abs() <= tol, "param {i}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn upstream_shape_checked() {
        let net = seeded(&[3, 4, 2], 1);
        assert!(matches!(
            net.backward(&[0.0; 3], &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn adam_first_step_scalar() {
        let mut net = MlpNet::from_layers(
            vec![1, 1],
            vec![Layer {
                weights: array![[0.0]],
                bias: array![0.0],
            }],
        )
        .unwrap();
        let grads = GradientBundle {
            weights: vec![array![[2.0]]],
            biases: vec![array![0.0]],
        };
        net.adam_step(&grads, 0.1).unwrap();
        let w = net.layers()[0].weights[[0, 0]];
        assert!((w - (-0.1 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(net.adam().step, 1);
        // zero gradient leaves the bias where it was
        assert_eq!(net.layers()[0].bias[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient_decays_moments() {
        let mut net = seeded(&[2, 3, 1], 3);
        let mut g = GradientBundle::zeros_like(&net);
        g.weights[0].fill(1.0);
        net.adam_step(&g, 1e-3).unwrap();
        let before = net.params_flat();
        let m_before = net.adam().m.squared_norm();
        net.adam_step(&GradientBundle::zeros_like(&net), 1e-3).unwrap();
        let after = net.params_flat();
        // bias-corrected momentum still moves parameters, so only check the
        // untouched coordinates stay put and moments shrink
        assert!(net.adam().m.squared_norm() < m_before);
        let first_layer_w = net.layers()[0].weights.len();
        assert_eq!(&before[first_layer_w..], &after[first_layer_w..]);
        assert_eq!(net.adam().step, 2);
    }

    #[test]
    fn adam_zero_gradient_from_fresh_state_is_noop() {
        let mut net = seeded(&[2, 3, 1], 3);
        let before = net.params_flat();
        net.adam_step(&GradientBundle::zeros_like(&net), 0.1).unwrap();
        assert_eq!(before, net.params_flat());
    }

    #[test]
    fn adam_is_deterministic() {
        let mut a = seeded(&[4, 6, 2], 21);
        let mut b = seeded(&[4, 6, 2], 21);
        let g = a.backward(&[0.1, 0.2, 0.3, 0.4], &[1.0, -1.0]).unwrap();
        a.adam_step(&g, 1e-3).unwrap();
        b.adam_step(&g, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut net = seeded(&[2, 2], 0);
        let mut g = GradientBundle::zeros_like(&net);
        g.biases[0][1] = f64::NAN;
        assert!(matches!(net.adam_step(&g, 1e-3), Err(Error::NonFinite(_))));
        assert_eq!(net.adam().step, 0);
    }

    #[test]
    fn standard_architecture() {
        let net = MlpNet::standard(14, 55, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.dims(), &[14, 256, 256, 55]);
    }
}
