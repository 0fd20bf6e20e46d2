//! Loss primitives and the six training losses.
//!
//! Every loss returns its value together with the gradient of that value with
//! respect to the online head(s). Target heads are only read, never
//! differentiated. Distributional heads lay out `|A|·N` outputs action-major:
//! output `a·N + j` is the `j`-th quantile of action `a`.

use ndarray::{Array2, ArrayView1};

use super::head::QHead;
use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::nn::{logsumexp, softmax_into};

/// Loss value split into its temporal-difference and conservative parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub td: f64,
    pub conservative: f64,
}

impl std::ops::AddAssign for LossValue {
    fn add_assign(&mut self, rhs: Self) {
        self.total += rhs.total;
        self.td += rhs.td;
        self.conservative += rhs.conservative;
    }
}

#[derive(Clone, Debug)]
pub struct AgentLoss<G> {
    pub value: LossValue,
    pub grad: G,
}

#[derive(Clone, Debug)]
pub struct JointLoss<G> {
    pub value: LossValue,
    pub grads: Vec<G>,
}

/// Quantile levels `τ̂_j = (τ_{j−1} + τ_j)/2` with `τ_j = ξ·j/N`.
pub fn quantile_midpoints(n: usize, xi: f64) -> Vec<f64> {
    (1..=n)
        .map(|j| {
            let lo = xi * (j - 1) as f64 / n as f64;
            let hi = xi * j as f64 / n as f64;
            0.5 * (lo + hi)
        })
        .collect()
}

/// Asymmetric Huber loss with threshold 1.
pub fn quantile_huber(u: f64, tau: f64) -> f64 {
    let weight = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
    let huber = if u.abs() <= 1.0 { 0.5 * u * u } else { u.abs() - 0.5 };
    weight * huber
}

/// Derivative of [`quantile_huber`] in `u`.
pub fn quantile_huber_grad(u: f64, tau: f64) -> f64 {
    let weight = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
    let slope = if u.abs() <= 1.0 { u } else { u.signum() };
    weight * slope
}

/// `logsumexp(row) − row[taken]`.
pub fn cql_penalty(row: &[f64], taken: usize) -> Result<f64> {
    if row.is_empty() {
        return Err(Error::Empty("cql penalty of an empty row".into()));
    }
    let q = row.get(taken).ok_or_else(|| {
        Error::Config(format!("action {taken} out of range for {} actions", row.len()))
    })?;
    Ok(logsumexp(row) - q)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Mean of the `quantiles` outputs belonging to each action.
pub fn action_means(outputs: &[f64], quantiles: usize) -> impl Iterator<Item = f64> + '_ {
    outputs
        .chunks_exact(quantiles)
        .map(move |c| c.iter().sum::<f64>() / quantiles as f64)
}

/// Greedy action for one state: argmax of the Q-row, or of the quantile means
/// when `quantiles > 1`.
pub fn greedy_action(outputs: &[f64], quantiles: usize) -> usize {
    if quantiles <= 1 {
        argmax(outputs.iter().copied())
    } else {
        argmax(action_means(outputs, quantiles))
    }
}

/// `Δ_{jj'} = r + γ·θ̂_{j'}(s', a') − θ_j(s, a)` where `a'` maximises the
/// target quantile mean. `online_taken` holds the N online quantiles of the
/// taken action; `target_row` all `|A|·N` target outputs at `s'`.
pub fn quantile_td_matrix(
    reward: f64,
    gamma: f64,
    online_taken: &[f64],
    target_row: &[f64],
) -> Array2<f64> {
    let n = online_taken.len();
    let next = greedy_action(target_row, n);
    let target = &target_row[next * n..(next + 1) * n];
    Array2::from_shape_fn((n, n), |(j, jp)| reward + gamma * target[jp] - online_taken[j])
}

/// `r + γ·Σ_i max_a Q̂^i(s', a)`.
pub fn vdn_target(reward: f64, gamma: f64, target_rows: &[&[f64]]) -> f64 {
    let sum: f64 = target_rows
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    reward + gamma * sum
}

fn check_finite(value: LossValue, what: &str) -> Result<LossValue> {
    if value.total.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} loss = {}", value.total)))
    }
}

fn row(m: &Array2<f64>, b: usize) -> &[f64] {
    m.row(b).to_slice().expect("standard layout")
}

/// Plain offline DQN loss `½·mean δ²` for one agent.
pub fn dqn_loss<H: QHead>(
    batch: &Batch,
    agent: usize,
    online: &H,
    target: &H,
    gamma: f64,
) -> Result<AgentLoss<H::Grad>> {
    let bsz = batch.len() as f64;
    let (q, tape) = online.forward_tape(batch.states.view())?;
    let q_next = target.forward(batch.next_states.view())?;
    let mut upstream = Array2::zeros(q.raw_dim());
    let mut sq = 0.0;
    for b in 0..batch.len() {
        let a = batch.actions[b][agent];
        let best = row(&q_next, b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let delta = batch.rewards[b] + gamma * best - q[[b, a]];
        sq += delta * delta;
        upstream[[b, a]] = -delta / bsz;
    }
    let td = 0.5 * (sq / bsz);
    let value = check_finite(
        LossValue {
            total: td,
            td,
            conservative: 0.0,
        },
        "DQN",
    )?;
    let grad = online.backward(&tape, upstream.view())?;
    Ok(AgentLoss { value, grad })
}

/// Independent conservative Q-learning loss for one agent.
pub fn ma_ciql_loss<H: QHead>(
    batch: &Batch,
    agent: usize,
    online: &H,
    target: &H,
    alpha: f64,
    gamma: f64,
) -> Result<AgentLoss<H::Grad>> {
    let bsz = batch.len() as f64;
    let (q, tape) = online.forward_tape(batch.states.view())?;
    let q_next = target.forward(batch.next_states.view())?;
    let actions = q.ncols();
    let mut upstream = Array2::zeros(q.raw_dim());
    let mut probs = vec![0.0; actions];
    let (mut sq, mut pen) = (0.0, 0.0);
    for b in 0..batch.len() {
        let a = batch.actions[b][agent];
        let q_row = row(&q, b);
        let y = vdn_target(batch.rewards[b], gamma, &[row(&q_next, b)]);
        let delta = y - q_row[a];
        sq += delta * delta;
        pen += cql_penalty(q_row, a)?;
        softmax_into(q_row, &mut probs);
        let mut up = upstream.row_mut(b);
        for (k, p) in probs.iter().enumerate() {
            up[k] = alpha * p / bsz;
        }
        up[a] += -delta / bsz - alpha / bsz;
    }
    let td = 0.5 * (sq / bsz);
    let conservative = alpha * (pen / bsz);
    let value = check_finite(
        LossValue {
            total: td + conservative,
            td,
            conservative,
        },
        "MA-CIQL",
    )?;
    let grad = online.backward(&tape, upstream.view())?;
    Ok(AgentLoss { value, grad })
}

/// Centralised conservative Q-learning over the additive decomposition.
pub fn ma_ccql_loss<H: QHead>(
    batch: &Batch,
    online: &[H],
    targets: &[H],
    alpha: f64,
    gamma: f64,
) -> Result<JointLoss<H::Grad>> {
    check_agents(online, targets, batch)?;
    let bsz = batch.len() as f64;
    let mut outs = Vec::with_capacity(online.len());
    let mut tapes = Vec::with_capacity(online.len());
    for head in online {
        let (q, tape) = head.forward_tape(batch.states.view())?;
        outs.push(q);
        tapes.push(tape);
    }
    let next = targets
        .iter()
        .map(|t| t.forward(batch.next_states.view()))
        .collect::<Result<Vec<_>>>()?;
    let mut upstreams: Vec<Array2<f64>> = outs.iter().map(|q| Array2::zeros(q.raw_dim())).collect();
    let (mut sq, mut pen) = (0.0, 0.0);
    for b in 0..batch.len() {
        let rows: Vec<&[f64]> = next.iter().map(|m| row(m, b)).collect();
        let y = vdn_target(batch.rewards[b], gamma, &rows);
        let q_sum: f64 = outs
            .iter()
            .enumerate()
            .map(|(i, q)| q[[b, batch.actions[b][i]]])
            .sum();
        let delta = y - q_sum;
        sq += delta * delta;
        for (i, q) in outs.iter().enumerate() {
            let a = batch.actions[b][i];
            let q_row = row(q, b);
            pen += cql_penalty(q_row, a)?;
            let mut probs = vec![0.0; q_row.len()];
            softmax_into(q_row, &mut probs);
            let mut up = upstreams[i].row_mut(b);
            for (k, p) in probs.iter().enumerate() {
                up[k] = alpha * p / bsz;
            }
            up[a] += -delta / bsz - alpha / bsz;
        }
    }
    let td = 0.5 * (sq / bsz);
    let conservative = alpha * (pen / bsz);
    let value = check_finite(
        LossValue {
            total: td + conservative,
            td,
            conservative,
        },
        "MA-CCQL",
    )?;
    let grads = online
        .iter()
        .zip(&tapes)
        .zip(&upstreams)
        .map(|((h, t), u)| h.backward(t, u.view()))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointLoss { value, grads })
}

/// Quantile-regression DQN loss (risk neutral, no penalty) for one agent,
/// scaled by `1/(2N²)`.
pub fn qr_dqn_loss<H: QHead>(
    batch: &Batch,
    agent: usize,
    online: &H,
    target: &H,
    gamma: f64,
    quantiles: usize,
) -> Result<AgentLoss<H::Grad>> {
    let n = quantiles;
    let taus: Vec<f64> = (0..n).map(|j| (2 * j + 1) as f64 / (2 * n) as f64).collect();
    let bsz = batch.len() as f64;
    let norm = 2.0 * (n * n) as f64;
    let (theta, tape) = online.forward_tape(batch.states.view())?;
    let theta_next = target.forward(batch.next_states.view())?;
    let mut upstream = Array2::zeros(theta.raw_dim());
    let mut total = 0.0;
    for b in 0..batch.len() {
        let a = batch.actions[b][agent];
        let next_row = row(&theta_next, b);
        let best = argmax(next_row.chunks_exact(n).map(|c| c.iter().sum::<f64>() / n as f64));
        let mut item = 0.0;
        for j in 0..n {
            let current = theta[[b, a * n + j]];
            let mut g = 0.0;
            for jp in 0..n {
                let u = batch.rewards[b] + gamma * next_row[best * n + jp] - current;
                item += quantile_huber(u, taus[j]);
                g += quantile_huber_grad(u, taus[j]);
            }
            upstream[[b, a * n + j]] = -g / (norm * bsz);
        }
        total += item;
    }
    let td = total / norm / bsz;
    let value = check_finite(
        LossValue {
            total: td,
            td,
            conservative: 0.0,
        },
        "QR-DQN",
    )?;
    let grad = online.backward(&tape, upstream.view())?;
    Ok(AgentLoss { value, grad })
}

/// Conservative penalty over quantile heads, accumulated into `upstream`:
/// returns `Σ_j [logsumexp_a θ_j(s,a) − θ_j(s,a_taken)]` for one state.
fn quantile_penalty(
    outputs: ArrayView1<f64>,
    taken: usize,
    n: usize,
    scale: f64,
    upstream: &mut ndarray::ArrayViewMut1<f64>,
    scratch: &mut Vec<f64>,
    probs: &mut Vec<f64>,
) -> f64 {
    let actions = outputs.len() / n;
    scratch.resize(actions, 0.0);
    probs.resize(actions, 0.0);
    let mut sum = 0.0;
    for j in 0..n {
        for a in 0..actions {
            scratch[a] = outputs[a * n + j];
        }
        sum += logsumexp(scratch) - scratch[taken];
        softmax_into(scratch, probs);
        for a in 0..actions {
            upstream[a * n + j] += scale * probs[a];
        }
        upstream[taken * n + j] -= scale;
    }
    sum
}

/// Independent conservative quantile-regression loss for one agent.
pub fn ma_ciqr_loss<H: QHead>(
    batch: &Batch,
    agent: usize,
    online: &H,
    target: &H,
    alpha: f64,
    gamma: f64,
    midpoints: &[f64],
) -> Result<AgentLoss<H::Grad>> {
    let n = midpoints.len();
    let bsz = batch.len() as f64;
    let norm = 2.0 * (n * n) as f64;
    let (theta, tape) = online.forward_tape(batch.states.view())?;
    check_layout(theta.ncols(), n)?;
    let theta_next = target.forward(batch.next_states.view())?;
    let mut upstream = Array2::zeros(theta.raw_dim());
    let (mut td_sum, mut pen) = (0.0, 0.0);
    let (mut scratch, mut probs) = (Vec::new(), Vec::new());
    for b in 0..batch.len() {
        let a = batch.actions[b][agent];
        let taken = &row(&theta, b)[a * n..(a + 1) * n];
        let delta = quantile_td_matrix(batch.rewards[b], gamma, taken, row(&theta_next, b));
        let mut item = 0.0;
        for j in 0..n {
            let mut g = 0.0;
            for jp in 0..n {
                item += quantile_huber(delta[[j, jp]], midpoints[j]);
                g += quantile_huber_grad(delta[[j, jp]], midpoints[j]);
            }
            upstream[[b, a * n + j]] = -g / (norm * bsz);
        }
        td_sum += item;
        let mut up = upstream.row_mut(b);
        let scale = alpha / (bsz * n as f64);
        pen += quantile_penalty(theta.row(b), a, n, scale, &mut up, &mut scratch, &mut probs)
            / n as f64;
    }
    let td = td_sum / norm / bsz;
    let conservative = alpha * (pen / bsz);
    let value = check_finite(
        LossValue {
            total: td + conservative,
            td,
            conservative,
        },
        "MA-CIQR",
    )?;
    let grad = online.backward(&tape, upstream.view())?;
    Ok(AgentLoss { value, grad })
}

/// Centralised conservative quantile regression over decomposed quantiles.
pub fn ma_ccqr_loss<H: QHead>(
    batch: &Batch,
    online: &[H],
    targets: &[H],
    alpha: f64,
    gamma: f64,
    midpoints: &[f64],
) -> Result<JointLoss<H::Grad>> {
    check_agents(online, targets, batch)?;
    let n = midpoints.len();
    let bsz = batch.len() as f64;
    let norm = 2.0 * (n * n) as f64;
    let mut outs = Vec::with_capacity(online.len());
    let mut tapes = Vec::with_capacity(online.len());
    for head in online {
        let (theta, tape) = head.forward_tape(batch.states.view())?;
        check_layout(theta.ncols(), n)?;
        outs.push(theta);
        tapes.push(tape);
    }
    let next = targets
        .iter()
        .map(|t| t.forward(batch.next_states.view()))
        .collect::<Result<Vec<_>>>()?;
    let mut upstreams: Vec<Array2<f64>> = outs.iter().map(|q| Array2::zeros(q.raw_dim())).collect();
    let (mut td_sum, mut pen) = (0.0, 0.0);
    let (mut scratch, mut probs) = (Vec::new(), Vec::new());
    let mut current = vec![0.0; n];
    let mut target_sum = vec![0.0; n];
    for b in 0..batch.len() {
        current.iter_mut().for_each(|x| *x = 0.0);
        target_sum.iter_mut().for_each(|x| *x = 0.0);
        for (i, theta) in outs.iter().enumerate() {
            let a = batch.actions[b][i];
            for j in 0..n {
                current[j] += theta[[b, a * n + j]];
            }
            let next_row = row(&next[i], b);
            let best = greedy_action(next_row, n);
            for jp in 0..n {
                target_sum[jp] += next_row[best * n + jp];
            }
        }
        let mut item = 0.0;
        let mut grad_j = vec![0.0; n];
        for j in 0..n {
            for jp in 0..n {
                let u = batch.rewards[b] + gamma * target_sum[jp] - current[j];
                item += quantile_huber(u, midpoints[j]);
                grad_j[j] += quantile_huber_grad(u, midpoints[j]);
            }
        }
        td_sum += item;
        let scale = alpha / (bsz * n as f64);
        for (i, theta) in outs.iter().enumerate() {
            let a = batch.actions[b][i];
            let mut up = upstreams[i].row_mut(b);
            for j in 0..n {
                up[a * n + j] = -grad_j[j] / (norm * bsz);
            }
            pen += quantile_penalty(theta.row(b), a, n, scale, &mut up, &mut scratch, &mut probs)
                / n as f64;
        }
    }
    let td = td_sum / norm / bsz;
    let conservative = alpha * (pen / bsz);
    let value = check_finite(
        LossValue {
            total: td + conservative,
            td,
            conservative,
        },
        "MA-CCQR",
    )?;
    let grads = online
        .iter()
        .zip(&tapes)
        .zip(&upstreams)
        .map(|((h, t), u)| h.backward(t, u.view()))
        .collect::<Result<Vec<_>>>()?;
    Ok(JointLoss { value, grads })
}

fn check_layout(outputs: usize, n: usize) -> Result<()> {
    if n == 0 || !outputs.is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "{outputs} outputs cannot hold {n} quantiles per action"
        )));
    }
    Ok(())
}

fn check_agents<H>(online: &[H], targets: &[H], batch: &Batch) -> Result<()> {
    if online.is_empty() || online.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} online heads vs {} target heads",
            online.len(),
            targets.len()
        )));
    }
    if batch.actions.first().map(Vec::len) != Some(online.len()) {
        return Err(Error::Dimension("batch joint actions do not match agent count".into()));
    }
    Ok(())
}
