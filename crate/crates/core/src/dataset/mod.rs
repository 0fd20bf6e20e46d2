//! The static offline dataset: records, metadata, subsampling, batches.

mod behavior;
mod format;

pub use behavior::{train_behavior_policy, BehaviorConfig, BehaviorOutcome};
pub use format::{load, read_dataset, save, write_dataset};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{advance, base_reward, served_pairs, AgentAction, EnvConfig, EnvState};
use crate::error::{Error, Result};

/// One `(s, a, r, s')` record. States are stored in raw units
/// (cell indices and AoI values); see [`Normalizer`] for network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub actions: Vec<u32>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

impl Transition {
    pub fn validate(&self, config: &EnvConfig) -> Result<()> {
        EnvState::from_vec(&self.state, config)?;
        EnvState::from_vec(&self.next_state, config)?;
        if self.actions.len() != config.num_uavs {
            return Err(Error::Dimension(format!(
                "{} actions for {} UAVs",
                self.actions.len(),
                config.num_uavs
            )));
        }
        if let Some(a) = self
            .actions
            .iter()
            .find(|&&a| a as usize >= config.actions_per_agent())
        {
            return Err(Error::Config(format!("action index {a} out of range")));
        }
        if !self.reward.is_finite() {
            return Err(Error::NonFinite("transition reward".into()));
        }
        Ok(())
    }
}

/// Per-coordinate scaling applied to raw state vectors before they reach a
/// network: cell coordinates divided by the grid size, AoI by `a_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub scales: Vec<f64>,
}

impl Normalizer {
    pub fn for_env(config: &EnvConfig) -> Self {
        let mut scales = Vec::with_capacity(config.state_dim());
        for _ in 0..config.num_uavs {
            scales.push(1.0 / config.grid_w as f64);
            scales.push(1.0 / config.grid_h as f64);
        }
        scales.extend(std::iter::repeat_n(1.0 / config.a_max as f64, config.num_devices));
        Self { scales }
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scales).map(|(x, s)| x * s).collect()
    }

    pub fn apply_into(&self, raw: &[f64], out: &mut [f64]) {
        for ((o, x), s) in out.iter_mut().zip(raw).zip(&self.scales) {
            *o = x * s;
        }
    }
}

/// What produced the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDescriptor {
    pub kind: String,
    pub config: Option<BehaviorConfig>,
    pub episodes_run: usize,
    /// Mean undiscounted return over the last 100 behavior episodes.
    pub final_mean_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env: EnvConfig,
    pub env_hash: String,
    pub behavior: BehaviorDescriptor,
    pub collection_seed: u64,
    /// Seconds since the Unix epoch; excluded from [`Dataset::content_hash`].
    pub created_unix: u64,
    pub source_len: u64,
    pub fraction: f64,
    pub normalizer: Normalizer,
}

impl DatasetMeta {
    pub fn new(env: EnvConfig, behavior: BehaviorDescriptor, collection_seed: u64) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            env_hash: env.hash(),
            normalizer: Normalizer::for_env(&env),
            env,
            behavior,
            collection_seed,
            created_unix,
            source_len: 0,
            fraction: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.meta.env.state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.meta.env.hash() != self.meta.env_hash {
            return Err(Error::Config("dataset env hash does not match its env config".into()));
        }
        for t in &self.transitions {
            t.validate(&self.meta.env)?;
        }
        Ok(())
    }

    /// SHA-256 over the serialised dataset with `created_unix` zeroed.
    pub fn content_hash(&self) -> String {
        let mut stripped = self.meta.clone();
        stripped.created_unix = 0;
        let mut buf = Vec::new();
        format::write_body(&mut buf, &stripped, &self.transitions).expect("in-memory write");
        use sha2::Digest;
        crate::env::hex_digest(&sha2::Sha256::digest(&buf))
    }

    /// Copy with every reward recomputed under `config` (same layout, new
    /// λ or risk settings). Risk penalties are redrawn from `rng`.
    pub fn relabel<R: Rng + ?Sized>(&self, config: &EnvConfig, rng: &mut R) -> Result<Dataset> {
        config.validate()?;
        let old = &self.meta.env;
        if config.state_dim() != old.state_dim()
            || config.actions_per_agent() != old.actions_per_agent()
            || config.grid_w != old.grid_w
            || config.grid_h != old.grid_h
        {
            return Err(Error::Config("relabel config changes the state/action layout".into()));
        }
        let mut transitions = Vec::with_capacity(self.len());
        for t in &self.transitions {
            let state = EnvState::from_vec(&t.state, config)?;
            let actions = t
                .actions
                .iter()
                .map(|&a| AgentAction::from_index(a as usize, config.num_devices))
                .collect::<Result<Vec<_>>>()?;
            let next = advance(&state, &actions, config);
            let mut reward = base_reward(&next, &served_pairs(&actions), config);
            let in_risk = next.uav_cells.iter().any(|&c| config.in_risk_region(c));
            if in_risk && config.p_risk > 0.0 && rng.random::<f64>() < config.p_risk {
                reward -= config.risk_penalty;
            }
            transitions.push(Transition {
                state: t.state.clone(),
                actions: t.actions.clone(),
                reward,
                next_state: next.to_vec(),
            });
        }
        let mut meta = self.meta.clone();
        meta.env = config.clone();
        meta.env_hash = config.hash();
        meta.normalizer = Normalizer::for_env(config);
        Ok(Dataset { meta, transitions })
    }
}

/// Uniform sample without replacement of `⌊fraction · len⌋` records.
pub fn subsample<R: Rng + ?Sized>(
    log: &[Transition],
    fraction: f64,
    meta: DatasetMeta,
    rng: &mut R,
) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let keep = (fraction * log.len() as f64).floor() as usize;
    if keep == 0 {
        return Err(Error::Empty(format!(
            "fraction {fraction} of {} transitions selects nothing",
            log.len()
        )));
    }
    let picked = sample(rng, log.len(), keep);
    let transitions = picked.iter().map(|i| log[i].clone()).collect();
    Ok(Dataset {
        meta: DatasetMeta {
            source_len: log.len() as u64,
            fraction,
            ..meta
        },
        transitions,
    })
}

/// Uniform indices with replacement.
pub fn sample_indices<R: Rng + ?Sized>(len: usize, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Empty("cannot sample from an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok((0..batch_size).map(|_| rng.random_range(0..len)).collect())
}

/// Uniform minibatch with replacement.
pub fn sample_batch<'a, R: Rng + ?Sized>(
    dataset: &'a Dataset,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    Ok(sample_indices(dataset.len(), batch_size, rng)?
        .into_iter()
        .map(|i| &dataset.transitions[i])
        .collect())
}

/// Network-ready minibatch: normalised states, per-agent action indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub next_states: Array2<f64>,
    /// `actions[b][i]` is agent `i`'s action index in item `b`.
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
}

impl Batch {
    pub fn from_transitions<'a>(
        items: impl IntoIterator<Item = &'a Transition>,
        normalizer: &Normalizer,
    ) -> Self {
        let items: Vec<&Transition> = items.into_iter().collect();
        let dim = normalizer.scales.len();
        let mut states = Array2::zeros((items.len(), dim));
        let mut next_states = Array2::zeros((items.len(), dim));
        for (b, t) in items.iter().enumerate() {
            normalizer.apply_into(&t.state, states.row_mut(b).as_slice_mut().unwrap());
            normalizer.apply_into(&t.next_state, next_states.row_mut(b).as_slice_mut().unwrap());
        }
        Self {
            states,
            next_states,
            actions: items
                .iter()
                .map(|t| t.actions.iter().map(|&a| a as usize).collect())
                .collect(),
            rewards: items.iter().map(|t| t.reward).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::stream_rng;

    pub(crate) fn toy_log(n: usize) -> (EnvConfig, Vec<Transition>) {
        let cfg = EnvConfig::standard(0);
        let log = (0..n)
            .map(|i| Transition {
                state: EnvState {
                    uav_cells: vec![(i % 10, 0), (0, i % 7)],
                    aoi: vec![1 + (i % 5) as u32; 10],
                }
                .to_vec(),
                actions: vec![(i % 55) as u32, ((i * 7) % 55) as u32],
                reward: -(i as f64),
                next_state: EnvState {
                    uav_cells: vec![(0, 0), (1, 1)],
                    aoi: vec![2; 10],
                }
                .to_vec(),
            })
            .collect();
        (cfg, log)
    }

    fn meta(cfg: &EnvConfig) -> DatasetMeta {
        DatasetMeta::new(
            cfg.clone(),
            BehaviorDescriptor {
                kind: "test".into(),
                config: None,
                episodes_run: 0,
                final_mean_return: 0.0,
            },
            1,
        )
    }

    #[test]
    fn subsample_sizes() {
        let (cfg, log) = toy_log(50_000);
        let d = subsample(&log, 0.16, meta(&cfg), &mut stream_rng(0, 0)).unwrap();
        assert_eq!(d.len(), 8_000);
        assert_eq!(d.meta.source_len, 50_000);
        assert_eq!(d.meta.fraction, 0.16);
    }

    #[test]
    fn full_fraction_is_permutation() {
        let (cfg, log) = toy_log(300);
        let d = subsample(&log, 1.0, meta(&cfg), &mut stream_rng(0, 0)).unwrap();
        let mut got: Vec<i64> = d.transitions.iter().map(|t| t.reward as i64).collect();
        got.sort_unstable();
        let want: Vec<i64> = (0..300).map(|i| -(299 - i)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn subsample_is_seeded_and_rejects_empty() {
        let (cfg, log) = toy_log(100);
        let a = subsample(&log, 0.3, meta(&cfg), &mut stream_rng(5, 0)).unwrap();
        let b = subsample(&log, 0.3, meta(&cfg), &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a.transitions, b.transitions);
        assert!(subsample(&log, 0.001, meta(&cfg), &mut stream_rng(5, 0)).is_err());
        assert!(subsample(&log, 0.0, meta(&cfg), &mut stream_rng(5, 0)).is_err());
        assert!(subsample(&log, 1.5, meta(&cfg), &mut stream_rng(5, 0)).is_err());
    }

    #[test]
    fn subsample_preserves_action_marginals() {
        let (cfg, _) = toy_log(1);
        // skewed marginal over 55 actions
        let mut rng = stream_rng(1, 1);
        let log: Vec<Transition> = (0..40_000)
            .map(|_| {
                let a = (rng.random::<f64>().powi(3) * 55.0) as u32;
                Transition {
                    state: vec![0.0, 0.0, 0.0, 0.0].into_iter().chain(vec![1.0; 10]).collect(),
                    actions: vec![a, 0],
                    reward: 0.0,
                    next_state: vec![0.0; 4].into_iter().chain(vec![1.0; 10]).collect(),
                }
            })
            .collect();
        let d = subsample(&log, 0.16, meta(&cfg), &mut stream_rng(2, 0)).unwrap();
        let hist = |ts: &[Transition]| {
            let mut h = vec![0.0; 55];
            for t in ts {
                h[t.actions[0] as usize] += 1.0 / ts.len() as f64;
            }
            h
        };
        let (p, q) = (hist(&log), hist(&d.transitions));
        let tv: f64 = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
        // 3σ bound on the summed absolute deviations of a multinomial sample
        let n = d.len() as f64;
        let bound: f64 = 0.5 * p.iter().map(|pk| 3.0 * (pk * (1.0 - pk) / n).sqrt()).sum::<f64>();
        assert!(tv <= bound, "tv {tv} > {bound}");
    }

    #[test]
    fn batch_sampling() {
        let (cfg, log) = toy_log(1);
        let d = Dataset {
            meta: meta(&cfg),
            transitions: log,
        };
        let b = sample_batch(&d, 5, &mut stream_rng(0, 0)).unwrap();
        assert!(b.iter().all(|t| **t == d.transitions[0]));
        let empty = Dataset {
            meta: meta(&cfg),
            transitions: vec![],
        };
        assert!(matches!(
            sample_batch(&empty, 5, &mut stream_rng(0, 0)),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn batch_indices_are_seeded_and_uniform() {
        let a = sample_indices(10, 64, &mut stream_rng(3, 5)).unwrap();
        let b = sample_indices(10, 64, &mut stream_rng(3, 5)).unwrap();
        assert_eq!(a, b);

        let len = 20;
        let draws = 1_000_000;
        let idx = sample_indices(len, draws, &mut stream_rng(9, 0)).unwrap();
        let mut counts = vec![0usize; len];
        for i in idx {
            counts[i] += 1;
        }
        let p = 1.0 / len as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn batch_normalises_inputs() {
        let (cfg, log) = toy_log(3);
        let norm = Normalizer::for_env(&cfg);
        let batch = Batch::from_transitions(&log, &norm);
        assert_eq!(batch.states.dim(), (3, 14));
        assert_eq!(batch.states[[1, 0]], 0.1);
        assert_eq!(batch.states[[1, 4]], 0.02);
        assert_eq!(batch.actions[1], vec![1, 7]);
    }

    #[test]
    fn relabel_recomputes_rewards() {
        let mut cfg = EnvConfig::standard(3);
        cfg.p_risk = 0.0;
        let s = EnvState {
            uav_cells: vec![(0, 0), (9, 9)],
            aoi: vec![3; 10],
        };
        let acts = [
            AgentAction::new(crate::env::Move::Hover, 1),
            AgentAction::new(crate::env::Move::Hover, 0),
        ];
        let next = advance(&s, &acts, &cfg);
        let t = Transition {
            state: s.to_vec(),
            actions: acts.iter().map(|a| a.index(10) as u32).collect(),
            reward: 0.0,
            next_state: next.to_vec(),
        };
        let d = Dataset {
            meta: meta(&cfg),
            transitions: vec![t],
        };
        let mut heavy = cfg.clone();
        heavy.lambda = 1e12;
        let r = d.relabel(&heavy, &mut stream_rng(0, 0)).unwrap();
        let expected = base_reward(&next, &[(0, 0)], &heavy);
        assert_eq!(r.transitions[0].reward, expected);
        assert!(expected < -3.0 - 1.0);
        assert_eq!(r.meta.env_hash, heavy.hash());
        r.validate().unwrap();
    }
}
