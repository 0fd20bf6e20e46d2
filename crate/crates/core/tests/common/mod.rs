//! Independent reference implementations used by the integration tests.
//!
//! The single-UAV dynamics here are written from the model definition
//! without calling into the crate's simulator.

#![allow(dead_code)]

use std::collections::HashMap;

use cdmarl::algos::Policy;
use cdmarl::dataset::{BehaviorDescriptor, Dataset, DatasetMeta, Transition};
use cdmarl::env::{AgentAction, EnvConfig, EnvState, Move};
use rand::Rng;

/// 3×3 grid, one UAV, two devices, A_max = 5, no risk, horizon 6.
pub fn tiny_env() -> EnvConfig {
    let mut cfg = EnvConfig::standard(11);
    cfg.grid_w = 3;
    cfg.grid_h = 3;
    cfg.num_uavs = 1;
    cfg.num_devices = 2;
    cfg.a_max = 5;
    cfg.p_risk = 0.0;
    cfg.episode_len = 6;
    cfg.center_risk_rect(1, 1);
    cfg.place_devices();
    cfg
}

/// 6×6 grid, 2 UAVs, 6 devices, 3×2 central risk region, `P_risk = λ/2.5`.
pub fn desk_env() -> EnvConfig {
    let mut env = EnvConfig::standard(0);
    env.grid_w = 6;
    env.grid_h = 6;
    env.num_devices = 6;
    env.episode_len = 50;
    env.risk_penalty = env.lambda / 2.5;
    env.center_risk_rect(3, 2);
    env.place_devices();
    env
}

/// Every single-UAV state of `cfg`.
pub fn enumerate_states(cfg: &EnvConfig) -> Vec<EnvState> {
    assert_eq!(cfg.num_uavs, 1);
    let mut out = Vec::new();
    let m = cfg.num_devices;
    let a = cfg.a_max as usize;
    for x in 0..cfg.grid_w {
        for y in 0..cfg.grid_h {
            for code in 0..a.pow(m as u32) {
                let mut c = code;
                let aoi = (0..m)
                    .map(|_| {
                        let v = (c % a) as u32 + 1;
                        c /= a;
                        v
                    })
                    .collect();
                out.push(EnvState {
                    uav_cells: vec![(x, y)],
                    aoi,
                });
            }
        }
    }
    out
}

/// One deterministic single-UAV step (no risk penalty).
pub fn oracle_step(cfg: &EnvConfig, s: &EnvState, action: usize) -> (EnvState, f64) {
    let per_move = cfg.num_devices + 1;
    let (dx, dy): (i64, i64) = match action / per_move {
        0 => (0, 1),
        1 => (0, -1),
        2 => (1, 0),
        3 => (-1, 0),
        _ => (0, 0),
    };
    let serve = action % per_move;
    let (x, y) = s.uav_cells[0];
    let nx = (x as i64 + dx).clamp(0, cfg.grid_w as i64 - 1) as usize;
    let ny = (y as i64 + dy).clamp(0, cfg.grid_h as i64 - 1) as usize;
    let aoi: Vec<u32> = s
        .aoi
        .iter()
        .enumerate()
        .map(|(m, &v)| if serve == m + 1 { 1 } else { (v + 1).min(cfg.a_max) })
        .collect();
    let mean = aoi.iter().map(|&v| v as f64).sum::<f64>() / aoi.len() as f64;
    let mut reward = -mean;
    if serve > 0 {
        let ux = (nx as f64 + 0.5) * cfg.cell_len_m;
        let uy = (ny as f64 + 0.5) * cfg.cell_len_m;
        let [px, py] = cfg.device_positions[serve - 1];
        let d2 = (ux - px).powi(2) + (uy - py).powi(2);
        let gain = cfg.g0 / (cfg.height_m * cfg.height_m + d2);
        let power = (2f64.powf(cfg.packet_bits / cfg.bandwidth_hz) - 1.0) * cfg.noise_power_w / gain;
        reward -= cfg.lambda * power;
    }
    (
        EnvState {
            uav_cells: vec![(nx, ny)],
            aoi,
        },
        reward,
    )
}

fn key(s: &EnvState) -> (usize, usize, Vec<u32>) {
    (s.uav_cells[0].0, s.uav_cells[0].1, s.aoi.clone())
}

/// Optimal expected discounted return over `horizon` steps from the reset
/// distribution, by backward induction.
pub fn finite_horizon_optimum(cfg: &EnvConfig, gamma: f64, horizon: usize) -> f64 {
    let states = enumerate_states(cfg);
    let n_actions = cfg.actions_per_agent();
    let mut v: HashMap<_, f64> = states.iter().map(|s| (key(s), 0.0)).collect();
    for _ in 0..horizon {
        let mut next_v = HashMap::with_capacity(v.len());
        for s in &states {
            let best = (0..n_actions)
                .map(|a| {
                    let (n, r) = oracle_step(cfg, s, a);
                    r + gamma * v[&key(&n)]
                })
                .fold(f64::NEG_INFINITY, f64::max);
            next_v.insert(key(s), best);
        }
        v = next_v;
    }
    start_states(cfg).iter().map(|s| v[&key(s)]).sum::<f64>() / (cfg.grid_w * cfg.grid_h) as f64
}

/// Infinite-horizon discounted Q* by value iteration, keyed by raw state vector.
pub fn discounted_q(cfg: &EnvConfig, gamma: f64, tol: f64) -> HashMap<Vec<u64>, Vec<f64>> {
    let states = enumerate_states(cfg);
    let n_actions = cfg.actions_per_agent();
    let mut v: HashMap<_, f64> = states.iter().map(|s| (key(s), 0.0)).collect();
    loop {
        let mut delta: f64 = 0.0;
        let mut next_v = HashMap::with_capacity(v.len());
        for s in &states {
            let best = (0..n_actions)
                .map(|a| {
                    let (n, r) = oracle_step(cfg, s, a);
                    r + gamma * v[&key(&n)]
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[&key(s)]).abs());
            next_v.insert(key(s), best);
        }
        v = next_v;
        if delta < tol {
            break;
        }
    }
    states
        .iter()
        .map(|s| {
            let q = (0..n_actions)
                .map(|a| {
                    let (n, r) = oracle_step(cfg, s, a);
                    r + gamma * v[&key(&n)]
                })
                .collect();
            (bits(&s.to_vec()), q)
        })
        .collect()
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn start_states(cfg: &EnvConfig) -> Vec<EnvState> {
    let mut out = Vec::new();
    for x in 0..cfg.grid_w {
        for y in 0..cfg.grid_h {
            out.push(EnvState {
                uav_cells: vec![(x, y)],
                aoi: vec![1; cfg.num_devices],
            });
        }
    }
    out
}

/// Exact expected discounted return of a deterministic single-UAV policy over
/// `horizon` steps from the uniform reset distribution.
pub fn exact_policy_return<P: Policy>(cfg: &EnvConfig, policy: &P, gamma: f64, horizon: usize) -> f64 {
    let starts = start_states(cfg);
    let mut total = 0.0;
    for s0 in &starts {
        let mut s = s0.clone();
        let mut discount = 1.0;
        for _ in 0..horizon {
            let a = policy.act(&s).expect("policy acts")[0].index(cfg.num_devices);
            let (n, r) = oracle_step(cfg, &s, a);
            total += discount * r;
            discount *= gamma;
            s = n;
        }
    }
    total / starts.len() as f64
}

/// One transition per (state, action) pair of the tiny MDP.
pub fn exhaustive_dataset(cfg: &EnvConfig) -> Dataset {
    let mut transitions = Vec::new();
    for s in enumerate_states(cfg) {
        for a in 0..cfg.actions_per_agent() {
            let (n, r) = oracle_step(cfg, &s, a);
            transitions.push(Transition {
                state: s.to_vec(),
                actions: vec![a as u32],
                reward: r,
                next_state: n.to_vec(),
            });
        }
    }
    dataset_from(cfg, transitions)
}

pub fn dataset_from(cfg: &EnvConfig, transitions: Vec<Transition>) -> Dataset {
    let mut meta = DatasetMeta::new(
        cfg.clone(),
        BehaviorDescriptor {
            kind: "test".into(),
            config: None,
            episodes_run: 0,
            final_mean_return: 0.0,
        },
        0,
    );
    meta.created_unix = 0;
    meta.source_len = transitions.len() as u64;
    Dataset { meta, transitions }
}

/// Uniform-random joint actions rolled through the crate's simulator.
pub fn random_log<R: Rng>(cfg: &EnvConfig, episodes: usize, rng: &mut R) -> Vec<Transition> {
    let env = cdmarl::env::UavEnv::new(cfg.clone()).unwrap();
    let n = cfg.actions_per_agent();
    let mut log = Vec::new();
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        for _ in 0..cfg.episode_len {
            let idx: Vec<usize> = (0..cfg.num_uavs).map(|_| rng.random_range(0..n)).collect();
            let joint: Vec<AgentAction> = idx
                .iter()
                .map(|&i| AgentAction::from_index(i, cfg.num_devices).unwrap())
                .collect();
            let out = env.step(&s, &joint, rng).unwrap();
            log.push(Transition {
                state: s.to_vec(),
                actions: idx.iter().map(|&i| i as u32).collect(),
                reward: out.reward,
                next_state: out.next.to_vec(),
            });
            s = out.next;
        }
    }
    log
}

/// Hover and serve nothing, for every UAV.
pub fn idle(s: &EnvState) -> cdmarl::Result<Vec<AgentAction>> {
    Ok(vec![AgentAction::new(Move::Hover, 0); s.uav_cells.len()])
}
