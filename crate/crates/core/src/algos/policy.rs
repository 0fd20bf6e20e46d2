use ndarray::Array2;

use super::head::QHead;
use super::losses::greedy_action;
use crate::dataset::Normalizer;
use crate::env::{AgentAction, EnvConfig, EnvState};
use crate::error::{Error, Result};

/// Maps a joint state to one action per UAV.
pub trait Policy {
    fn act(&self, state: &EnvState) -> Result<Vec<AgentAction>>;
}

impl<F> Policy for F
where
    F: Fn(&EnvState) -> Result<Vec<AgentAction>>,
{
    fn act(&self, state: &EnvState) -> Result<Vec<AgentAction>> {
        self(state)
    }
}

/// Decentralised greedy execution: each UAV takes the argmax of its own head
/// (quantile mean for distributional heads).
#[derive(Clone, Debug)]
pub struct GreedyPolicy<H> {
    heads: Vec<H>,
    quantiles: usize,
    normalizer: Normalizer,
    num_devices: usize,
}

impl<H: QHead> GreedyPolicy<H> {
    pub fn new(heads: Vec<H>, quantiles: usize, env: &EnvConfig) -> Result<Self> {
        if heads.len() != env.num_uavs {
            return Err(Error::Dimension(format!(
                "{} heads for {} UAVs",
                heads.len(),
                env.num_uavs
            )));
        }
        let outputs = env.actions_per_agent() * quantiles;
        if let Some(h) = heads
            .iter()
            .find(|h| h.input_dim() != env.state_dim() || h.output_dim() != outputs)
        {
            return Err(Error::Dimension(format!(
                "head maps {} -> {} but the environment needs {} -> {}",
                h.input_dim(),
                h.output_dim(),
                env.state_dim(),
                outputs
            )));
        }
        Ok(Self {
            heads,
            quantiles: quantiles.max(1),
            normalizer: Normalizer::for_env(env),
            num_devices: env.num_devices,
        })
    }

    pub fn heads(&self) -> &[H] {
        &self.heads
    }

    /// Action indices chosen for `state`.
    pub fn action_indices(&self, state: &EnvState) -> Result<Vec<usize>> {
        let input = self.normalizer.apply(&state.to_vec());
        let x = Array2::from_shape_vec((1, input.len()), input).expect("row vector");
        self.heads
            .iter()
            .map(|h| {
                let out = h.forward(x.view())?;
                let row = out.row(0).to_vec();
                Ok(greedy_action(&row, self.quantiles))
            })
            .collect()
    }
}

impl<H: QHead> Policy for GreedyPolicy<H> {
    fn act(&self, state: &EnvState) -> Result<Vec<AgentAction>> {
        self.action_indices(state)?
            .into_iter()
            .map(|i| AgentAction::from_index(i, self.num_devices))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Move;
    use crate::nn::MlpNet;
    use crate::rng::stream_rng;

    fn env() -> EnvConfig {
        let mut cfg = EnvConfig::standard(3);
        cfg.grid_w = 4;
        cfg.grid_h = 4;
        cfg.num_devices = 3;
        cfg.center_risk_rect(2, 2);
        cfg.place_devices();
        cfg
    }

    #[test]
    fn greedy_policy_matches_head_argmax() {
        let env = env();
        let mut rng = stream_rng(5, 0);
        let heads: Vec<MlpNet> = (0..2)
            .map(|_| MlpNet::new(&[env.state_dim(), 6, env.actions_per_agent() * 2], &mut rng).unwrap())
            .collect();
        let policy = GreedyPolicy::new(heads.clone(), 2, &env).unwrap();
        let state = EnvState {
            uav_cells: vec![(1, 2), (3, 0)],
            aoi: vec![4, 1, 9],
        };
        let input = Normalizer::for_env(&env).apply(&state.to_vec());
        let acts = policy.action_indices(&state).unwrap();
        for (h, &a) in heads.iter().zip(&acts) {
            assert_eq!(a, greedy_action(&h.forward(&input).unwrap(), 2));
        }
        let joint = policy.act(&state).unwrap();
        assert_eq!(joint.len(), 2);
    }

    #[test]
    fn wrong_shapes_rejected() {
        let env = env();
        let mut rng = stream_rng(5, 0);
        let h = MlpNet::new(&[env.state_dim(), 4, 7], &mut rng).unwrap();
        assert!(GreedyPolicy::new(vec![h.clone(), h], 1, &env).is_err());
    }

    #[test]
    fn closures_are_policies() {
        let hover = |s: &EnvState| Ok(vec![AgentAction::new(Move::Hover, 0); s.uav_cells.len()]);
        let state = EnvState {
            uav_cells: vec![(0, 0)],
            aoi: vec![1, 1, 1],
        };
        assert_eq!(hover.act(&state).unwrap(), vec![AgentAction::new(Move::Hover, 0)]);
    }
}
