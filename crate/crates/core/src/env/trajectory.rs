use std::io::Write;

use super::{AgentAction, EnvState};
use crate::error::Result;

/// One executed step, recorded with the state it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub step: usize,
    pub actions: Vec<AgentAction>,
    pub next: EnvState,
    pub reward: f64,
    pub in_risk: bool,
}

/// Columns: `step, uav{i}_x, uav{i}_y, uav{i}_serve …, aoi{m} …, reward, in_risk`.
pub fn write_trajectory_csv<W: Write>(out: W, steps: &[TrajectoryStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = steps.first() else {
        w.write_record(["step", "reward", "in_risk"])?;
        w.flush().map_err(csv::Error::from)?;
        return Ok(());
    };
    let uavs = first.next.uav_cells.len();
    let devices = first.next.aoi.len();
    let mut header = vec!["step".to_string()];
    for i in 0..uavs {
        header.extend([format!("uav{i}_x"), format!("uav{i}_y"), format!("uav{i}_serve")]);
    }
    header.extend((0..devices).map(|m| format!("aoi{m}")));
    header.extend(["reward".to_string(), "in_risk".to_string()]);
    w.write_record(&header)?;
    for s in steps {
        let mut row = vec![s.step.to_string()];
        for (&(x, y), a) in s.next.uav_cells.iter().zip(&s.actions) {
            row.extend([x.to_string(), y.to_string(), a.serve.to_string()]);
        }
        row.extend(s.next.aoi.iter().map(|a| a.to_string()));
        row.push(s.reward.to_string());
        row.push(u8::from(s.in_risk).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
