use crate::error::{Error, Result};

/// Age-of-information update: reset to 1 on service, otherwise grow up to `a_max`.
pub fn update_aoi(prev: u32, served: bool, a_max: u32) -> u32 {
    if served {
        1
    } else {
        prev.saturating_add(1).min(a_max)
    }
}

/// Line-of-sight gain `g0 / (h² + d²)` at horizontal distance `dist2d`.
pub fn channel_gain(g0: f64, height: f64, dist2d: f64) -> f64 {
    g0 / (height * height + dist2d * dist2d)
}

/// Transmit power needed to push `packet_bits` through `bandwidth` in one slot.
pub fn tx_power(gain: f64, packet_bits: f64, bandwidth: f64, noise: f64) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::Config(format!("channel gain must be positive, got {gain}")));
    }
    Ok((2f64.powf(packet_bits / bandwidth) - 1.0) * noise / gain)
}
