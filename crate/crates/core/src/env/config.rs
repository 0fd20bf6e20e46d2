use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Converts a gain in decibels to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Grid-world parameters. Serialises as a flat JSON object with SI units:
/// lengths in metres, bandwidth in Hz, packet size in bits, noise in watts,
/// `g0` as a linear gain at 1 m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub cell_len_m: f64,
    pub num_uavs: usize,
    pub num_devices: usize,
    pub height_m: f64,
    pub g0: f64,
    pub bandwidth_hz: f64,
    pub packet_bits: f64,
    pub noise_power_w: f64,
    pub lambda: f64,
    pub a_max: u32,
    /// Risk rectangle, inclusive, in cell coordinates.
    pub risk_x0: usize,
    pub risk_y0: usize,
    pub risk_w: usize,
    pub risk_h: usize,
    pub p_risk: f64,
    pub risk_penalty: f64,
    pub episode_len: usize,
    /// Planar device coordinates in metres. Left empty in a config file to
    /// have them drawn from `seed`.
    #[serde(default)]
    pub device_positions: Vec<[f64; 2]>,
    pub seed: u64,
}

impl EnvConfig {
    /// The 10×10, two-UAV, ten-device setting with devices placed from `seed`.
    pub fn standard(seed: u64) -> Self {
        let mut cfg = Self {
            grid_w: 10,
            grid_h: 10,
            cell_len_m: 100.0,
            num_uavs: 2,
            num_devices: 10,
            height_m: 100.0,
            g0: db_to_linear(30.0),
            bandwidth_hz: 1e6,
            packet_bits: 5e6,
            noise_power_w: dbm_to_watts(-100.0),
            lambda: 500.0,
            a_max: 100,
            risk_x0: 0,
            risk_y0: 0,
            risk_w: 0,
            risk_h: 0,
            p_risk: 0.1,
            risk_penalty: 100.0,
            episode_len: 100,
            device_positions: Vec::new(),
            seed,
        };
        cfg.center_risk_rect(5, 4);
        cfg.place_devices();
        cfg
    }

    /// Places a `w × h` risk rectangle in the middle of the grid.
    pub fn center_risk_rect(&mut self, w: usize, h: usize) {
        self.risk_w = w.min(self.grid_w);
        self.risk_h = h.min(self.grid_h);
        self.risk_x0 = (self.grid_w - self.risk_w) / 2;
        self.risk_y0 = (self.grid_h - self.risk_h) / 2;
    }

    /// Draws `num_devices` positions uniformly over the grid area from `seed`.
    pub fn place_devices(&mut self) {
        let mut rng = stream_rng(self.seed, crate::rng::streams::DEVICES);
        let (w, h) = self.extent_m();
        self.device_positions = (0..self.num_devices)
            .map(|_| [rng.random_range(0.0..w), rng.random_range(0.0..h)])
            .collect();
    }

    /// Grid extent in metres.
    pub fn extent_m(&self) -> (f64, f64) {
        (
            self.grid_w as f64 * self.cell_len_m,
            self.grid_h as f64 * self.cell_len_m,
        )
    }

    /// Moves per agent times serve choices (none plus each device).
    pub fn actions_per_agent(&self) -> usize {
        5 * (self.num_devices + 1)
    }

    /// Length of the flattened state vector.
    pub fn state_dim(&self) -> usize {
        2 * self.num_uavs + self.num_devices
    }

    pub fn in_risk_region(&self, cell: (usize, usize)) -> bool {
        let (x, y) = cell;
        self.risk_w > 0
            && self.risk_h > 0
            && x >= self.risk_x0
            && x < self.risk_x0 + self.risk_w
            && y >= self.risk_y0
            && y < self.risk_y0 + self.risk_h
    }

    /// Centre of a cell in metres.
    pub fn cell_center_m(&self, cell: (usize, usize)) -> [f64; 2] {
        [
            (cell.0 as f64 + 0.5) * self.cell_len_m,
            (cell.1 as f64 + 0.5) * self.cell_len_m,
        ]
    }

    /// Energy-per-noise factor `(2^(E/B) − 1)·σ²` shared by every power term.
    pub fn power_numerator(&self) -> f64 {
        (2f64.powf(self.packet_bits / self.bandwidth_hz) - 1.0) * self.noise_power_w
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_len_m", self.cell_len_m),
            ("height_m", self.height_m),
            ("g0", self.g0),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("packet_bits", self.packet_bits),
            ("lambda", self.lambda),
            ("risk_penalty", self.risk_penalty),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if self.num_uavs == 0 || self.num_devices == 0 {
            return Err(Error::Config("need at least one UAV and one device".into()));
        }
        if self.a_max == 0 {
            return Err(Error::Config("a_max must be at least 1".into()));
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_risk) {
            return Err(Error::Config(format!("p_risk must lie in [0, 1], got {}", self.p_risk)));
        }
        if self.risk_x0 + self.risk_w > self.grid_w || self.risk_y0 + self.risk_h > self.grid_h {
            return Err(Error::Config("risk rectangle extends beyond the grid".into()));
        }
        if self.device_positions.len() != self.num_devices {
            return Err(Error::Config(format!(
                "{} device positions for {} devices",
                self.device_positions.len(),
                self.num_devices
            )));
        }
        let (w, h) = self.extent_m();
        for p in &self.device_positions {
            if !(p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h) {
                return Err(Error::Config(format!("device at {p:?} lies outside the grid")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex_digest(&Sha256::digest(&bytes))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_conversions() {
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert!((dbm_to_watts(-100.0) - 1e-13).abs() < 1e-25);
    }

    #[test]
    fn standard_is_valid() {
        let cfg = EnvConfig::standard(3);
        cfg.validate().unwrap();
        assert_eq!((cfg.risk_x0, cfg.risk_y0, cfg.risk_w, cfg.risk_h), (2, 3, 5, 4));
        assert_eq!(cfg.actions_per_agent(), 55);
        assert_eq!(cfg.state_dim(), 14);
    }

    #[test]
    fn risk_region_membership() {
        let cfg = EnvConfig::standard(0);
        assert!(cfg.in_risk_region((5, 5)));
        assert!(cfg.in_risk_region((4, 4)));
        assert!(!cfg.in_risk_region((0, 0)));
        // closed rectangle: its corner cells belong to it
        assert!(cfg.in_risk_region((2, 3)));
        assert!(cfg.in_risk_region((6, 6)));
        assert!(!cfg.in_risk_region((7, 6)));
        assert!(!cfg.in_risk_region((6, 7)));
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = EnvConfig::standard(9);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EnvConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["lamda"] = 1.0.into();
        assert!(serde_json::from_value::<EnvConfig>(v).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = EnvConfig::standard(0);
        cfg.p_risk = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::standard(0);
        cfg.risk_x0 = 8;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::standard(0);
        cfg.device_positions[0] = [-1.0, 0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::standard(0);
        cfg.height_m = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn device_placement_is_seeded() {
        assert_eq!(
            EnvConfig::standard(4).device_positions,
            EnvConfig::standard(4).device_positions
        );
        assert_ne!(
            EnvConfig::standard(4).device_positions,
            EnvConfig::standard(5).device_positions
        );
    }
}
