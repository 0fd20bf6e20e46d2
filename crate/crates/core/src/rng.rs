//! Seeded random streams. Every random draw in the crate flows from a run
//! seed through one of these named streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

pub mod streams {
    pub const DEVICES: u64 = 1;
    pub const BEHAVIOR: u64 = 2;
    pub const SUBSAMPLE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const BATCHES: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const RELABEL: u64 = 7;
}

/// Independent ChaCha stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
