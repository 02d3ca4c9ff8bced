//! Reproducible random streams for batched Monte Carlo.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Master seed plus substream. Each path batch draws from its own ChaCha8
/// stream, so output does not depend on which thread ran which batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RngStreamSpec {
    pub seed: u64,
    pub substream: u32,
}

impl RngStreamSpec {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64, substream: u32) -> Self {
        RngStreamSpec { seed, substream }
    }

    /// Same seed, different substream.
    pub fn with_substream(self, substream: u32) -> Self {
        RngStreamSpec { substream, ..self }
    }

    pub fn batch_rng(&self, batch: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(self.substream) << 32) | u64::from(batch));
        rng
    }
}
