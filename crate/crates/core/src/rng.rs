//! Counter-based random streams.
//!
//! Every Monte Carlo replica draws from its own ChaCha8 stream addressed by
//! `(seed, index)`, so the values a replica sees do not depend on which
//! worker runs it or in what order replicas are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A family of independent streams sharing one seed.
#[derive(Debug, Clone)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        Self { key }
    }

    /// The substream with the given index.
    pub fn stream(&self, index: u64) -> RandomStream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        RandomStream(rng)
    }
}

/// A single deterministic random stream.
#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    /// Shorthand for substream `index` of the family seeded with `seed`.
    pub fn new(seed: u64, index: u64) -> Self {
        StreamFamily::new(seed).stream(index)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
