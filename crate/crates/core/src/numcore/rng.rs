//! Named, splittable random streams.
//!
//! Every consumer (a particle, a rollout, an evaluation episode) owns its own
//! stream identified by `(seed, stream id)`. The generator is ChaCha8 with the
//! stream id selecting an independent keystream, so draws never depend on the
//! order in which sibling streams are consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    /// Stream derived from a path of tags, e.g. `[iteration, particle, rollout]`.
    pub fn from_path(seed: u64, path: &[u64]) -> Self {
        RngStream::new(seed, stream_id(path))
    }

    /// A child stream keyed by `tag`; independent of how much of `self` was consumed.
    pub fn child(&self, tag: u64) -> Self {
        RngStream::new(self.seed, stream_id(&[self.stream, tag]))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a tag path into a single stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x5EED_0F_5EED_u64, |acc, &t| splitmix64(acc ^ splitmix64(t)))
}
