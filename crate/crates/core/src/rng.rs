//! Deterministic, stream-keyed randomness.
//!
//! Every randomized operation in this crate consumes an [`RngStream`]: a
//! `(seed, stream_id)` pair that expands to a counter-based ChaCha8 generator.
//! The same pair always reproduces the same draws on every platform, and
//! distinct stream ids give statistically independent streams from one seed.
//! Parallel work (replicates, chains, candidates) derives one substream per
//! task up front, so results never depend on thread scheduling.
//!
//! There is no global generator anywhere in the crate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Concrete generator type produced by [`RngStream::rng`].
pub type Rng = ChaCha8Rng;

/// A replayable randomness source identified by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    /// Experiment-level seed shared by related streams.
    pub seed: u64,
    /// Identifies one independent stream under the seed.
    pub stream_id: u64,
}

impl RngStream {
    /// Stream `stream_id` under `seed`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiates the generator for this stream.
    pub fn rng(&self) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives a child stream for subtask `tag`.
    ///
    /// The child id mixes `stream_id` and `tag` through SplitMix64 so that
    /// nested derivations (replicate -> chain -> candidate) do not collide in
    /// practice. Same parent and tag always yield the same child.
    pub fn substream(&self, tag: u64) -> Self {
        let mixed = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Self {
            seed: self.seed,
            stream_id: mixed,
        }
    }
}

/// SplitMix64 finalizer; a standard 64-bit bijective mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
