use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator identifier recorded in artifact metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Named sub-streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Master = 0,
    Init = 1,
    Shuffle = 2,
    LearningRate = 3,
    Split = 4,
    Quality = 5,
    Synth = 6,
    Eval = 7,
}

/// Seeded ChaCha8 generator.
///
/// ChaCha is counter based and its output is fixed by the seed and stream id
/// alone, so runs replay identically on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, Stream::Master as u64)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent generator for `stream`, unaffected by how much of this
    /// generator has been consumed.
    pub fn substream(&self, stream: Stream) -> Rng {
        Self::with_stream(self.seed, stream as u64)
    }

    /// Independent generator keyed by an arbitrary index, for per-lane or
    /// per-thread use.
    pub fn split(&self, stream: Stream, index: u64) -> Rng {
        Self::with_stream(self.seed, ((stream as u64) << 32) | (index & 0xffff_ffff) | (1 << 63))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        self.inner.random_range(lo..=hi)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
