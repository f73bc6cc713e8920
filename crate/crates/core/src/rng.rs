//! Counter-based random streams.
//!
//! Every draw is addressed by `(seed, iteration, draw index)`: the seed picks a
//! ChaCha8 key, the iteration picks the ChaCha stream, and draws within an
//! iteration consume the stream from word 0. Draws for iteration `t` therefore
//! never depend on how many draws earlier iterations made, on the record
//! cadence, or on how replicated runs are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id reserved for drawing the initial iterate.
const INIT_STREAM: u64 = u64::MAX;
/// Stream id reserved for problem construction (synthetic data).
const DATA_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone)]
pub struct SampleStream {
    seed: u64,
    base: ChaCha8Rng,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        SampleStream {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for the mini-batch draws of iteration `t`.
    pub fn iteration(&self, t: u64) -> ChaCha8Rng {
        debug_assert!(t < DATA_STREAM);
        self.at(t)
    }

    pub fn init(&self) -> ChaCha8Rng {
        self.at(INIT_STREAM)
    }

    pub fn data(&self) -> ChaCha8Rng {
        self.at(DATA_STREAM)
    }

    fn at(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos(0);
        rng
    }
}
