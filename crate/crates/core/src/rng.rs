//! Seeded random streams.
//!
//! Every consumer derives its generator from the run seed plus a named
//! stream, so draws in one stage never shift draws in another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Generation,
    Shuffle,
    Interleave,
    Folds,
    Bootstrap,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Generation => 1,
            Stream::Shuffle => 2,
            Stream::Interleave => 3,
            Stream::Folds => 4,
            Stream::Bootstrap => 5,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
