//! Seed splitting.
//!
//! Every random entity in a run owns a ChaCha8 stream derived from the
//! master seed and a stream id built from `(kind, index)`. Streams are
//! independent, so adding an entity never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Entity kinds that own a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Tag = 1,
    Session = 2,
    Noise = 3,
    Channel = 4,
    Training = 5,
    Population = 6,
}

/// Stream id for an entity: kind in the high 16 bits, index below.
pub fn stream_id(kind: StreamKind, index: u64) -> u64 {
    ((kind as u64) << 48) | (index & 0xFFFF_FFFF_FFFF)
}

/// Derive an independent generator for one entity.
pub fn rng_for(master_seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(kind, index));
    rng
}

/// Derive a 64-bit sub-seed (for entities that store a seed, such as tags).
pub fn sub_seed(master_seed: u64, kind: StreamKind, index: u64) -> u64 {
    use rand::RngCore;
    rng_for(master_seed, kind, index).next_u64()
}
