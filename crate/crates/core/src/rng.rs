//! Seeded random streams.
//!
//! A run seed fans out to independent named substreams so that the order in
//! which components consume randomness cannot perturb each other.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DqsRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Env = 2,
    Policy = 3,
    Critic = 4,
    Buffer = 5,
    Eval = 6,
    Act = 7,
}

pub fn substream(seed: u64, stream: Stream) -> DqsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Child generator seeded from one draw of `parent`.
pub fn fork(parent: &mut DqsRng) -> DqsRng {
    ChaCha8Rng::seed_from_u64(parent.next_u64())
}

pub fn seeded(seed: u64) -> DqsRng {
    ChaCha8Rng::seed_from_u64(seed)
}
