//! Seeded random streams.
//!
//! Every (master seed, agent, noise kind) triple maps to its own ChaCha8
//! stream: the master seed is the key and `(agent, kind)` selects the
//! 64-bit stream id. Draws for one agent therefore never depend on how many
//! draws another agent made, or on which thread stepped it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    InitialState = 0,
    Process = 1,
    Channel = 2,
    TypeAssignment = 3,
}

const KIND_BITS: u32 = 3;

pub fn substream(seed: u64, agent: u64, kind: StreamKind) -> ChaCha8Rng {
    debug_assert!(agent < (1 << (64 - KIND_BITS)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((agent << KIND_BITS) | kind as u64);
    rng
}

/// Seed of the `run`-th replicate of a batch started from `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}
