//! Deterministic RNG streams.
//!
//! Every random consumer gets its own ChaCha8 stream keyed by the run seed and
//! a purpose id, so seeds and environments never share a stream and adding a
//! consumer does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NETWORK_INIT: u64 = 0;
pub const MINIBATCH_SHUFFLE: u64 = 1;
pub const RANDOM_SEARCH: u64 = 2;
const ENV_DYNAMICS_BASE: u64 = 1 << 16;
const ACTION_SAMPLING_BASE: u64 = 2 << 16;
const RELAY_PHASE_BASE: u64 = 3 << 16;

pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Seed for environment `index`'s own dynamics RNG.
pub fn env_seed(seed: u64, index: usize) -> u64 {
    use rand::RngCore;
    stream(seed, ENV_DYNAMICS_BASE + index as u64).next_u64()
}

pub fn action_stream(seed: u64, index: usize) -> ChaCha8Rng {
    stream(seed, ACTION_SAMPLING_BASE + index as u64)
}

/// Run seed for a relay phase-2 run (`index` 1 for COI, 2 for NOI).
pub fn relay_phase_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, RELAY_PHASE_BASE + index).next_u64()
}
