//! Named random streams.
//!
//! Every consumer of randomness derives its own generator from the user seed
//! and a stream name, so adding a new consumer never shifts the draws seen by
//! an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Generator for the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    substream(seed, name, 0)
}

/// Generator for the `index`-th member of the stream family `name`.
pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// A derived integer seed, for APIs that take a plain `u64` seed.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, name, index).next_u64()
}
