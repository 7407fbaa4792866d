//! Per-path random streams.
//!
//! Each trajectory gets its own ChaCha8 stream: the key is the master seed and
//! the 64-bit stream id is the path index, so any path can be regenerated in
//! isolation and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

pub fn path_rng(master_seed: u64, path_index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// Seed recorded in manifests for a path: `master_seed ⊕ path_index`.
pub fn path_seed_label(master_seed: u64, path_index: u64) -> u64 {
    master_seed ^ path_index
}
