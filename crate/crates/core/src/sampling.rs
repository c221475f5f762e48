//! Seeded sampling shared by every stochastic step.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`, so a
//! seed reproduces the same draw on any machine. Draws are keyed on
//! example ids rather than file positions: candidates are sorted by id
//! before sampling, which makes the chosen id set independent of the
//! order the pool was read in.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator, recorded in provenance.
pub const RNG_ALGORITHM: &str = "chacha8";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `n` distinct positions from `keys` without replacement.
///
/// Returned positions index into `keys` and are in draw order.
pub fn sample_keyed<K: Ord>(keys: &[K], n: usize, seed: u64) -> Vec<usize> {
    assert!(n <= keys.len(), "sample larger than population");
    let mut by_key: Vec<usize> = (0..keys.len()).collect();
    by_key.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut rng = rng(seed);
    index::sample(&mut rng, keys.len(), n)
        .into_iter()
        .map(|i| by_key[i])
        .collect()
}

/// Independent sub-seed for a named stream derived from `seed`.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let d = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(stream.as_bytes()).finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

/// A full seeded permutation of `keys`, keyed the same way as [`sample_keyed`].
pub fn permutation_keyed<K: Ord>(keys: &[K], seed: u64) -> Vec<usize> {
    sample_keyed(keys, keys.len(), seed)
}
