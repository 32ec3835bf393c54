//! Deterministic random streams.
//!
//! Every random decision in a run is drawn from a stream derived by hashing
//! the root seed together with a list of name parts (model, topic, purpose,
//! index). Streams are independent of each other and of execution order, so
//! parallel workers and resumed runs see identical randomness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes the root seed and name parts into 32 bytes of key material.
/// Parts are separated by a byte that cannot appear in UTF-8 text, so
/// ("ab", "c") and ("a", "bc") derive different streams.
pub fn derive_seed(root: u64, parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for part in parts {
        hasher.update([0xff]);
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

/// A named random stream.
pub fn substream(root: u64, parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(root, parts))
}

/// A named stream collapsed to a single u64, for seeding downstream
/// components that take plain integer seeds.
pub fn substream_seed(root: u64, parts: &[&str]) -> u64 {
    let bytes = derive_seed(root, parts);
    u64::from_le_bytes(bytes[..8].try_into().expect("slice is 8 bytes"))
}

/// A stream for the `index`-th item of a named family. Used where each
/// item (for example one permutation resample) needs its own generator so
/// items can run in parallel in any order.
pub fn indexed_rng(root: u64, parts: &[&str], index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(derive_seed(root, parts));
    hasher.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
