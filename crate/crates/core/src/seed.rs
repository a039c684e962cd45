//! Root-seed expansion.
//!
//! Every random stream in the pipeline is keyed by `(root, purpose, index)`:
//! the first eight bytes (little-endian) of
//! `SHA-256("maepose-seed" ‖ root_le ‖ purpose ‖ 0x00 ‖ index_le)`.
//! Changing one key never perturbs streams keyed differently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive(root: u64, purpose: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"maepose-seed");
    h.update(root.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0u8]);
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng(root: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, purpose, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_independent() {
        let a = derive(42, "split", 0);
        assert_eq!(a, derive(42, "split", 0));
        assert_ne!(a, derive(42, "split", 1));
        assert_ne!(a, derive(43, "split", 0));
        assert_ne!(a, derive(42, "mask", 0));
        // purpose/index boundary is unambiguous
        assert_ne!(derive(1, "a", 0), derive(1, "a\0", 0));
    }
}
