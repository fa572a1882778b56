//! Deterministic fan-out of a single root seed into per-stage seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and a stage tag plus index.
pub fn derive(parent: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(parent);
    for b in tag.bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_tags_and_indices() {
        let a = derive(7, "fold", 0);
        assert_eq!(a, derive(7, "fold", 0));
        assert_ne!(a, derive(7, "fold", 1));
        assert_ne!(a, derive(7, "cell", 0));
        assert_ne!(a, derive(8, "fold", 0));
    }
}
