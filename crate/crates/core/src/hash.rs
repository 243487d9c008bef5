//! Seeded 64-bit hashing shared by the cuckoo index and the Bloom baselines.
//!
//! Seeds are fixed so bucket placement, fingerprints and golden values are
//! stable across runs and platforms.

use std::sync::OnceLock;

use xxhash_rust::xxh3::xxh3_64_with_seed;

/// Seed of the primary label hash (`H` in the cuckoo placement rule).
pub const LABEL_SEED: u64 = 0x51_7c_c1_b7_27_22_0a_95;

/// Seed for Bloom filter hashing. Kept apart from [`LABEL_SEED`] so filter
/// probes are uncorrelated with cuckoo placement.
pub const BLOOM_SEED: u64 = 0x2545_f491_4f6c_dd1d;

pub const FINGERPRINT_BITS: u32 = 12;
pub const FINGERPRINT_MASK: u64 = (1 << FINGERPRINT_BITS) - 1;

#[inline]
pub fn label_hash(label: &str) -> u64 {
    xxh3_64_with_seed(label.as_bytes(), LABEL_SEED)
}

#[inline]
pub fn bloom_hash(label: &str) -> u64 {
    xxh3_64_with_seed(label.as_bytes(), BLOOM_SEED)
}

/// `H(fp)` for every 12-bit fingerprint value, computed once.
fn fingerprint_hash_table() -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=FINGERPRINT_MASK as u16)
            .map(|fp| xxh3_64_with_seed(&fp.to_le_bytes(), LABEL_SEED))
            .collect()
    })
}

/// Primary hash applied to a fingerprint's bit pattern.
#[inline]
pub fn fingerprint_hash(fp: u16) -> u64 {
    fingerprint_hash_table()[(fp as u64 & FINGERPRINT_MASK) as usize]
}
