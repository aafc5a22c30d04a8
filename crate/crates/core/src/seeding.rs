//! Counter-based hashing used for benchmark noise and seed derivation.
//!
//! Everything here is a pure function of its inputs so that results are
//! identical across platforms, thread counts and execution order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// The splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over `bytes`, finalized with [`mix64`].
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}

/// Domain-separated child seed, e.g. `derive_seed("optimizer", run_seed, 0)`.
pub fn derive_seed(domain: &str, seed: u64, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(domain.len() + 17);
    buf.extend_from_slice(domain.as_bytes());
    buf.push(0);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    hash_bytes(&buf)
}

/// Maps a hash to the open interval `(0, 1)`.
pub fn to_open_unit(h: u64) -> f64 {
    ((h >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}
