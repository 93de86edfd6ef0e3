//! Deterministic seeded random streams.
//!
//! Every randomized step draws from its own stream, keyed by a global seed,
//! a command name, an index and a label:
//!
//! ```text
//! stream_seed = hash64(global_seed, command, index, label)
//! ```
//!
//! `hash64` is FNV-1a over the little-endian bytes of `global_seed`, the UTF-8
//! bytes of `command`, a `0xff` separator, the little-endian bytes of `index`,
//! the UTF-8 bytes of `label`, followed by the splitmix64 finalizer. External
//! tools can reproduce any stream from these four values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of one named stream.
pub fn derive_seed(global_seed: u64, command: &str, index: u64, label: &str) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &global_seed.to_le_bytes());
    h = fnv1a(h, command.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &index.to_le_bytes());
    h = fnv1a(h, label.as_bytes());
    splitmix64(h)
}

/// Opens the stream `(seed, label)` with index 0 under the library command scope.
pub fn stream(seed: u64, label: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, "ivbounds", 0, label))
}

/// Opens an indexed stream, for per-item parallel work.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, "ivbounds", index, label))
}
