//! Seed derivation. Every random draw in the workspace starts from one root
//! seed; components derive independent streams by label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and a label such as `"llm.init"`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    splitmix(root ^ splitmix(fnv1a(label.as_bytes())))
}

pub fn derive_rng(root: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, label))
}
