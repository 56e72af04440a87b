//! Deterministic RNG stream derivation.
//!
//! Every replication of every experiment owns a stream derived from
//! (base seed, tag, index), so results are independent of scheduling and
//! identical across runs.

use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent substream for (seed, tag, index).
pub fn substream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let a = splitmix64(seed ^ splitmix64(tag));
    let b = splitmix64(a ^ splitmix64(index));
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&b.to_le_bytes());
    key[8..16].copy_from_slice(&splitmix64(b).to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(b ^ 0xa5a5_a5a5_a5a5_a5a5).to_le_bytes());
    key[24..].copy_from_slice(&splitmix64(b ^ 0x5a5a_5a5a_5a5a_5a5a).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_deterministic_and_distinct() {
        let mut a = substream(1, 2, 3);
        let mut b = substream(1, 2, 3);
        assert_eq!(a.next_u64(), b.next_u64(), "same key must give same stream");
        let mut c = substream(1, 2, 4);
        let mut d = substream(1, 3, 3);
        let x = substream(1, 2, 3).next_u64();
        assert_ne!(x, c.next_u64(), "index must separate streams");
        assert_ne!(x, d.next_u64(), "tag must separate streams");
    }
}
