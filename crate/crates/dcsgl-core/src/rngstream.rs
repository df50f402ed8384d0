//! Seeded, keyed RNG streams.
//!
//! Every random draw in the crate flows through a stream keyed by
//! (seed, a, b), so per-item generation is order-independent: serial and
//! parallel runs, or runs that touch items in different orders, produce
//! byte-identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent stream for item `(a, b)` under `seed`.
pub fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    // distinct ChaCha stream id guards against seed collisions after mixing
    rng.set_stream(splitmix64(a ^ b.rotate_left(32)));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a1 = stream(7, 1, 2);
        let mut a2 = stream(7, 1, 2);
        let mut b = stream(7, 1, 3);
        let x1 = a1.next_u64();
        assert_eq!(x1, a2.next_u64());
        assert_ne!(x1, b.next_u64());
    }
}
