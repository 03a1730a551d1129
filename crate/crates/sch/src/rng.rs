//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha12 stream whose 256-bit
//! key is expanded from a `(global seed, path id, step index)` triple by a
//! SplitMix64 chain. Streams are stateless with respect to one another:
//! sampling step 17 of path 3 never depends on whether step 16 was sampled,
//! so trajectories parallelize freely and checkpointed runs resume exactly.
//! Within one stream the consumers draw values in a fixed (node) order,
//! which makes results bitwise-reproducible across runs and thread counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Key of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub path: u64,
    pub step: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic ChaCha12 stream for the key.
pub fn stream_rng(key: StreamKey) -> ChaCha12Rng {
    let mut state = key.seed;
    let a = splitmix64(&mut state);
    state ^= key.path.wrapping_mul(0xA076_1D64_78BD_642F);
    let b = splitmix64(&mut state);
    state ^= key.step.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&c.to_le_bytes());
    seed[24..32].copy_from_slice(&d.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_keys_reproduce_bitwise() {
        let key = StreamKey { seed: 42, path: 3, step: 17 };
        let a: Vec<u64> = stream_rng(key).random_iter().take(32).collect();
        let b: Vec<u64> = stream_rng(key).random_iter().take(32).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_keys_decorrelate() {
        let base = StreamKey { seed: 42, path: 3, step: 17 };
        let a: Vec<u64> = stream_rng(base).random_iter().take(8).collect();
        for other in [
            StreamKey { seed: 43, ..base },
            StreamKey { path: 4, ..base },
            StreamKey { step: 18, ..base },
        ] {
            let b: Vec<u64> = stream_rng(other).random_iter().take(8).collect();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn streams_do_not_depend_on_consumption_order() {
        let k1 = StreamKey { seed: 1, path: 0, step: 1 };
        let k2 = StreamKey { seed: 1, path: 0, step: 2 };
        let mut r1 = stream_rng(k1);
        let first: f64 = r1.random();
        // exhaust some of stream 1, then open stream 2
        for _ in 0..100 {
            let _: f64 = r1.random();
        }
        let v1: f64 = stream_rng(k2).random();
        // fresh order: open stream 2 without touching stream 1
        let v2: f64 = stream_rng(k2).random();
        assert_eq!(v1, v2);
        let again: f64 = stream_rng(k1).random();
        assert_eq!(first, again);
    }
}
