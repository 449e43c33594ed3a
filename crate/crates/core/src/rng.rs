//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by
//! `(master seed, purpose, index, window)`. ChaCha is counter based, so a
//! stream depends only on its key and never on which thread asked for it or
//! in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 1,
    InitialSpread = 2,
    Observation = 3,
    Resample = 4,
    RankTies = 5,
    SubSeed = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Returns the generator for one `(seed, purpose, index, window)` key.
pub fn stream(seed: u64, purpose: Purpose, index: u64, window: u64) -> ChaCha8Rng {
    let mut state = seed ^ (purpose as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    // Mix index and window into the 64-bit stream id.
    let mut id_state = index.wrapping_mul(0xE703_7ED1_A0B4_28DB) ^ window;
    rng.set_stream(splitmix64(&mut id_state) ^ index.rotate_left(32));
    rng
}

/// Derives an independent 64-bit seed, e.g. one per grid cell or repeated run.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, Purpose::SubSeed, index, 0).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_key_same_stream() {
        let a: Vec<u64> = (0..8).map({
            let mut r = stream(7, Purpose::Brownian, 3, 2);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = stream(7, Purpose::Brownian, 3, 2);
            move |_| r.next_u64()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn keys_are_separated() {
        let first = |seed, p, i, w| stream(seed, p, i, w).next_u64();
        let base = first(7, Purpose::Brownian, 3, 2);
        assert_ne!(base, first(8, Purpose::Brownian, 3, 2));
        assert_ne!(base, first(7, Purpose::Observation, 3, 2));
        assert_ne!(base, first(7, Purpose::Brownian, 4, 2));
        assert_ne!(base, first(7, Purpose::Brownian, 3, 3));
        assert_ne!(first(7, Purpose::Brownian, 1, 0), first(7, Purpose::Brownian, 0, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
