//! Counter-based random streams.
//!
//! Every observation of every replicate gets its own ChaCha stream keyed by
//! `(seed, replicate)` and selected by the observation index, so results do
//! not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random streams belonging to one replicate of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicateStreams {
    key: [u8; 32],
}

impl ReplicateStreams {
    pub fn new(seed: u64, replicate: u64) -> Self {
        let mut state = seed ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03);
        let _ = splitmix64(&mut state);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// The stream for observation `index`.
    pub fn observation(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}
