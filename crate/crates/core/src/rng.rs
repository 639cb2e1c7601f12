//! Deterministic per-frame random streams.
//!
//! Every frame draws from ChaCha8 generators keyed by
//! `(seed, purpose, grid point, frame index)`, with one ChaCha stream id per
//! substream. Realizations therefore depend only on the key, never on which
//! worker thread processes the frame or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random substreams of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Phase = 0,
    Noise = 1,
    Message = 2,
    PreNoise = 3,
}

/// What a frame is used for; calibration frames never overlap measurement
/// frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Measure = 0,
    Calibrate = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub grid: u64,
    pub frame: u64,
}

impl FrameKey {
    pub fn new(seed: u64, grid: u64, frame: u64) -> Self {
        Self {
            seed,
            purpose: Purpose::Measure,
            grid,
            frame,
        }
    }

    pub fn calibration(seed: u64, grid: u64, frame: u64) -> Self {
        Self {
            purpose: Purpose::Calibrate,
            ..Self::new(seed, grid, frame)
        }
    }

    pub fn rng(&self, sub: Substream) -> ChaCha8Rng {
        let mut state = splitmix64(self.seed);
        state = splitmix64(state ^ self.purpose as u64);
        state = splitmix64(state ^ self.grid);
        state = splitmix64(state ^ self.frame);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(sub as u64);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
