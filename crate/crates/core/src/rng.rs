//! Counter-based substreams.
//!
//! Stream layout: ChaCha8 with key = `seed` as little-endian bytes 0..8 (the
//! other 24 key bytes zero), stream id = trial index, and draw `k` taken from
//! the 64-bit word at block position `2k`. A uniform is `(word >> 11) * 2^-53`.
//! Any ChaCha8 implementation with the same layout reproduces the streams.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Substream {
    rng: ChaCha8Rng,
    position: u64,
}

impl Substream {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trial);
        Substream { rng, position: 0 }
    }

    /// Jumps to draw index `position`.
    pub fn at(seed: u64, trial: u64, position: u64) -> Self {
        let mut s = Self::new(seed, trial);
        s.seek(position);
        s
    }

    pub fn seek(&mut self, position: u64) {
        self.rng.set_word_pos(2 * position as u128);
        self.position = position;
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_u64(&mut self) -> u64 {
        self.position += 1;
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
