//! Keyed random streams.
//!
//! Every random decision in an instance is addressed by `(seed, purpose, row, column)`.
//! A row owns one ChaCha8 stream keyed by `(seed, purpose, row)`; the draw for column
//! `j` is the `j`-th `u64` of that stream. Generators always consume one word per column
//! in column order, so a draw never depends on which other pairs exist or on the order
//! in which callers visit arcs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    BaseArcs = 1,
    RepairOut = 2,
    RepairIn = 3,
    Perturb = 4,
    Cost = 5,
    InsertionOrder = 6,
}

fn key(seed: u64, purpose: Purpose, index: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    k[0..8].copy_from_slice(&seed.to_le_bytes());
    k[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    k[16..24].copy_from_slice(&index.to_le_bytes());
    k[24..32].copy_from_slice(b"patchkit");
    k
}

/// The stream for one row (or one vertex, for vertex-level purposes).
pub fn stream(seed: u64, purpose: Purpose, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key(seed, purpose, index as u64))
}

/// Random-access form of the per-pair draw: word `j` of the row stream.
pub fn pair_u64(seed: u64, purpose: Purpose, i: usize, j: usize) -> u64 {
    let mut rng = stream(seed, purpose, i);
    rng.set_word_pos(2 * j as u128);
    rng.next_u64()
}

/// Maps a `u64` onto `[0, 1)` using its top 53 bits.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// EXP(1) by inversion; one word per draw keeps the stream aligned with column indices.
#[inline]
pub fn exp1_f64(word: u64) -> f64 {
    -(-unit_f64(word)).ln_1p()
}
