//! Fixtures shared by the criterion benches.

use sikam_core::complexity::random_magnitudes;
use sikam_core::MagSpectrogram;

/// Log bins at the default 44.1 kHz transform settings.
pub const BINS: usize = 232;
pub const K: usize = 8;

/// Random magnitudes plus the full candidate list.
pub fn fixture(frames: usize, seed: u64) -> (MagSpectrogram, Vec<usize>) {
    (random_magnitudes(BINS, frames, seed), (0..frames).collect())
}
