//! FFT and windowing primitives shared by the feature extractors.
mod fft;

pub use fft::{naive_dft, Fft};
pub use num_complex::Complex64;

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * Float::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Copies `len` samples starting at `start` (which may be negative or run past
/// the end) with zero padding outside the signal.
pub fn padded_slice(signal: &[f64], start: isize, len: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().take(len).enumerate() {
        let j = start + i as isize;
        *o = if j >= 0 && (j as usize) < signal.len() {
            signal[j as usize]
        } else {
            0.0
        };
    }
}
