//! Bass/treble chromagram from non-negative least-squares note activations.
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use super::pitchmap::{frequency_taps, Tap};
use super::{AudioClip, FeatureError};
use crate::dsp::{hann, next_pow2, padded_slice, Fft};
use crate::pitch::{midi_to_hz, PitchAxis, PIANO_KEYS, PIANO_LOW};
use crate::time::{frames_covering, TimeGrid, CHORD_HOP_S};

/// 12 bass pitch classes followed by 12 treble pitch classes.
pub const CHROMA_BINS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChromaParams {
    pub hop_s: f64,
    /// Analysis window length as a multiple of the hop.
    pub window_hops: f64,
    /// Log-frequency bins per semitone of the fitted spectrum.
    pub bins_per_semitone: usize,
    pub partials: usize,
    /// Amplitude ratio between successive partials of a note profile.
    pub partial_decay: f64,
    pub max_iterations: usize,
    /// Stop once the residual norm changes by less than this fraction.
    pub tolerance: f64,
    /// Notes below this MIDI pitch fold into the bass chroma.
    pub bass_split: u8,
}

impl Default for ChromaParams {
    fn default() -> Self {
        Self {
            hop_s: CHORD_HOP_S,
            window_hops: 2.0,
            bins_per_semitone: 3,
            partials: 8,
            partial_decay: 0.6,
            max_iterations: 500,
            tolerance: 1e-6,
            bass_split: 60,
        }
    }
}

/// `T x 24` chromagram on the 230 ms chord grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaFeature {
    pub data: Vec<f64>,
    pub grid: TimeGrid,
    /// Frames whose solver hit the iteration cap before the stopping rule.
    pub unconverged_frames: usize,
}

impl ChromaFeature {
    pub fn frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * CHROMA_BINS..(k + 1) * CHROMA_BINS]
    }

    pub fn bass(&self, k: usize) -> &[f64] {
        &self.row(k)[..12]
    }

    pub fn treble(&self, k: usize) -> &[f64] {
        &self.row(k)[12..]
    }
}

/// Result of one projected-gradient NNLS solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dense column-major-free matrix helper: `rows x cols`, row-major.
struct Dictionary {
    rows: usize,
    cols: usize,
    gram: Vec<f64>,
    lipschitz: f64,
    d: Vec<f64>,
}

impl Dictionary {
    fn new(d: Vec<f64>, rows: usize, cols: usize) -> Self {
        let mut gram = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in i..cols {
                let s: f64 = (0..rows).map(|r| d[r * cols + i] * d[r * cols + j]).sum();
                gram[i * cols + j] = s;
                gram[j * cols + i] = s;
            }
        }
        // largest eigenvalue of the Gram matrix by power iteration
        let mut v = vec![1.0; cols];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w: Vec<f64> = (0..cols)
                .map(|i| (0..cols).map(|j| gram[i * cols + j] * v[j]).sum())
                .collect();
            let norm = Float::sqrt(w.iter().map(|x| x * x).sum::<f64>());
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        Self {
            rows,
            cols,
            gram,
            lipschitz: lambda.max(1e-12),
            d,
        }
    }

    fn residual_norm(&self, x: &[f64], s: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.rows {
            let row = &self.d[r * self.cols..(r + 1) * self.cols];
            let y: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += (y - s[r]) * (y - s[r]);
        }
        Float::sqrt(acc)
    }
}

/// Solves `min ||D x - s||_2` subject to `x >= 0` by projected gradient descent
/// with step `1 / ||D^T D||`, starting from zero. Stops when the residual norm
/// changes by less than `tolerance` relative to its value, or after
/// `max_iterations`, returning the best iterate seen.
pub fn nnls_solve(d: &[f64], rows: usize, cols: usize, s: &[f64], max_iterations: usize, tolerance: f64) -> NnlsSolution {
    let dict = Dictionary::new(d.to_vec(), rows, cols);
    solve_with(&dict, s, max_iterations, tolerance)
}

fn solve_with(dict: &Dictionary, s: &[f64], max_iterations: usize, tolerance: f64) -> NnlsSolution {
    let cols = dict.cols;
    let dts: Vec<f64> = (0..cols)
        .map(|j| (0..dict.rows).map(|r| dict.d[r * cols + j] * s[r]).sum())
        .collect();
    let mut x = vec![0.0; cols];
    let mut prev = dict.residual_norm(&x, s);
    let mut best = (x.clone(), prev);
    if prev == 0.0 {
        return NnlsSolution {
            x,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let step = 1.0 / dict.lipschitz;
    for it in 1..=max_iterations {
        let grad: Vec<f64> = (0..cols)
            .map(|i| {
                let g = &dict.gram[i * cols..(i + 1) * cols];
                g.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - dts[i]
            })
            .collect();
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi = (*xi - step * gi).max(0.0);
        }
        let r = dict.residual_norm(&x, s);
        if r < best.1 {
            best = (x.clone(), r);
        }
        if Float::abs(prev - r) <= tolerance * r.max(f64::MIN_POSITIVE) {
            return NnlsSolution {
                x: best.0,
                residual: best.1,
                iterations: it,
                converged: true,
            };
        }
        prev = r;
    }
    NnlsSolution {
        x: best.0,
        residual: best.1,
        iterations: max_iterations,
        converged: false,
    }
}

/// Idealized harmonic profile of every piano key over the log-frequency axis.
fn note_dictionary(axis: &PitchAxis, params: &ChromaParams) -> Vec<f64> {
    let rows = axis.n_bins();
    let per = axis.bins_per_semitone as f64;
    let mut d = vec![0.0; rows * PIANO_KEYS];
    for n in 0..PIANO_KEYS {
        let f0 = midi_to_hz((PIANO_LOW as usize + n) as f64);
        let mut amp = 1.0;
        for h in 1..=params.partials {
            let m = crate::pitch::hz_to_midi(f0 * h as f64);
            // fractional bin position, then a one-bin triangular spread
            let pos = (m - axis.lowest_midi as f64) * per + (per - 1.0) / 2.0;
            let lo = Float::floor(pos);
            for (b, w) in [(lo, 1.0 - (pos - lo)), (lo + 1.0, pos - lo)] {
                if b >= 0.0 && (b as usize) < rows && w > 0.0 {
                    d[b as usize * PIANO_KEYS + n] += amp * w;
                }
            }
            amp *= params.partial_decay;
        }
    }
    d
}

/// NNLS chromagram on the 230 ms chord grid.
///
/// Each frame's magnitude spectrum is resampled to a log-frequency axis
/// (`bins_per_semitone` bins over A0..C8) and explained as a non-negative
/// combination of harmonic note profiles. Note activations below `bass_split`
/// fold into the first 12 (bass) pitch classes, the rest into the last 12.
pub fn nnls_chroma(clip: &AudioClip, params: &ChromaParams) -> Result<ChromaFeature, FeatureError> {
    let sr = clip.sample_rate() as f64;
    if clip.duration_s() + 1e-9 < params.hop_s {
        return Err(FeatureError::TooShort {
            got_s: clip.duration_s(),
            need_s: params.hop_s,
        });
    }
    let hop = Float::round(params.hop_s * sr) as usize;
    let n_win = Float::round(params.window_hops * hop as f64) as usize;
    let n_fft = next_pow2(n_win);
    let frames = frames_covering(hop as f64, clip.samples().len() as f64);
    let axis = PitchAxis {
        lowest_midi: PIANO_LOW,
        n_semitones: PIANO_KEYS,
        bins_per_semitone: params.bins_per_semitone,
    };
    let taps: Vec<Tap> = frequency_taps(&axis, n_fft / 2 + 1, sr / n_fft as f64);
    let dict = Dictionary::new(note_dictionary(&axis, params), axis.n_bins(), PIANO_KEYS);
    let window = hann(n_win);
    let norm = 2.0 / window.iter().sum::<f64>();
    let fft = Fft::new(n_fft);
    let mut frame = vec![0.0; n_win];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut mag = vec![0.0; n_fft / 2 + 1];
    let mut data = vec![0.0; frames * CHROMA_BINS];
    let mut unconverged = 0;
    for k in 0..frames {
        let start = (k * hop + hop / 2) as isize - (n_win / 2) as isize;
        padded_slice(clip.samples(), start, n_win, &mut frame);
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(if i < n_win { frame[i] * window[i] } else { 0.0 }, 0.0);
        }
        fft.forward(&mut buf);
        for (m, c) in mag.iter_mut().zip(&buf) {
            *m = c.norm() * norm;
        }
        let s: Vec<f64> = taps.iter().map(|t| t.read(&mag)).collect();
        let sol = solve_with(&dict, &s, params.max_iterations, params.tolerance);
        if !sol.converged {
            unconverged += 1;
        }
        let row = &mut data[k * CHROMA_BINS..(k + 1) * CHROMA_BINS];
        for (n, a) in sol.x.iter().enumerate() {
            let midi = PIANO_LOW as usize + n;
            let pc = midi % 12;
            let off = if midi < params.bass_split as usize { 0 } else { 12 };
            row[off + pc] += a;
        }
    }
    if unconverged > 0 {
        log::debug!("nnls chroma: {unconverged} of {frames} frames hit the iteration cap");
    }
    Ok(ChromaFeature {
        data,
        grid: TimeGrid::new(hop as f64 / sr, frames),
        unconverged_frames: unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn tones(midis: &[f64], dur: f64, sr: u32) -> AudioClip {
        let n = (dur * sr as f64) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr as f64;
                    midis.iter().map(|&m| 0.3 * Float::sin(2.0 * PI * midi_to_hz(m) * t)).sum()
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn c_major_triad_lands_on_c_e_g() {
        let clip = tones(&[60.0, 64.0, 67.0], 1.0, 44_100);
        let ch = nnls_chroma(&clip, &ChromaParams::default()).unwrap();
        assert_eq!(ch.frames(), 5);
        let mut treble = [0.0; 12];
        for k in 1..ch.frames() - 1 {
            for (t, v) in treble.iter_mut().zip(ch.treble(k)) {
                *t += v;
            }
        }
        let total: f64 = treble.iter().sum();
        let ceg = treble[0] + treble[4] + treble[7];
        assert!(total > 0.0);
        assert!(ceg / total >= 0.8, "C/E/G share {}", ceg / total);
    }

    #[test]
    fn low_c_goes_to_bass_chroma() {
        let clip = tones(&[36.0], 1.0, 44_100);
        let ch = nnls_chroma(&clip, &ChromaParams::default()).unwrap();
        let k = 2;
        let bass = ch.bass(k);
        let total: f64 = bass.iter().sum();
        assert!(bass[0] / total > 0.6, "bass chroma {bass:?}");
        assert!(bass[0] > ch.treble(k).iter().sum::<f64>());
    }

    #[test]
    fn silence_gives_zero_chroma() {
        let clip = AudioClip::silence(0.5, 22_050);
        let ch = nnls_chroma(&clip, &ChromaParams::default()).unwrap();
        assert!(ch.data.iter().all(|&v| v == 0.0));
        assert_eq!(ch.unconverged_frames, 0);
    }

    #[test]
    fn too_short_clip_is_rejected() {
        let clip = AudioClip::silence(0.1, 22_050);
        assert!(matches!(
            nnls_chroma(&clip, &ChromaParams::default()),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn nnls_is_feasible_and_beats_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (rows, cols) = (12, 6);
            let d: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: Vec<f64> = (0..rows).map(|_| rng.random_range(-0.5..1.0)).collect();
            let sol = nnls_solve(&d, rows, cols, &s, 500, 1e-6);
            assert!(sol.x.iter().all(|&v| v >= 0.0));
            let zero = Float::sqrt(s.iter().map(|v| v * v).sum::<f64>());
            assert!(sol.residual <= zero + 1e-12);
        }
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let d = [1.0, 0.999, 0.999, 1.0];
        let s = [1.0, 0.0];
        let sol = nnls_solve(&d, 2, 2, &s, 3, 1e-12);
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
    }
}
