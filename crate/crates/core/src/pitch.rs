//! Log-frequency pitch axes.
//!
//! The pitched tasks use 88 semitones (A0..C8) split into four 25-cent bins each,
//! giving 352 bins. Within a semitone the bin centres sit at -37.5, -12.5, +12.5
//! and +37.5 cents from the equal-tempered pitch.
use num_traits::Float;

/// Lowest piano key, A0.
pub const PIANO_LOW: u8 = 21;
/// Highest piano key, C8.
pub const PIANO_HIGH: u8 = 108;
pub const PIANO_KEYS: usize = 88;
/// Quarter-semitone bins over the piano range.
pub const PIANO_BINS: usize = 352;

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * Float::powf(2.0, (midi - 69.0) / 12.0)
}

pub fn hz_to_midi(hz: f64) -> f64 {
    69.0 + 12.0 * Float::log2(hz / 440.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PitchAxis {
    pub lowest_midi: u8,
    pub n_semitones: usize,
    pub bins_per_semitone: usize,
}

impl PitchAxis {
    /// 352 bins of 25 cents over A0..C8.
    pub const PIANO_QUARTER: PitchAxis = PitchAxis {
        lowest_midi: PIANO_LOW,
        n_semitones: PIANO_KEYS,
        bins_per_semitone: 4,
    };
    /// 88 semitone bins over A0..C8.
    pub const PIANO_SEMITONE: PitchAxis = PitchAxis {
        lowest_midi: PIANO_LOW,
        n_semitones: PIANO_KEYS,
        bins_per_semitone: 1,
    };
    /// All 128 MIDI pitches, one bin each.
    pub const MIDI_FULL: PitchAxis = PitchAxis {
        lowest_midi: 0,
        n_semitones: 128,
        bins_per_semitone: 1,
    };

    pub fn n_bins(&self) -> usize {
        self.n_semitones * self.bins_per_semitone
    }

    /// Fractional MIDI pitch at the centre of `bin`.
    pub fn bin_midi(&self, bin: usize) -> f64 {
        let per = self.bins_per_semitone as f64;
        let sub = (bin % self.bins_per_semitone) as f64;
        self.lowest_midi as f64 + (bin / self.bins_per_semitone) as f64 + (sub - (per - 1.0) / 2.0) / per
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        midi_to_hz(self.bin_midi(bin))
    }

    /// Lower and upper band edges of `bin` in Hz (half a bin either side).
    pub fn bin_edges_hz(&self, bin: usize) -> (f64, f64) {
        let half = 0.5 / self.bins_per_semitone as f64;
        let m = self.bin_midi(bin);
        (midi_to_hz(m - half), midi_to_hz(m + half))
    }

    pub fn semitone_of_bin(&self, bin: usize) -> usize {
        bin / self.bins_per_semitone
    }

    /// Bin range covering MIDI pitch `pitch`, if it is on the axis.
    pub fn bins_of_pitch(&self, pitch: u8) -> Option<core::ops::Range<usize>> {
        let p = pitch as usize;
        let lo = self.lowest_midi as usize;
        if p < lo || p >= lo + self.n_semitones {
            return None;
        }
        let s = (p - lo) * self.bins_per_semitone;
        Some(s..s + self.bins_per_semitone)
    }

    /// Nearest bin to a fractional MIDI pitch, clamped to the axis.
    pub fn nearest_bin(&self, midi: f64) -> usize {
        let per = self.bins_per_semitone as f64;
        let x = (midi - self.lowest_midi as f64) * per + (per - 1.0) / 2.0;
        let b = Float::round(x);
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.n_bins() - 1)
        }
    }
}
