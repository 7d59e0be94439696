//! Input representations for every task.
//!
//! Pitched tasks consume a three-channel stack of magnitude spectrogram,
//! generalized cepstrum (GC) and generalized cepstrum of spectrum (GCoS). Chord
//! recognition consumes a 24-bin bass/treble NNLS chromagram, beat tracking a
//! symbolic piano-roll feature, and drum transcription a spectrogram with an
//! appended beat-phase channel.
mod beat;
mod chroma;
mod pitchmap;
mod spectral;
mod symbolic;

pub use beat::{beat_informed_preprocess, estimate_beats, BeatInformed, BeatTrack};
pub use chroma::{nnls_chroma, nnls_solve, ChromaFeature, ChromaParams, NnlsSolution, CHROMA_BINS};
pub use pitchmap::to_pitch_axis;
pub use spectral::{compute_spectrogram, feature_stack, gcos, generalized_cepstrum, log_compress, FeatureParams};
pub use symbolic::{midi_symbolic_features, SymbolicFeature, IOI_CLIP_S, SYMBOLIC_DIM};

use alloc::vec;
use alloc::vec::Vec;

use crate::pitch::PitchAxis;
use crate::time::TimeGrid;

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("audio clip is empty")]
    EmptyClip,
    #[error("audio sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid parameter {name}: {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("clip of {got_s} s is shorter than the {need_s} s minimum")]
    TooShort { got_s: f64, need_s: f64 },
    #[error("document has no notes")]
    NoNotes,
    #[error("feature is not in the expected layout: {0}")]
    Layout(&'static str),
}

/// Mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, FeatureError> {
        if samples.is_empty() {
            return Err(FeatureError::EmptyClip);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(FeatureError::NonFinite { index });
        }
        if sample_rate == 0 {
            return Err(FeatureError::Parameter {
                name: "sample_rate",
                value: 0.0,
            });
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(duration_s: f64, sample_rate: u32) -> Self {
        let n = ((duration_s * sample_rate as f64) as usize).max(1);
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Meaning of one feature channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Spectrogram,
    GeneralizedCepstrum,
    Gcos,
    BeatPhase,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Spectrogram => "spectrogram",
            ChannelKind::GeneralizedCepstrum => "GC",
            ChannelKind::Gcos => "GCoS",
            ChannelKind::BeatPhase => "beat_phase",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ChannelKind::Spectrogram,
            ChannelKind::GeneralizedCepstrum,
            ChannelKind::Gcos,
            ChannelKind::BeatPhase,
        ]
        .into_iter()
        .find(|c| c.name() == name)
    }
}

/// What the bin axis of a [`SpectralFeature`] indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinAxis {
    /// DFT bins `0..=n_fft/2`: frequency `k * sr / n_fft` for spectral channels,
    /// lag `k / sr` seconds for cepstral channels.
    Linear { n_fft: usize },
    /// Log-frequency pitch bins.
    Pitch(PitchAxis),
}

/// `frames x bins x channels` non-negative feature, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeature {
    pub data: Vec<f64>,
    pub bins: usize,
    pub channels: Vec<ChannelKind>,
    pub grid: TimeGrid,
    pub axis: BinAxis,
    pub sample_rate: u32,
}

impl SpectralFeature {
    pub fn frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames(), self.bins, self.channels.len()]
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> f64 {
        self.data[(frame * self.bins + bin) * self.channels.len() + channel]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, v: f64) {
        let c = self.channels.len();
        self.data[(frame * self.bins + bin) * c + channel] = v;
    }

    pub fn channel_index(&self, kind: ChannelKind) -> Option<usize> {
        self.channels.iter().position(|&c| c == kind)
    }

    /// One channel as a `frames x bins` matrix.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        let c = self.channels.len();
        self.data.iter().skip(channel).step_by(c).copied().collect()
    }

    pub fn channel_max(&self, channel: usize) -> f64 {
        let c = self.channels.len();
        self.data.iter().skip(channel).step_by(c).copied().fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.data.len() == self.grid.n_frames * self.bins * self.channels.len()
            && self.data.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Linear bin frequency in Hz (only meaningful for `BinAxis::Linear`).
    pub fn bin_hz(&self, bin: usize) -> f64 {
        match self.axis {
            BinAxis::Linear { n_fft } => bin as f64 * self.sample_rate as f64 / n_fft as f64,
            BinAxis::Pitch(ax) => ax.bin_hz(bin),
        }
    }

    pub(crate) fn from_channels(
        parts: &[(&[f64], ChannelKind)],
        bins: usize,
        grid: TimeGrid,
        axis: BinAxis,
        sample_rate: u32,
    ) -> Self {
        let nc = parts.len();
        let mut data = vec![0.0; grid.n_frames * bins * nc];
        for (c, (vals, _)) in parts.iter().enumerate() {
            for (i, v) in vals.iter().enumerate() {
                data[i * nc + c] = *v;
            }
        }
        Self {
            data,
            bins,
            channels: parts.iter().map(|p| p.1).collect(),
            grid,
            axis,
            sample_rate,
        }
    }
}
