//! Feature extraction for each task, producing exactly what the models consume.
use crate::features::{
    beat_informed_preprocess, compute_spectrogram, feature_stack, midi_symbolic_features, nnls_chroma, to_pitch_axis,
    AudioClip, ChromaParams, FeatureError, FeatureParams,
};
use crate::midi::MidiDocument;
use crate::models::{ModelInput, Task};
use crate::pitch::PitchAxis;
use crate::time::DRUM_HOP_S;

/// Front-end settings shared by all tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEnd {
    /// Spectrum/GC/GCoS stack for music, multi-instrument and vocal.
    pub spectral: FeatureParams,
    /// Window of the 10 ms drum spectrogram.
    pub drum_window_s: f64,
    pub chroma: ChromaParams,
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self {
            spectral: FeatureParams::default(),
            drum_window_s: 2048.0 / 44_100.0,
            chroma: ChromaParams::default(),
        }
    }
}

/// Model input for an audio task. Beat tracking works on MIDI; see [`beat_input`].
pub fn audio_input(task: Task, clip: &AudioClip, fe: &FrontEnd) -> Result<ModelInput, FeatureError> {
    match task {
        Task::Music | Task::MultiInstrument | Task::VocalPitch | Task::VocalSeg => {
            let stack = feature_stack(clip, &fe.spectral)?;
            Ok(to_pitch_axis(&stack, &PitchAxis::PIANO_QUARTER)?.into())
        }
        Task::Drum => {
            let mut spec = compute_spectrogram(clip, fe.drum_window_s, DRUM_HOP_S)?;
            let m = spec.channel_max(0);
            if m > 0.0 {
                spec.data.iter_mut().for_each(|v| *v /= m);
            }
            let informed = beat_informed_preprocess(&spec)?;
            Ok(to_pitch_axis(&informed.feature, &PitchAxis::PIANO_SEMITONE)?.into())
        }
        Task::Chord => Ok(nnls_chroma(clip, &fe.chroma)?.into()),
        Task::Beat => Err(FeatureError::Layout("beat tracking takes MIDI input")),
    }
}

pub fn beat_input(doc: &MidiDocument) -> Result<ModelInput, FeatureError> {
    Ok(midi_symbolic_features(doc)?.into())
}
