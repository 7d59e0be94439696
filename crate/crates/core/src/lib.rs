//! Allocation-only core of the tunescribe transcription workbench.
//!
//! Everything here is pure computation over in-memory values: the note/chord/beat
//! data model with Standard MIDI File encoding, audio and symbolic feature
//! extraction, small trainable networks with a reverse-mode autodiff tape,
//! decoders that turn activations into notes, evaluation metrics, and an additive
//! synthesizer. File IO, configuration and the command line live in the
//! `tunescribe` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod decode;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod frontend;
pub mod midi;
pub mod models;
pub mod nn;
pub mod pitch;
pub mod synth;
pub mod synthetic;
pub mod tensor;
pub mod time;

pub use midi::{
    BeatAnnotation, ChordLabel, ChordSegment, DrumClass, DrumEvent, Instrument, MidiDocument,
    NoteEvent, NoteStream,
};
pub use pitch::PitchAxis;
pub use tensor::ActivationTensor;
pub use time::TimeGrid;
