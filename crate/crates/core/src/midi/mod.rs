//! Note, drum, chord and beat data model plus Standard MIDI File encoding.
mod roll;
mod smf;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

pub use roll::{midi_to_pianoroll, render_ideal_activations, PianoRoll, ROLL_ACTIVATION, ROLL_ONSET};
pub use smf::{read_midi, read_midi_with_report, write_midi, MidiError, ReadReport};

use crate::pitch::{PIANO_HIGH, PIANO_LOW};

/// Velocity given to transcribed notes when no model supplies one.
pub const DEFAULT_VELOCITY: u8 = 80;
/// MIDI channel reserved for percussion (zero based).
pub const DRUM_CHANNEL: u8 = 9;

/// Instrument vocabulary. The first eleven entries are the multi-instrument
/// output channels, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Instrument {
    Piano,
    Violin,
    Viola,
    Cello,
    Flute,
    Horn,
    Bassoon,
    Clarinet,
    Harpsichord,
    Contrabass,
    Oboe,
    Vocal,
    Drums,
    /// Any other General MIDI program.
    Program(u8),
}

impl Instrument {
    /// Multi-instrument output channels in order.
    pub const ENSEMBLE: [Instrument; 11] = [
        Instrument::Piano,
        Instrument::Violin,
        Instrument::Viola,
        Instrument::Cello,
        Instrument::Flute,
        Instrument::Horn,
        Instrument::Bassoon,
        Instrument::Clarinet,
        Instrument::Harpsichord,
        Instrument::Contrabass,
        Instrument::Oboe,
    ];

    /// General MIDI program number (zero based).
    pub fn program(self) -> u8 {
        match self {
            Instrument::Piano => 0,
            Instrument::Harpsichord => 6,
            Instrument::Violin => 40,
            Instrument::Viola => 41,
            Instrument::Cello => 42,
            Instrument::Contrabass => 43,
            Instrument::Vocal => 53,
            Instrument::Horn => 60,
            Instrument::Oboe => 68,
            Instrument::Bassoon => 70,
            Instrument::Clarinet => 71,
            Instrument::Flute => 73,
            Instrument::Drums => 0,
            Instrument::Program(p) => p,
        }
    }

    pub fn from_program(program: u8) -> Self {
        match program {
            0 => Instrument::Piano,
            6 => Instrument::Harpsichord,
            40 => Instrument::Violin,
            41 => Instrument::Viola,
            42 => Instrument::Cello,
            43 => Instrument::Contrabass,
            53 => Instrument::Vocal,
            60 => Instrument::Horn,
            68 => Instrument::Oboe,
            70 => Instrument::Bassoon,
            71 => Instrument::Clarinet,
            73 => Instrument::Flute,
            p => Instrument::Program(p),
        }
    }

    pub fn ensemble_index(self) -> Option<usize> {
        Self::ENSEMBLE.iter().position(|&i| i == self)
    }

    pub fn is_drums(self) -> bool {
        self == Instrument::Drums
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Instrument::Piano => "piano",
            Instrument::Violin => "violin",
            Instrument::Viola => "viola",
            Instrument::Cello => "cello",
            Instrument::Flute => "flute",
            Instrument::Horn => "horn",
            Instrument::Bassoon => "bassoon",
            Instrument::Clarinet => "clarinet",
            Instrument::Harpsichord => "harpsichord",
            Instrument::Contrabass => "contrabass",
            Instrument::Oboe => "oboe",
            Instrument::Vocal => "vocal",
            Instrument::Drums => "drums",
            Instrument::Program(p) => return write!(f, "program{p}"),
        };
        f.write_str(name)
    }
}

/// One transcribed note.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteEvent {
    pub onset_s: f64,
    pub offset_s: f64,
    pub pitch: u8,
    pub velocity: u8,
    pub instrument: Instrument,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoteError {
    #[error("note offset {offset} s is not after onset {onset} s")]
    EmptyInterval { onset: f64, offset: f64 },
    #[error("pitch {0} outside the piano range 21..=108")]
    PitchRange(u8),
    #[error("velocity {0} outside 1..=127")]
    Velocity(u8),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("onset {0} s is negative or not finite")]
    Onset(f64),
}

impl NoteEvent {
    /// Note with default velocity and full confidence.
    pub fn new(onset_s: f64, offset_s: f64, pitch: u8, instrument: Instrument) -> Self {
        Self {
            onset_s,
            offset_s,
            pitch,
            velocity: DEFAULT_VELOCITY,
            instrument,
            confidence: 1.0,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }

    pub fn validate(&self) -> Result<(), NoteError> {
        if !(self.onset_s >= 0.0 && self.onset_s.is_finite()) {
            return Err(NoteError::Onset(self.onset_s));
        }
        if !(self.offset_s > self.onset_s) {
            return Err(NoteError::EmptyInterval {
                onset: self.onset_s,
                offset: self.offset_s,
            });
        }
        if !(PIANO_LOW..=PIANO_HIGH).contains(&self.pitch) {
            return Err(NoteError::PitchRange(self.pitch));
        }
        if !(1..=127).contains(&self.velocity) {
            return Err(NoteError::Velocity(self.velocity));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(NoteError::Confidence(self.confidence));
        }
        Ok(())
    }
}

/// Notes of one instrument, sorted by onset, without same-pitch overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteStream {
    pub instrument: Instrument,
    pub notes: Vec<NoteEvent>,
}

impl NoteStream {
    /// Builds a stream, sorting by onset and truncating any note that is still
    /// sounding when a later note of the same pitch starts.
    pub fn new(instrument: Instrument, notes: Vec<NoteEvent>) -> Self {
        let mut s = Self { instrument, notes };
        s.normalize();
        s
    }

    pub fn normalize(&mut self) {
        sort_notes(&mut self.notes);
        truncate_same_pitch_overlaps(&mut self.notes);
    }

    pub fn has_same_pitch_overlap(&self) -> bool {
        let mut last_off = [f64::NEG_INFINITY; 128];
        let mut sorted = self.notes.clone();
        sort_notes(&mut sorted);
        for n in &sorted {
            let p = n.pitch as usize & 127;
            if n.onset_s < last_off[p] - 1e-12 {
                return true;
            }
            last_off[p] = n.offset_s;
        }
        false
    }
}

pub(crate) fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| {
        a.onset_s
            .total_cmp(&b.onset_s)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.offset_s.total_cmp(&b.offset_s))
    });
}

/// Last-on-wins: a note that is sounding when another note of the same pitch
/// starts ends there. Notes left with no duration are removed. Input must be
/// sorted by onset.
pub(crate) fn truncate_same_pitch_overlaps(notes: &mut Vec<NoteEvent>) {
    let mut sounding: [Option<usize>; 128] = [None; 128];
    for i in 0..notes.len() {
        let p = notes[i].pitch as usize & 127;
        if let Some(j) = sounding[p] {
            if notes[j].offset_s > notes[i].onset_s {
                notes[j].offset_s = notes[i].onset_s;
            }
        }
        sounding[p] = Some(i);
    }
    notes.retain(|n| n.offset_s > n.onset_s);
}

/// A whole transcription: one stream per instrument plus a single tempo.
#[derive(Debug, Clone, PartialEq)]
pub struct MidiDocument {
    pub streams: Vec<NoteStream>,
    pub tempo_bpm: f64,
    pub ticks_per_quarter: u16,
}

impl Default for MidiDocument {
    fn default() -> Self {
        Self {
            streams: Vec::new(),
            tempo_bpm: 120.0,
            ticks_per_quarter: 480,
        }
    }
}

impl MidiDocument {
    pub fn from_streams(streams: Vec<NoteStream>) -> Self {
        Self {
            streams,
            ..Self::default()
        }
    }

    pub fn single(instrument: Instrument, notes: Vec<NoteEvent>) -> Self {
        Self::from_streams(alloc::vec![NoteStream::new(instrument, notes)])
    }

    pub fn note_count(&self) -> usize {
        self.streams.iter().map(|s| s.notes.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.note_count() == 0
    }

    /// Every note of every stream, sorted by onset.
    pub fn all_notes(&self) -> Vec<NoteEvent> {
        let mut v: Vec<NoteEvent> = self.streams.iter().flat_map(|s| s.notes.iter().cloned()).collect();
        sort_notes(&mut v);
        v
    }

    /// End of the last note, zero for an empty document.
    pub fn end_s(&self) -> f64 {
        self.streams
            .iter()
            .flat_map(|s| s.notes.iter())
            .map(|n| n.offset_s)
            .fold(0.0, f64::max)
    }

    /// Seconds per MIDI tick at the document tempo.
    pub fn seconds_per_tick(&self) -> f64 {
        60.0 / (self.tempo_bpm * self.ticks_per_quarter as f64)
    }
}

/// Percussion classes. The default vocabulary is kick, snare and hi-hat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DrumClass {
    Kick,
    Snare,
    HiHat,
}

impl DrumClass {
    pub const ALL: [DrumClass; 3] = [DrumClass::Kick, DrumClass::Snare, DrumClass::HiHat];

    /// General MIDI percussion key.
    pub fn gm_key(self) -> u8 {
        match self {
            DrumClass::Kick => 36,
            DrumClass::Snare => 38,
            DrumClass::HiHat => 42,
        }
    }

    pub fn from_gm_key(key: u8) -> Option<Self> {
        match key {
            35 | 36 => Some(DrumClass::Kick),
            37..=40 => Some(DrumClass::Snare),
            42 | 44 | 46 => Some(DrumClass::HiHat),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DrumClass::Kick => "kick",
            DrumClass::Snare => "snare",
            DrumClass::HiHat => "hihat",
        }
    }
}

/// One percussive onset on the 10 ms drum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DrumEvent {
    pub onset_s: f64,
    pub drum_class: DrumClass,
    pub confidence: f64,
}

impl DrumEvent {
    /// Drum events as notes on the percussion stream (fixed 50 ms length).
    pub fn to_note(&self) -> NoteEvent {
        NoteEvent {
            onset_s: self.onset_s,
            offset_s: self.onset_s + 0.05,
            pitch: self.drum_class.gm_key(),
            velocity: DEFAULT_VELOCITY,
            instrument: Instrument::Drums,
            confidence: self.confidence.clamp(0.0, 1.0),
        }
    }
}

const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// One of 25 chord classes: index `0..12` major on C..B, `12..24` minor on C..B,
/// `24` no-chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChordLabel(u8);

impl ChordLabel {
    pub const COUNT: usize = 25;
    pub const NO_CHORD: ChordLabel = ChordLabel(24);

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(ChordLabel(index as u8))
    }

    pub fn major(root: u8) -> Self {
        ChordLabel(root % 12)
    }

    pub fn minor(root: u8) -> Self {
        ChordLabel(12 + root % 12)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn root(self) -> Option<u8> {
        (self.0 < 24).then_some(self.0 % 12)
    }

    pub fn is_minor(self) -> bool {
        (12..24).contains(&self.0)
    }

    /// Pitch classes of the triad (root, third, fifth).
    pub fn triad(self) -> Option<[u8; 3]> {
        let r = self.root()?;
        let third = if self.is_minor() { 3 } else { 4 };
        Some([r, (r + third) % 12, (r + 7) % 12])
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.root() {
            None => f.write_str("N"),
            Some(r) => {
                let q = if self.is_minor() { "min" } else { "maj" };
                write!(f, "{}:{}", PITCH_CLASS_NAMES[r as usize], q)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown chord label {0:?}")]
pub struct ChordParseError(pub String);

impl FromStr for ChordLabel {
    type Err = ChordParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "N" {
            return Ok(ChordLabel::NO_CHORD);
        }
        let err = || ChordParseError(String::from(s));
        let (root, quality) = s.split_once(':').ok_or_else(err)?;
        let r = PITCH_CLASS_NAMES.iter().position(|&n| n == root).ok_or_else(err)? as u8;
        match quality {
            "maj" => Ok(ChordLabel::major(r)),
            "min" => Ok(ChordLabel::minor(r)),
            _ => Err(err()),
        }
    }
}

/// A labelled time interval `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub label: ChordLabel,
}

/// Beat times with the subset that are downbeats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatAnnotation {
    pub beats_s: Vec<f64>,
    pub downbeats_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeatError {
    #[error("beat times are not strictly increasing at index {0}")]
    Unsorted(usize),
    #[error("downbeat at {0} s is not a beat")]
    OrphanDownbeat(f64),
}

impl BeatAnnotation {
    pub fn validate(&self) -> Result<(), BeatError> {
        for (list, _) in [(&self.beats_s, 0), (&self.downbeats_s, 1)] {
            if let Some(i) = list.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(BeatError::Unsorted(i + 1));
            }
        }
        for &d in &self.downbeats_s {
            if !self.beats_s.iter().any(|&b| Float::abs(b - d) <= 1e-6) {
                return Err(BeatError::OrphanDownbeat(d));
            }
        }
        Ok(())
    }
}
