//! Seeded synthetic training clips: random symbolic ground truth, its rendering
//! and the matching ideal targets.
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{AudioClip, FeatureError};
use crate::frontend::{audio_input, beat_input, FrontEnd};
use crate::midi::{
    render_ideal_activations, BeatAnnotation, ChordLabel, ChordSegment, DrumClass, Instrument, MidiDocument, NoteEvent,
    NoteStream,
};
use crate::models::{ModelInput, Task};
use crate::pitch::PitchAxis;
use crate::synth::{sonify, SynthParams};
use crate::tensor::ActivationTensor;
use crate::time::{TimeGrid, CHORD_HOP_S};

/// The six transcription families a dataset can be generated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corpus {
    Music,
    MultiInstrument,
    Drum,
    Vocal,
    Chord,
    Beat,
}

impl Corpus {
    pub const ALL: [Corpus; 6] = [
        Corpus::Music,
        Corpus::MultiInstrument,
        Corpus::Drum,
        Corpus::Vocal,
        Corpus::Chord,
        Corpus::Beat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Corpus::Music => "music",
            Corpus::MultiInstrument => "multi_instrument",
            Corpus::Drum => "drum",
            Corpus::Vocal => "vocal",
            Corpus::Chord => "chord",
            Corpus::Beat => "beat",
        }
    }

    /// Models trained on this corpus; vocal clips feed two.
    pub fn tasks(self) -> &'static [Task] {
        match self {
            Corpus::Music => &[Task::Music],
            Corpus::MultiInstrument => &[Task::MultiInstrument],
            Corpus::Drum => &[Task::Drum],
            Corpus::Vocal => &[Task::VocalPitch, Task::VocalSeg],
            Corpus::Chord => &[Task::Chord],
            Corpus::Beat => &[Task::Beat],
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown corpus {0:?}")]
pub struct UnknownCorpus(pub alloc::string::String);

impl FromStr for Corpus {
    type Err = UnknownCorpus;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Corpus::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownCorpus(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub clip_s: f64,
    /// Upper bound on notes (or hits) per clip.
    pub max_notes: usize,
    /// Inclusive MIDI pitch range of melodic material.
    pub low_pitch: u8,
    pub high_pitch: u8,
    pub synth: SynthParams,
    pub front_end: FrontEnd,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            clip_s: 3.0,
            max_notes: 8,
            low_pitch: 48,
            high_pitch: 84,
            synth: SynthParams::default(),
            front_end: FrontEnd::default(),
        }
    }
}

/// One generated clip. `audio` is absent for beat clips, whose input is MIDI.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub doc: MidiDocument,
    pub audio: Option<AudioClip>,
    pub input: ModelInput,
    /// One target per model of the corpus, in [`Corpus::tasks`] order.
    pub targets: Vec<(Task, ActivationTensor)>,
    pub chords: Vec<ChordSegment>,
    pub beats: Option<BeatAnnotation>,
}

fn pitch(rng: &mut ChaCha8Rng, p: &SyntheticParams) -> u8 {
    rng.random_range(p.low_pitch..=p.high_pitch)
}

/// Polyphonic notes with onsets on a 10 ms lattice, ending before the clip does.
fn random_notes(rng: &mut ChaCha8Rng, p: &SyntheticParams, inst: Instrument, count: usize) -> Vec<NoteEvent> {
    let last_onset = ((p.clip_s - 0.3) / 0.01) as u32;
    (0..count)
        .map(|_| {
            let on = rng.random_range(0..=last_onset) as f64 * 0.01;
            let dur = rng.random_range(10..=60) as f64 * 0.01;
            let off = (on + dur).min(p.clip_s - p.synth.release_s - 0.02);
            NoteEvent::new(on, off, pitch(rng, p), inst)
        })
        .collect()
}

fn render(doc: &MidiDocument, p: &SyntheticParams) -> AudioClip {
    let clip = sonify(doc, p.clip_s, &p.synth);
    let n = Float::round(p.clip_s * p.synth.sample_rate as f64) as usize;
    let mut samples = clip.into_samples();
    samples.truncate(n.max(1));
    AudioClip::new(samples, p.synth.sample_rate).expect("rendered audio is finite")
}

fn spectral_grid(input: &ModelInput) -> TimeGrid {
    match input {
        ModelInput::Spectral(f) => f.grid,
        ModelInput::Chroma(f) => f.grid,
        ModelInput::Symbolic(f) => f.grid,
    }
}

/// Generates clip `index` of a corpus; the same `(corpus, seed, index, params)`
/// always yields the same clip.
pub fn synthesize(corpus: Corpus, seed: u64, index: u64, p: &SyntheticParams) -> Result<SyntheticClip, FeatureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    match corpus {
        Corpus::Music => {
            let n = rng.random_range(p.max_notes.div_ceil(2).max(1)..=p.max_notes.max(1));
            let stream = NoteStream::new(Instrument::Piano, random_notes(&mut rng, p, Instrument::Piano, n));
            let doc = MidiDocument::from_streams(vec![stream]);
            let audio = render(&doc, p);
            let input = audio_input(Task::Music, &audio, &p.front_end)?;
            let target = render_ideal_activations(&doc.all_notes(), &spectral_grid(&input), &PitchAxis::PIANO_QUARTER);
            Ok(clip(doc, Some(audio), input, vec![(Task::Music, target)]))
        }
        Corpus::MultiInstrument => {
            let mut ensemble = Instrument::ENSEMBLE;
            ensemble.shuffle(&mut rng);
            let k = rng.random_range(2..=3);
            let streams: Vec<NoteStream> = ensemble[..k]
                .iter()
                .map(|&inst| {
                    let n = rng.random_range(1..=p.max_notes.div_ceil(2).max(1));
                    NoteStream::new(inst, random_notes(&mut rng, p, inst, n))
                })
                .collect();
            let doc = MidiDocument::from_streams(streams);
            let audio = render(&doc, p);
            let input = audio_input(Task::MultiInstrument, &audio, &p.front_end)?;
            let grid = spectral_grid(&input);
            let axis = PitchAxis::PIANO_QUARTER;
            let mut target = ActivationTensor::zeros(grid.n_frames, axis.n_bins(), Instrument::ENSEMBLE.len());
            for s in &doc.streams {
                let c = s.instrument.ensemble_index().expect("ensemble instrument");
                let a = render_ideal_activations(&s.notes, &grid, &axis);
                for k in 0..grid.n_frames {
                    for b in 0..axis.n_bins() {
                        if a.get(k, b, 0) > 0.0 {
                            target.set(k, b, c, 1.0);
                        }
                    }
                }
            }
            Ok(clip(doc, Some(audio), input, vec![(Task::MultiInstrument, target)]))
        }
        Corpus::Drum => {
            // sixteenth notes at 120 BPM, at most one hit per class per slot
            let slots = ((p.clip_s - 0.2) / 0.125) as usize;
            let mut notes = Vec::new();
            for s in 0..slots {
                for class in DrumClass::ALL {
                    if notes.len() < p.max_notes * 2 && rng.random_bool(0.25) {
                        let t = 0.05 + s as f64 * 0.125;
                        notes.push(NoteEvent::new(t, t + 0.05, class.gm_key(), Instrument::Drums));
                    }
                }
            }
            let doc = MidiDocument::from_streams(vec![NoteStream::new(Instrument::Drums, notes)]);
            let audio = render(&doc, p);
            let input = audio_input(Task::Drum, &audio, &p.front_end)?;
            let grid = spectral_grid(&input);
            let mut target = ActivationTensor::zeros(grid.n_frames, 1, DrumClass::ALL.len());
            for n in doc.all_notes() {
                let class = DrumClass::from_gm_key(n.pitch).expect("drum key");
                let k = grid.frame_of(n.onset_s);
                if k < grid.n_frames {
                    target.set(k, 0, class.index(), 1.0);
                }
            }
            Ok(clip(doc, Some(audio), input, vec![(Task::Drum, target)]))
        }
        Corpus::Vocal => {
            let mut notes = Vec::new();
            let mut t = rng.random_range(0..20) as f64 * 0.01;
            while notes.len() < p.max_notes {
                let dur = rng.random_range(15..=50) as f64 * 0.01;
                if t + dur > p.clip_s - 0.1 {
                    break;
                }
                notes.push(NoteEvent::new(t, t + dur, pitch(&mut rng, p), Instrument::Vocal));
                t += dur + rng.random_range(0..=2) as f64 * 0.06;
            }
            let doc = MidiDocument::single(Instrument::Vocal, notes);
            let audio = render(&doc, p);
            let input = audio_input(Task::VocalPitch, &audio, &p.front_end)?;
            let grid = spectral_grid(&input);
            let ideal = render_ideal_activations(&doc.all_notes(), &grid, &PitchAxis::PIANO_QUARTER);
            let salience = ideal.select_channels(&[0]);
            let mut seg = ActivationTensor::zeros(grid.n_frames, 1, 2);
            for n in doc.all_notes() {
                let (a, b) = grid.frame_span(n.onset_s, n.offset_s);
                for k in a..b.min(grid.n_frames) {
                    seg.set(k, 0, 0, 1.0);
                }
                if a < grid.n_frames {
                    seg.set(a, 0, 1, 1.0);
                }
            }
            Ok(clip(doc, Some(audio), input, vec![(Task::VocalPitch, salience), (Task::VocalSeg, seg)]))
        }
        Corpus::Chord => {
            let frames = (Float::round(p.clip_s / CHORD_HOP_S) as usize).max(1);
            let mut chords: Vec<ChordSegment> = Vec::new();
            let mut k = 0;
            while k < frames {
                let len = rng.random_range(2..=4).min(frames - k);
                let mut label = ChordLabel::from_index(rng.random_range(0..ChordLabel::COUNT)).unwrap();
                if chords.last().is_some_and(|c| c.label == label) {
                    label = ChordLabel::from_index((label.index() + 5) % ChordLabel::COUNT).unwrap();
                }
                chords.push(ChordSegment {
                    start_s: k as f64 * CHORD_HOP_S,
                    end_s: (k + len) as f64 * CHORD_HOP_S,
                    label,
                });
                k += len;
            }
            let mut notes = Vec::new();
            for c in &chords {
                if let Some([r, third, fifth]) = c.label.triad() {
                    let end = c.end_s - 0.02;
                    notes.push(NoteEvent::new(c.start_s, end, 36 + r, Instrument::Piano));
                    for pc in [r, third, fifth] {
                        notes.push(NoteEvent::new(c.start_s, end, 60 + pc, Instrument::Piano));
                    }
                }
            }
            let doc = MidiDocument::single(Instrument::Piano, notes);
            let sub = SyntheticParams {
                clip_s: frames as f64 * CHORD_HOP_S,
                ..*p
            };
            let audio = render(&doc, &sub);
            let input = audio_input(Task::Chord, &audio, &p.front_end)?;
            let grid = spectral_grid(&input);
            let mut target = ActivationTensor::zeros(grid.n_frames, 1, ChordLabel::COUNT);
            for k in 0..grid.n_frames {
                let centre = (k as f64 + 0.5) * CHORD_HOP_S;
                let label = chords
                    .iter()
                    .find(|c| c.start_s <= centre && centre < c.end_s)
                    .map_or(ChordLabel::NO_CHORD, |c| c.label);
                target.set(k, 0, label.index(), 1.0);
            }
            let mut out = clip(doc, Some(audio), input, vec![(Task::Chord, target)]);
            out.chords = chords;
            Ok(out)
        }
        Corpus::Beat => {
            let bpm = rng.random_range(100..=140) as f64;
            let period = 60.0 / bpm;
            let start = rng.random_range(0..10) as f64 * 0.01;
            let mut beats = Vec::new();
            let mut downbeats = Vec::new();
            let mut notes = Vec::new();
            let mut i = 0;
            loop {
                let t = start + i as f64 * period;
                if t + period > p.clip_s {
                    break;
                }
                beats.push(t);
                let down = i % 4 == 0;
                if down {
                    downbeats.push(t);
                }
                notes.push(NoteEvent::new(t, t + 0.1, if down { 36 } else { 48 }, Instrument::Piano));
                if rng.random_bool(0.5) {
                    let half = t + 0.5 * period;
                    notes.push(NoteEvent::new(half, half + 0.08, pitch(&mut rng, p), Instrument::Piano));
                }
                i += 1;
            }
            // hold a note to the end so the symbolic grid covers every beat
            notes.push(NoteEvent::new(start, start + i as f64 * period, 24, Instrument::Piano));
            let doc = MidiDocument::single(Instrument::Piano, notes);
            let ann = BeatAnnotation {
                beats_s: beats,
                downbeats_s: downbeats,
            };
            let (input, target) = beat_example(&doc, &ann)?;
            let mut out = clip(doc, None, input, vec![(Task::Beat, target)]);
            out.beats = Some(ann);
            Ok(out)
        }
    }
}

/// Symbolic input of `doc` and the beat/downbeat target on its frame grid.
pub fn beat_example(doc: &MidiDocument, beats: &BeatAnnotation) -> Result<(ModelInput, ActivationTensor), FeatureError> {
    let input = beat_input(doc)?;
    let grid = spectral_grid(&input);
    let mut target = ActivationTensor::zeros(grid.n_frames, 1, 2);
    for (ch, times) in [&beats.beats_s, &beats.downbeats_s].into_iter().enumerate() {
        for &t in times {
            target.set(grid.frame_of(t).min(grid.n_frames - 1), 0, ch, 1.0);
        }
    }
    Ok((input, target))
}

/// Metronome: one click per beat starting at 0, pitch 36 on downbeats and 48
/// elsewhere.
pub fn click_track(bpm: f64, n_beats: usize, beats_per_bar: usize) -> (MidiDocument, BeatAnnotation) {
    let period = 60.0 / bpm;
    let mut ann = BeatAnnotation::default();
    let mut notes = Vec::new();
    for i in 0..n_beats {
        let t = i as f64 * period;
        let down = i % beats_per_bar.max(1) == 0;
        ann.beats_s.push(t);
        if down {
            ann.downbeats_s.push(t);
        }
        notes.push(NoteEvent::new(t, t + 0.1, if down { 36 } else { 48 }, Instrument::Piano));
    }
    (MidiDocument::single(Instrument::Piano, notes), ann)
}

fn clip(doc: MidiDocument, audio: Option<AudioClip>, input: ModelInput, targets: Vec<(Task, ActivationTensor)>) -> SyntheticClip {
    SyntheticClip {
        doc,
        audio,
        input,
        targets,
        chords: Vec::new(),
        beats: None,
    }
}
