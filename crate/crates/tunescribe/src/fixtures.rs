//! Small bundled inputs and toy checkpoints for smoke tests. Everything is
//! regenerated deterministically by `tunescribe fixtures`.
use std::path::{Path, PathBuf};

use tunescribe_core::midi::write_midi;
use tunescribe_core::models::{build_model, train, Model, ModelConfig, Task, TrainConfig};
use tunescribe_core::synth::{sonify, SynthParams};
use tunescribe_core::synthetic::{beat_example, click_track, synthesize, Corpus, SyntheticParams};
use tunescribe_core::{ChordLabel, DrumClass, Instrument, MidiDocument, NoteEvent};

use crate::audio::write_wav;
use crate::error::{Error, Result};
use crate::fsio;
use crate::pipeline::{checkpoint_file, write_checkpoint};

pub const CLIP_S: f64 = 3.0;
pub const PIANO_WAV: &str = "piano.wav";
pub const DRUMS_WAV: &str = "drums.wav";
pub const VOCAL_WAV: &str = "vocal.wav";
pub const CHORDS_WAV: &str = "chords.wav";
pub const CLICK_MID: &str = "click_120.mid";

fn notes(inst: Instrument, spec: &[(f64, f64, u8)]) -> MidiDocument {
    MidiDocument::single(inst, spec.iter().map(|&(a, b, p)| NoteEvent::new(a, b, p, inst)).collect())
}

fn piano_doc() -> MidiDocument {
    notes(
        Instrument::Piano,
        &[(0.2, 0.8, 60), (0.9, 1.5, 64), (1.6, 2.2, 67), (1.6, 2.2, 72), (2.3, 2.9, 60)],
    )
}

fn drums_doc() -> MidiDocument {
    let mut hits = Vec::new();
    for i in 0..12 {
        let t = 0.1 + i as f64 * 0.25;
        let class = match i % 4 {
            0 => DrumClass::Kick,
            2 => DrumClass::Snare,
            _ => DrumClass::HiHat,
        };
        hits.push(NoteEvent::new(t, t + 0.05, class.gm_key(), Instrument::Drums));
    }
    MidiDocument::single(Instrument::Drums, hits)
}

fn vocal_doc() -> MidiDocument {
    notes(Instrument::Vocal, &[(0.2, 0.9, 64), (1.0, 1.6, 67), (1.7, 2.4, 65), (2.5, 2.9, 62)])
}

fn chords_doc() -> MidiDocument {
    let mut spec = Vec::new();
    for (i, label) in [ChordLabel::major(0), ChordLabel::minor(9), ChordLabel::major(5)].iter().enumerate() {
        let (a, b) = (i as f64, i as f64 + 0.95);
        let [r, t, f] = label.triad().expect("pitched chord");
        spec.push((a, b, 48 + r));
        for pc in [r, t, f] {
            spec.push((a, b, 60 + pc));
        }
    }
    notes(Instrument::Piano, &spec)
}

/// Writes the audio and MIDI fixtures to `dir`.
pub fn write_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let params = SynthParams::default();
    let mut out = Vec::new();
    for (name, doc) in [
        (PIANO_WAV, piano_doc()),
        (DRUMS_WAV, drums_doc()),
        (VOCAL_WAV, vocal_doc()),
        (CHORDS_WAV, chords_doc()),
    ] {
        let mut clip = sonify(&doc, CLIP_S, &params);
        let n = (CLIP_S * clip.sample_rate() as f64) as usize;
        let mut samples = clip.into_samples();
        samples.truncate(n);
        clip = tunescribe_core::features::AudioClip::new(samples, params.sample_rate).expect("finite");
        let path = dir.join(name);
        write_wav(&path, &clip)?;
        out.push(path);
    }
    let (click, _) = click_track(120.0, 8, 4);
    let path = dir.join(CLICK_MID);
    fsio::write_atomic(&path, &write_midi(&click).map_err(|e| Error::Internal(e.to_string()))?)?;
    out.push(path);
    Ok(out)
}

fn fit(task: Task, data: &[(tunescribe_core::models::ModelInput, tunescribe_core::ActivationTensor)], epochs: usize) -> Result<Model> {
    let mut model = build_model(ModelConfig::toy(task)).map_err(|e| Error::Internal(e.to_string()))?;
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::for_task(task)
    };
    train(&mut model, data, &tc).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(model)
}

/// Trains one toy checkpoint per model on a few synthetic clips (the beat
/// model on the click track) and writes them to `dir`.
pub fn write_checkpoints(dir: &Path, epochs: usize) -> Result<Vec<PathBuf>> {
    let params = SyntheticParams::default();
    let mut out = Vec::new();
    for corpus in [Corpus::Music, Corpus::Drum, Corpus::Vocal, Corpus::Chord] {
        let clips = (0..4)
            .map(|i| synthesize(corpus, 1, i, &params))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Internal(e.to_string()))?;
        for (k, &task) in corpus.tasks().iter().enumerate() {
            let data: Vec<_> = clips.iter().map(|c| (c.input.clone(), c.targets[k].1.clone())).collect();
            log::info!("training toy {} checkpoint", task.name());
            let path = checkpoint_file(dir, task);
            write_checkpoint(&path, &fit(task, &data, epochs)?)?;
            out.push(path);
        }
    }
    let (doc, ann) = click_track(120.0, 16, 4);
    let example = beat_example(&doc, &ann).map_err(|e| Error::Internal(e.to_string()))?;
    let path = checkpoint_file(dir, Task::Beat);
    write_checkpoint(&path, &fit(Task::Beat, &[example], 100)?)?;
    out.push(path);
    Ok(out)
}
