use std::collections::BTreeMap;
use std::path::Path;

use tunescribe::config::PipelineConfig;
use tunescribe::dataset::{generate_synthetic_dataset, Dataset};
use tunescribe::pipeline::{checkpoint_file, evaluate_cli, read_checkpoint, sonify_file, train_cli, CliTask, Models};
use tunescribe::{audio, Error};
use tunescribe_core::decode::{decode_beats, decode_chords, decode_drums, decode_multi_instrument, decode_piano_notes, decode_vocal, DecodeParams};
use tunescribe_core::eval::{beat_f_measure, chord_accuracy, note_f1, stream_note_f1, BEAT_TOLERANCE_S, NOTE_ONSET_TOLERANCE_S};
use tunescribe_core::midi::write_midi;
use tunescribe_core::models::{build_model, Task};
use tunescribe_core::synthetic::Corpus;
use tunescribe_core::time::CHORD_HOP_S;
use tunescribe_core::{Instrument, MidiDocument, NoteEvent, NoteStream, TimeGrid};

fn small() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synthetic.clip_s = 1.5;
    cfg
}

fn contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for corpus in [Corpus::Drum, Corpus::Beat] {
        generate_synthetic_dataset(corpus, 2, 5, a.path(), &small()).unwrap();
        generate_synthetic_dataset(corpus, 2, 5, b.path(), &small()).unwrap();
        generate_synthetic_dataset(corpus, 2, 6, c.path(), &small()).unwrap();
        assert_eq!(contents(a.path()), contents(b.path()), "{corpus}");
        assert_ne!(contents(a.path()), contents(c.path()), "{corpus}");
    }
}

/// An activation-only roll cannot separate same-pitch notes that touch, so
/// the oracle joins them.
fn merge_touching(s: &NoteStream, gap: f64) -> NoteStream {
    let mut notes = s.notes.clone();
    notes.sort_by(|a, b| (a.pitch, a.onset_s).partial_cmp(&(b.pitch, b.onset_s)).unwrap());
    let mut out: Vec<NoteEvent> = Vec::new();
    for n in notes {
        match out.last_mut() {
            Some(l) if l.pitch == n.pitch && n.onset_s <= l.offset_s + gap => l.offset_s = l.offset_s.max(n.offset_s),
            _ => out.push(n),
        }
    }
    NoteStream::new(s.instrument, out)
}

#[test]
fn stored_targets_decode_back_to_the_ground_truth() {
    let p = DecodeParams::default();
    for corpus in Corpus::ALL {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(corpus, 3, 11, dir.path(), &small()).unwrap();
        assert_eq!(Dataset::open(dir.path()).unwrap().index, ds.index);
        for id in &ds.index.clips {
            let t = |task| ds.target(id, task).unwrap();
            match corpus {
                Corpus::Music => {
                    let got = decode_piano_notes(&t(Task::Music), &p).unwrap();
                    assert_eq!(note_f1(&ds.truth(id).unwrap().all_notes(), &got, NOTE_ONSET_TOLERANCE_S).f1, 1.0, "{id}");
                }
                Corpus::MultiInstrument => {
                    let got = decode_multi_instrument(&t(Task::MultiInstrument), &p).unwrap();
                    let truth: Vec<NoteStream> = ds.truth(id).unwrap().streams.iter().map(|s| merge_touching(s, p.merge_gap_s)).collect();
                    assert_eq!(stream_note_f1(&truth, &got, NOTE_ONSET_TOLERANCE_S).f1, 1.0, "{id}");
                }
                Corpus::Drum => {
                    let got: Vec<NoteEvent> = decode_drums(&t(Task::Drum), &p).unwrap().iter().map(|d| d.to_note()).collect();
                    assert_eq!(note_f1(&ds.truth(id).unwrap().all_notes(), &got, NOTE_ONSET_TOLERANCE_S).f1, 1.0, "{id}");
                }
                Corpus::Vocal => {
                    let got = decode_vocal(&t(Task::VocalPitch), &t(Task::VocalSeg), &p).unwrap();
                    assert_eq!(note_f1(&ds.truth(id).unwrap().all_notes(), &got, NOTE_ONSET_TOLERANCE_S).f1, 1.0, "{id}");
                }
                Corpus::Chord => {
                    let probs = t(Task::Chord);
                    let got = decode_chords(&probs, &TimeGrid::new(CHORD_HOP_S, probs.frames())).unwrap();
                    let acc = chord_accuracy(&ds.chords(id).unwrap(), &got).unwrap();
                    assert!((acc - 1.0).abs() < 1e-9, "{id}: {acc}");
                }
                Corpus::Beat => {
                    let got = decode_beats(&t(Task::Beat), &p).unwrap();
                    let r = beat_f_measure(&ds.beats(id).unwrap(), &got, BEAT_TOLERANCE_S);
                    assert_eq!((r.beats.f1, r.downbeats.f1), (1.0, 1.0), "{id}");
                }
            }
        }
    }
}

#[test]
fn zero_clips_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = generate_synthetic_dataset(Corpus::Music, 0, 1, dir.path(), &small()).unwrap_err();
    assert_eq!(e.code(), "E_INPUT");
}

#[test]
fn broken_datasets_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(Dataset::open(&dir.path().join("nope")).unwrap_err().code(), "E_INPUT");
    assert_eq!(Dataset::open(dir.path()).unwrap_err().code(), "E_DATA");
    std::fs::write(dir.path().join("dataset.toml"), "corpus = \"drum\"\nseed = 0\nclips = []\n").unwrap();
    let e = Dataset::open(dir.path()).unwrap_err();
    assert!(matches!(e, Error::Data(_)) && e.to_string().contains("empty"), "{e}");

    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic_dataset(Corpus::Drum, 2, 1, dir.path(), &small()).unwrap();
    let feat = dir.path().join("clip_0001.feat");
    let mut bytes = std::fs::read(&feat).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(&feat, bytes).unwrap();
    let e = ds.examples(Task::Drum).unwrap_err();
    assert_eq!((e.code(), e.exit_code()), ("E_DATA", 3));
    assert!(e.to_string().contains("clip_0001.feat"), "{e}");
    let e = train_cli(CliTask::Drum, dir.path(), &small(), dir.path(), 0).unwrap_err();
    assert!(e.to_string().contains("clip_0001.feat"), "{e}");
}

#[test]
fn training_needs_a_matching_corpus() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_dataset(Corpus::Drum, 1, 1, dir.path(), &small()).unwrap();
    let e = train_cli(CliTask::Chord, dir.path(), &small(), dir.path(), 0).unwrap_err();
    assert_eq!(e.code(), "E_DATA");
}

#[test]
fn zero_epochs_writes_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let (data, out) = (dir.path().join("d"), dir.path().join("c"));
    let mut cfg = small();
    cfg.train.epochs = 0;
    generate_synthetic_dataset(Corpus::Vocal, 1, 2, &data, &cfg).unwrap();
    let written = train_cli(CliTask::Vocal, &data, &cfg, &out, 4).unwrap();
    assert_eq!(written, vec![checkpoint_file(&out, Task::VocalPitch), checkpoint_file(&out, Task::VocalSeg)]);
    for task in [Task::VocalPitch, Task::VocalSeg] {
        let m = read_checkpoint(&checkpoint_file(&out, task)).unwrap();
        assert_eq!(m.params, build_model(cfg.model_config(task, 4)).unwrap().params);
    }
}

#[test]
fn train_then_evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, a, b) = (dir.path().join("d"), dir.path().join("a"), dir.path().join("b"));
    let mut cfg = small();
    cfg.train.epochs = 2;
    generate_synthetic_dataset(Corpus::Chord, 2, 3, &data, &cfg).unwrap();
    train_cli(CliTask::Chord, &data, &cfg, &a, 1).unwrap();
    train_cli(CliTask::Chord, &data, &cfg, &b, 1).unwrap();
    assert_eq!(contents(&a), contents(&b));
    let loss = std::fs::read_to_string(a.join("chord.loss.txt")).unwrap();
    assert_eq!(loss.lines().count(), 2);

    let models = Models::load(CliTask::Chord, &a).unwrap();
    let report = evaluate_cli(CliTask::Chord, &data, &models, &cfg).unwrap();
    assert!(report.starts_with("task=chord\nclips=2\n"), "{report}");
    let acc: f64 = report.lines().find_map(|l| l.strip_prefix("accuracy=")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(evaluate_cli(CliTask::Chord, &data, &models, &cfg).unwrap(), report);
}

#[test]
fn evaluating_on_the_wrong_corpus_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = (dir.path().join("d"), dir.path().join("c"));
    let mut cfg = small();
    cfg.train.epochs = 0;
    generate_synthetic_dataset(Corpus::MultiInstrument, 1, 1, &data, &cfg).unwrap();
    train_cli(CliTask::Music, &data, &cfg, &ck, 0).unwrap();
    let models = Models::load(CliTask::Music, &ck).unwrap();
    assert_eq!(models.task(), Task::MultiInstrument);
    let report = evaluate_cli(CliTask::Music, &data, &models, &cfg).unwrap();
    assert!(report.contains("n_match="), "{report}");
    let piano = dir.path().join("p");
    generate_synthetic_dataset(Corpus::Music, 1, 1, &piano, &cfg).unwrap();
    assert_eq!(evaluate_cli(CliTask::Music, &piano, &models, &cfg).unwrap_err().code(), "E_DATA");
}

#[test]
fn sonified_a4_peaks_at_440_hz() {
    let dir = tempfile::tempdir().unwrap();
    let (mid, wav) = (dir.path().join("a4.mid"), dir.path().join("a4.wav"));
    let doc = MidiDocument::single(Instrument::Piano, vec![NoteEvent::new(0.0, 1.0, 69, Instrument::Piano)]);
    std::fs::write(&mid, write_midi(&doc).unwrap()).unwrap();
    sonify_file(&mid, &wav, 16_000).unwrap();
    let clip = audio::read_wav(&wav).unwrap();
    assert_eq!(clip.sample_rate(), 16_000);
    let x = &clip.samples()[1600..9600];
    let power = |f: f64| {
        let w = std::f64::consts::TAU * f / 16_000.0;
        let (re, im) = x.iter().enumerate().fold((0.0, 0.0), |(r, i), (n, v)| (r + v * (w * n as f64).cos(), i + v * (w * n as f64).sin()));
        re * re + im * im
    };
    let best = (300..600).step_by(2).map(|f| f as f64).max_by(|a, b| power(*a).total_cmp(&power(*b))).unwrap();
    assert!((best - 440.0).abs() <= 2.0, "peak at {best} Hz");
}

#[test]
fn empty_document_sonifies_to_silence() {
    let dir = tempfile::tempdir().unwrap();
    let (mid, wav) = (dir.path().join("e.mid"), dir.path().join("e.wav"));
    std::fs::write(&mid, write_midi(&MidiDocument::default()).unwrap()).unwrap();
    sonify_file(&mid, &wav, 8000).unwrap();
    assert!(audio::read_wav(&wav).unwrap().samples().iter().all(|&s| s == 0.0));
}
