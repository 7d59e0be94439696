use proptest::prelude::*;
use tunescribe_core::decode::{decode_piano_notes, DecodeParams};
use tunescribe_core::eval::{note_f1, NOTE_ONSET_TOLERANCE_S};
use tunescribe_core::frontend::{audio_input, beat_input, FrontEnd};
use tunescribe_core::midi::{read_midi, render_ideal_activations, write_midi};
use tunescribe_core::models::{build_model, load_checkpoint, save_checkpoint, train, ModelConfig, Task, TrainConfig};
use tunescribe_core::synth::{sonify, SynthParams};
use tunescribe_core::synthetic::{synthesize, Corpus, SyntheticParams};
use tunescribe_core::time::MUSIC_HOP_S;
use tunescribe_core::{Instrument, MidiDocument, NoteEvent, PitchAxis, TimeGrid};

fn short() -> SyntheticParams {
    SyntheticParams {
        clip_s: 1.0,
        ..SyntheticParams::default()
    }
}

#[test]
fn synthetic_clips_fit_their_models() {
    for corpus in Corpus::ALL {
        let clip = synthesize(corpus, 4, 0, &short()).unwrap();
        for (task, target) in &clip.targets {
            let m = build_model(ModelConfig::toy(*task)).unwrap();
            let y = m.forward(&clip.input).unwrap();
            assert_eq!(y.shape(), target.shape(), "{corpus} {task}");
        }
        match &clip.audio {
            Some(audio) => {
                let x = audio_input(clip.targets[0].0, audio, &FrontEnd::default()).unwrap();
                assert_eq!(x, clip.input, "{corpus}");
            }
            None => assert_eq!(beat_input(&clip.doc).unwrap(), clip.input),
        }
    }
}

#[test]
fn sonified_document_features_line_up_with_its_roll() {
    let doc = MidiDocument::single(
        Instrument::Piano,
        vec![NoteEvent::new(0.2, 0.6, 60, Instrument::Piano), NoteEvent::new(0.4, 0.9, 67, Instrument::Piano)],
    );
    let audio = sonify(&doc, 1.0, &SynthParams::default());
    let x = audio_input(Task::Music, &audio, &FrontEnd::default()).unwrap();
    let grid = TimeGrid::covering(MUSIC_HOP_S, audio.duration_s());
    assert!(x.frames().abs_diff(grid.n_frames) <= 1, "{} vs {}", x.frames(), grid.n_frames);
    let roll = render_ideal_activations(&doc.all_notes(), &grid, &PitchAxis::PIANO_QUARTER);
    assert_eq!(roll.bins(), 352);
}

#[test]
fn training_then_checkpoint_keeps_outputs() {
    let clips: Vec<_> = (0..2).map(|i| synthesize(Corpus::Drum, 2, i, &short()).unwrap()).collect();
    let data: Vec<_> = clips.iter().map(|c| (c.input.clone(), c.targets[0].1.clone())).collect();
    let mut m = build_model(ModelConfig::toy(Task::Drum)).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        ..TrainConfig::for_task(Task::Drum)
    };
    let history = train(&mut m, &data, &tc).unwrap();
    assert_eq!(history.len(), 3);
    assert!(history[2] < history[0], "{history:?}");
    let back = load_checkpoint(&save_checkpoint(&m)).unwrap();
    assert_eq!(back.meta.loss_history, history);
    assert_eq!(back.forward(&data[0].0).unwrap(), m.forward(&data[0].0).unwrap());
}

prop_compose! {
    fn piano_notes()(raw in proptest::collection::vec((0u32..300, 3u32..60, 21u8..=108), 0..25)) -> Vec<NoteEvent> {
        let mut free = [0u32; 128];
        raw.into_iter()
            .map(|(gap, len, p)| {
                let on = free[p as usize] + gap;
                free[p as usize] = on + len;
                NoteEvent::new(on as f64 * 0.02, (on + len) as f64 * 0.02, p, Instrument::Piano)
            })
            .collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn midi_file_then_ideal_decode_recovers_notes(notes in piano_notes()) {
        let doc = MidiDocument::single(Instrument::Piano, notes);
        let back = read_midi(&write_midi(&doc).unwrap()).unwrap();
        let truth = back.all_notes();
        prop_assert_eq!(truth.len(), doc.note_count());
        let grid = TimeGrid::covering(MUSIC_HOP_S, back.end_s() + 0.1);
        let est = decode_piano_notes(&render_ideal_activations(&truth, &grid, &PitchAxis::PIANO_QUARTER), &DecodeParams::default()).unwrap();
        prop_assert_eq!(note_f1(&doc.all_notes(), &est, NOTE_ONSET_TOLERANCE_S).f1, 1.0);
    }
}
