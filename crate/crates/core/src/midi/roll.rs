use crate::pitch::PitchAxis;
use crate::tensor::ActivationTensor;
use crate::time::TimeGrid;

use super::{MidiDocument, NoteEvent};

pub const ROLL_ACTIVATION: usize = 0;
pub const ROLL_ONSET: usize = 1;

/// Binary piano roll with channels `[activation, onset]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    pub tensor: ActivationTensor,
    /// Notes whose pitch is not on the axis.
    pub dropped: usize,
}

/// Renders every note of `doc` onto `grid` x `axis`.
///
/// Cell `(k, b)` of the activation channel is 1 iff a note whose pitch covers bin
/// `b` sounds at some time inside frame `k`; the onset channel is 1 at the frame
/// containing each note's onset. Sub-semitone bins of a pitch are all marked.
pub fn midi_to_pianoroll(doc: &MidiDocument, grid: &TimeGrid, axis: &PitchAxis) -> PianoRoll {
    let mut t = ActivationTensor::zeros(grid.n_frames, axis.n_bins(), 2);
    let mut dropped = 0;
    for n in doc.streams.iter().flat_map(|s| s.notes.iter()) {
        let Some(bins) = axis.bins_of_pitch(n.pitch) else {
            dropped += 1;
            continue;
        };
        let (a, b) = grid.frame_span(n.onset_s, n.offset_s);
        for k in a..b.min(grid.n_frames) {
            for bin in bins.clone() {
                t.set(k, bin, ROLL_ACTIVATION, 1.0);
            }
        }
        if a < grid.n_frames {
            for bin in bins {
                t.set(a, bin, ROLL_ONSET, 1.0);
            }
        }
    }
    PianoRoll { tensor: t, dropped }
}

/// Noise-free three-channel `[activation, onset, offset]` target for a note
/// list: activation and onset as in [`midi_to_pianoroll`], offset marks the last
/// frame each note sounds in.
pub fn render_ideal_activations(notes: &[NoteEvent], grid: &TimeGrid, axis: &PitchAxis) -> ActivationTensor {
    let mut t = ActivationTensor::zeros(grid.n_frames, axis.n_bins(), 3);
    for n in notes {
        let Some(bins) = axis.bins_of_pitch(n.pitch) else {
            continue;
        };
        let (a, b) = grid.frame_span(n.onset_s, n.offset_s);
        if a >= grid.n_frames {
            continue;
        }
        let b = b.min(grid.n_frames);
        for k in a..b {
            for bin in bins.clone() {
                t.set(k, bin, 0, 1.0);
            }
        }
        for bin in bins {
            t.set(a, bin, 1, 1.0);
            t.set(b - 1, bin, 2, 1.0);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::Instrument;
    use alloc::vec;

    fn note(on: f64, off: f64, p: u8) -> NoteEvent {
        NoteEvent::new(on, off, p, Instrument::Piano)
    }

    #[test]
    fn single_note_frames_3_to_7() {
        let doc = MidiDocument::single(Instrument::Piano, vec![note(0.06, 0.16, 60)]);
        let grid = TimeGrid::new(0.02, 12);
        let roll = midi_to_pianoroll(&doc, &grid, &PitchAxis::PIANO_SEMITONE).tensor;
        let row = 60 - 21;
        let act: alloc::vec::Vec<f64> = roll.series(row, 0);
        assert_eq!(act, vec![0., 0., 0., 1., 1., 1., 1., 1., 0., 0., 0., 0.]);
        let onset = roll.series(row, 1);
        assert_eq!(onset.iter().position(|&v| v == 1.0), Some(3));
        assert_eq!(onset.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_document_gives_zero_roll() {
        let roll = midi_to_pianoroll(&MidiDocument::default(), &TimeGrid::new(0.01, 50), &PitchAxis::MIDI_FULL);
        assert!(roll.tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triad_column_sum_is_three() {
        let doc = MidiDocument::single(
            Instrument::Piano,
            vec![note(0.0, 1.0, 60), note(0.2, 1.0, 64), note(0.4, 1.0, 67)],
        );
        let grid = TimeGrid::new(0.02, 50);
        let roll = midi_to_pianoroll(&doc, &grid, &PitchAxis::PIANO_SEMITONE).tensor;
        let col: f64 = (0..88).map(|b| roll.get(30, b, 0)).sum();
        assert_eq!(col, 3.0);
    }

    #[test]
    fn out_of_axis_notes_are_counted() {
        let mut n = note(0.0, 0.5, 60);
        n.pitch = 10;
        let doc = MidiDocument::from_streams(vec![crate::midi::NoteStream {
            instrument: Instrument::Piano,
            notes: vec![n],
        }]);
        let roll = midi_to_pianoroll(&doc, &TimeGrid::new(0.02, 30), &PitchAxis::PIANO_QUARTER);
        assert_eq!(roll.dropped, 1);
    }
}
