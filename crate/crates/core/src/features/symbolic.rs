use alloc::vec;
use alloc::vec::Vec;

use super::FeatureError;
use crate::midi::{midi_to_pianoroll, MidiDocument, ROLL_ACTIVATION, ROLL_ONSET};
use crate::pitch::PitchAxis;
use crate::time::{TimeGrid, BEAT_HOP_S};

/// Inter-onset intervals are clipped here.
pub const IOI_CLIP_S: f64 = 4.0;
/// Per-frame width of the flattened feature: 128 roll bins, flux, IOI.
pub const SYMBOLIC_DIM: usize = 130;

/// Piano roll, piano-roll flux and inter-onset interval at 10 ms.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicFeature {
    /// `frames x 128`, binary.
    pub pianoroll: Vec<f64>,
    pub spectral_flux: Vec<f64>,
    pub ioi: Vec<f64>,
    pub grid: TimeGrid,
}

impl SymbolicFeature {
    pub fn frames(&self) -> usize {
        self.grid.n_frames
    }

    /// `frames x 130` row-major matrix `[roll | flux | ioi]`.
    pub fn to_matrix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frames() * SYMBOLIC_DIM);
        for k in 0..self.frames() {
            out.extend_from_slice(&self.pianoroll[k * 128..(k + 1) * 128]);
            out.push(self.spectral_flux[k]);
            out.push(self.ioi[k]);
        }
        out
    }
}

/// Symbolic beat-tracking input.
///
/// `flux[k] = sum_p max(0, roll[k, p] - roll[k - 1, p])` with an all-zero frame
/// before the first; `ioi[k]` is the time since the latest onset at or before
/// frame `k`, clipped to [`IOI_CLIP_S`] (and equal to the clip before any onset).
pub fn midi_symbolic_features(doc: &MidiDocument) -> Result<SymbolicFeature, FeatureError> {
    if doc.is_empty() {
        return Err(FeatureError::NoNotes);
    }
    let grid = TimeGrid::covering(BEAT_HOP_S, doc.end_s());
    let roll = midi_to_pianoroll(doc, &grid, &PitchAxis::MIDI_FULL).tensor;
    let n = grid.n_frames;
    let mut pianoroll = vec![0.0; n * 128];
    let mut flux = vec![0.0; n];
    let mut ioi = vec![IOI_CLIP_S; n];
    let mut last_onset: Option<usize> = None;
    for k in 0..n {
        let mut f = 0.0;
        let mut onset = false;
        for p in 0..128 {
            let v = roll.get(k, p, ROLL_ACTIVATION);
            pianoroll[k * 128 + p] = v;
            let prev = if k == 0 { 0.0 } else { roll.get(k - 1, p, ROLL_ACTIVATION) };
            f += (v - prev).max(0.0);
            onset |= roll.get(k, p, ROLL_ONSET) > 0.0;
        }
        flux[k] = f;
        if onset {
            last_onset = Some(k);
        }
        if let Some(j) = last_onset {
            ioi[k] = ((k - j) as f64 * BEAT_HOP_S).min(IOI_CLIP_S);
        }
    }
    Ok(SymbolicFeature {
        pianoroll,
        spectral_flux: flux,
        ioi,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::{Instrument, NoteEvent};

    #[test]
    fn single_note_flux_and_ioi() {
        let doc = MidiDocument::single(Instrument::Piano, vec![NoteEvent::new(1.0, 1.5, 60, Instrument::Piano)]);
        let f = midi_symbolic_features(&doc).unwrap();
        assert_eq!(f.frames(), 150);
        for (k, &v) in f.spectral_flux.iter().enumerate() {
            if k == 100 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0, "frame {k}");
            }
        }
        assert_eq!(f.ioi[99], IOI_CLIP_S);
        assert_eq!(f.ioi[100], 0.0);
        for k in 101..150 {
            assert!((f.ioi[k] - (k - 100) as f64 * 0.01).abs() < 1e-12);
        }
        assert_eq!(f.to_matrix().len(), 150 * SYMBOLIC_DIM);
    }

    #[test]
    fn empty_document_is_an_error() {
        assert_eq!(midi_symbolic_features(&MidiDocument::default()), Err(FeatureError::NoNotes));
    }

    #[test]
    fn isochronous_onsets_give_sawtooth_ioi() {
        let notes = (0..8)
            .map(|i| NoteEvent::new(i as f64 * 0.5, i as f64 * 0.5 + 0.1, 64, Instrument::Piano))
            .collect();
        let f = midi_symbolic_features(&MidiDocument::single(Instrument::Piano, notes)).unwrap();
        for k in 0..f.frames() {
            let expected = (k % 50) as f64 * 0.01;
            assert!((f.ioi[k] - expected).abs() < 1e-12, "frame {k}");
        }
    }
}
