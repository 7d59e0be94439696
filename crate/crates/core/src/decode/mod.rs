//! Activation tensors to notes, drum hits, chord segments and beats.
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::midi::{
    BeatAnnotation, ChordLabel, ChordSegment, DrumClass, DrumEvent, Instrument, NoteEvent, NoteStream,
    DEFAULT_VELOCITY,
};
use crate::pitch::{PitchAxis, PIANO_KEYS, PIANO_LOW};
use crate::tensor::ActivationTensor;
use crate::time::{TimeGrid, BEAT_HOP_S, DRUM_HOP_S, MUSIC_HOP_S};

/// Minimum distance between two drum hits of one class.
pub const DRUM_MIN_SEPARATION_S: f64 = 0.050;
/// Minimum distance between two beats.
pub const BEAT_MIN_SEPARATION_S: f64 = 0.200;
/// Tolerance on chord row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub act_threshold: f64,
    pub onset_threshold: f64,
    pub min_note_s: f64,
    pub merge_gap_s: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            act_threshold: 0.5,
            onset_threshold: 0.5,
            min_note_s: 0.05,
            merge_gap_s: 0.02,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), DecodeError> {
        for (name, v) in [("act_threshold", self.act_threshold), ("onset_threshold", self.onset_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(DecodeError::Parameter { name, value: v });
            }
        }
        for (name, v) in [("min_note_s", self.min_note_s), ("merge_gap_s", self.merge_gap_s)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(DecodeError::Parameter { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("expected {expected} channels, got {found}")]
    Channels { expected: usize, found: usize },
    #[error("expected {expected} bins, got {found}")]
    Bins { expected: &'static str, found: usize },
    #[error("frame count mismatch: {left} vs {right}")]
    Frames { left: usize, right: usize },
    #[error("row {frame} sums to {sum}, not 1")]
    NotNormalized { frame: usize, sum: f64 },
    #[error("invalid decode parameter {name}: {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// Per-semitone maximum over the sub-semitone bins of one channel.
fn semitone_series(act: &ActivationTensor, channel: usize) -> Result<Vec<Vec<f64>>, DecodeError> {
    let bins = act.bins();
    if bins == 0 || !bins.is_multiple_of(PIANO_KEYS) {
        return Err(DecodeError::Bins {
            expected: "a multiple of 88",
            found: bins,
        });
    }
    let per = bins / PIANO_KEYS;
    let mut out = vec![vec![0.0; act.frames()]; PIANO_KEYS];
    for k in 0..act.frames() {
        for (s, row) in out.iter_mut().enumerate() {
            row[k] = (0..per).map(|j| act.get(k, s * per + j, channel)).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(out)
}

/// First frame of a local maximum (plateaus count once, at their first frame)
/// with value at least `thr`.
fn is_peak(x: &[f64], k: usize, thr: f64) -> bool {
    let v = x[k];
    if !(v >= thr) || (k > 0 && !(v > x[k - 1])) {
        return false;
    }
    match x[k + 1..].iter().find(|&&w| w != v) {
        Some(&w) => w < v,
        None => true,
    }
}

/// Strict-peak picking with non-maximum suppression: candidates are taken in
/// descending value (earlier frame first on ties) and kept when at least
/// `min_sep` frames from every kept peak.
fn pick_peaks(x: &[f64], thr: f64, min_sep: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..x.len()).filter(|&k| is_peak(x, k, thr)).collect();
    cand.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for k in cand {
        if kept.iter().all(|&j| k.abs_diff(j) >= min_sep) {
            kept.push(k);
        }
    }
    kept.sort_unstable();
    kept
}

fn frames_for(seconds: f64, hop: f64) -> usize {
    Float::ceil(seconds / hop - EPS).max(0.0) as usize
}

enum Onsets<'a> {
    /// Peaks of an onset channel.
    Peaks(&'a [f64], f64),
    /// Upward crossings of the activation threshold.
    RisingEdges,
}

/// Note spans `[start, end)` in frames for one pitch.
///
/// A note opens at an onset frame, which belongs to the note even while the
/// activation is still rising. It then extends over frames with activation at
/// or above threshold, bridging dropouts of up to `merge_gap_s`, and ends at
/// a longer dropout, an offset peak or a new onset peak. Onsets and offsets
/// only end a note once it has reached `min_note_s`; earlier ones are absorbed.
/// Notes shorter than `min_note_s` are dropped.
fn note_spans(act: &[f64], onsets: Onsets, offsets: Option<&[f64]>, p: &DecodeParams, hop: f64) -> Vec<(usize, usize)> {
    let n = act.len();
    let thr = p.act_threshold;
    let min_len = frames_for(p.min_note_s, hop).max(1);
    let merge = Float::floor(p.merge_gap_s / hop + EPS) as usize;
    let peaks = matches!(onsets, Onsets::Peaks(..));
    let on = |k: usize| match onsets {
        Onsets::Peaks(o, t) => is_peak(o, k, t),
        Onsets::RisingEdges => act[k] >= thr && (k == 0 || act[k - 1] < thr),
    };
    let mut spans = Vec::new();
    let mut k = 0;
    while k < n {
        if !on(k) {
            k += 1;
            continue;
        }
        let start = k;
        // last frame known to be inside the note
        let mut last = k;
        let mut next = None;
        for j in k + 1..n {
            // a split must leave a note that survives the length filter
            if peaks && last + 1 - start >= min_len && on(j) {
                next = Some(j);
                break;
            }
            if act[j] >= thr {
                last = j;
                if j + 1 - start >= min_len && offsets.is_some_and(|f| is_peak(f, j, thr)) {
                    break;
                }
            } else if j - last > merge {
                break;
            }
        }
        spans.push((start, last + 1));
        k = next.unwrap_or(last + 1);
    }
    spans.retain(|&(a, b)| (b - a) as f64 * hop >= p.min_note_s - EPS);
    spans
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len().max(1) as f64
}

fn spans_to_notes(spans: &[(usize, usize)], act: &[f64], pitch: u8, inst: Instrument, hop: f64) -> Vec<NoteEvent> {
    spans
        .iter()
        .map(|&(a, b)| NoteEvent {
            onset_s: a as f64 * hop,
            offset_s: b as f64 * hop,
            pitch,
            velocity: DEFAULT_VELOCITY,
            instrument: inst,
            confidence: mean(&act[a..b]).clamp(0.0, 1.0),
        })
        .collect()
}

fn sort_by_time(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.pitch.cmp(&b.pitch)));
}

/// Notes from a `[frames, 88 * k, 3]` piano tensor with channels
/// `[activation, onset, offset]` on the 20 ms grid.
///
/// A note starts at an onset peak (with activation above threshold), sustains
/// while the activation stays above threshold and ends at the earlier of the
/// activation drop and an offset peak. Onset and offset peaks closer than
/// `min_note_s` to the note start are ignored, so they never cut a note below
/// the minimum length.
pub fn decode_piano_notes(act: &ActivationTensor, p: &DecodeParams) -> Result<Vec<NoteEvent>, DecodeError> {
    p.validate()?;
    if act.channels() != 3 {
        return Err(DecodeError::Channels {
            expected: 3,
            found: act.channels(),
        });
    }
    let a = semitone_series(act, 0)?;
    let o = semitone_series(act, 1)?;
    let f = semitone_series(act, 2)?;
    let mut notes = Vec::new();
    for s in 0..PIANO_KEYS {
        let spans = note_spans(&a[s], Onsets::Peaks(&o[s], p.onset_threshold), Some(&f[s]), p, MUSIC_HOP_S);
        notes.extend(spans_to_notes(&spans, &a[s], PIANO_LOW + s as u8, Instrument::Piano, MUSIC_HOP_S));
    }
    sort_by_time(&mut notes);
    Ok(notes)
}

/// One stream per ensemble instrument with at least one note, from a
/// `[frames, 88 * k, 11]` activation tensor. Onsets are upward threshold
/// crossings; a crossing within `merge_gap_s` of the previous note's end
/// continues that note.
pub fn decode_multi_instrument(act: &ActivationTensor, p: &DecodeParams) -> Result<Vec<NoteStream>, DecodeError> {
    p.validate()?;
    let n = Instrument::ENSEMBLE.len();
    if act.channels() != n {
        return Err(DecodeError::Channels {
            expected: n,
            found: act.channels(),
        });
    }
    let mut streams = Vec::new();
    for (c, &inst) in Instrument::ENSEMBLE.iter().enumerate() {
        let a = semitone_series(act, c)?;
        let mut notes = Vec::new();
        for (s, series) in a.iter().enumerate() {
            let spans = note_spans(series, Onsets::RisingEdges, None, p, MUSIC_HOP_S);
            notes.extend(spans_to_notes(&spans, series, PIANO_LOW + s as u8, inst, MUSIC_HOP_S));
        }
        if !notes.is_empty() {
            sort_by_time(&mut notes);
            streams.push(NoteStream::new(inst, notes));
        }
    }
    Ok(streams)
}

/// Drum hits from a `[frames, 1, classes]` tensor on the 10 ms grid: per class,
/// peaks at or above `act_threshold`, at least 50 ms apart.
pub fn decode_drums(act: &ActivationTensor, p: &DecodeParams) -> Result<Vec<DrumEvent>, DecodeError> {
    p.validate()?;
    if act.channels() != DrumClass::ALL.len() {
        return Err(DecodeError::Channels {
            expected: DrumClass::ALL.len(),
            found: act.channels(),
        });
    }
    if act.bins() != 1 {
        return Err(DecodeError::Bins {
            expected: "1",
            found: act.bins(),
        });
    }
    let sep = frames_for(DRUM_MIN_SEPARATION_S, DRUM_HOP_S);
    let mut events = Vec::new();
    for class in DrumClass::ALL {
        let x = act.series(0, class.index());
        for k in pick_peaks(&x, p.act_threshold, sep) {
            events.push(DrumEvent {
                onset_s: k as f64 * DRUM_HOP_S,
                drum_class: class,
                confidence: x[k].clamp(0.0, 1.0),
            });
        }
    }
    events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.drum_class.index().cmp(&b.drum_class.index())));
    Ok(events)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Monophonic vocal notes from a `[frames, 88 * k, 1]` pitch salience and a
/// `[frames, 1, 2]` `[voicing, onset]` segmentation on the 20 ms grid.
///
/// Voiced runs are split at onset peaks; each piece takes the rounded median
/// of its per-frame salience argmax as pitch.
pub fn decode_vocal(salience: &ActivationTensor, seg: &ActivationTensor, p: &DecodeParams) -> Result<Vec<NoteEvent>, DecodeError> {
    p.validate()?;
    if salience.frames() != seg.frames() {
        return Err(DecodeError::Frames {
            left: salience.frames(),
            right: seg.frames(),
        });
    }
    if seg.channels() != 2 || seg.bins() != 1 {
        return Err(DecodeError::Channels {
            expected: 2,
            found: seg.channels() * seg.bins(),
        });
    }
    let bins = salience.bins();
    if bins == 0 || !bins.is_multiple_of(PIANO_KEYS) {
        return Err(DecodeError::Bins {
            expected: "a multiple of 88",
            found: bins,
        });
    }
    let axis = PitchAxis {
        lowest_midi: PIANO_LOW,
        n_semitones: PIANO_KEYS,
        bins_per_semitone: bins / PIANO_KEYS,
    };
    let voicing = seg.series(0, 0);
    let onset = seg.series(0, 1);
    let n = seg.frames();
    let mut pieces = Vec::new();
    let mut k = 0;
    while k < n {
        if voicing[k] < p.act_threshold {
            k += 1;
            continue;
        }
        let mut start = k;
        while k < n && voicing[k] >= p.act_threshold {
            if k > start && is_peak(&onset, k, p.onset_threshold) {
                pieces.push((start, k));
                start = k;
            }
            k += 1;
        }
        pieces.push((start, k));
    }
    let mut notes = Vec::new();
    for (a, b) in pieces {
        if ((b - a) as f64 * MUSIC_HOP_S) < p.min_note_s - EPS {
            continue;
        }
        let contour: Vec<f64> = (a..b)
            .map(|k| {
                let best = (0..bins)
                    .fold((0, f64::NEG_INFINITY), |acc, j| {
                        let v = salience.get(k, j, 0);
                        if v > acc.1 { (j, v) } else { acc }
                    })
                    .0;
                axis.bin_midi(best)
            })
            .collect();
        let pitch = Float::round(median(contour)).clamp(PIANO_LOW as f64, crate::pitch::PIANO_HIGH as f64) as u8;
        notes.push(NoteEvent {
            onset_s: a as f64 * MUSIC_HOP_S,
            offset_s: b as f64 * MUSIC_HOP_S,
            pitch,
            velocity: DEFAULT_VELOCITY,
            instrument: Instrument::Vocal,
            confidence: mean(&voicing[a..b]).clamp(0.0, 1.0),
        });
    }
    Ok(notes)
}

/// Chord segments from `[frames, 1, 25]` distributions: per-frame argmax (the
/// lower class index wins ties) with equal neighbours merged. The segments
/// partition `[0, frames * hop]`.
pub fn decode_chords(probs: &ActivationTensor, grid: &TimeGrid) -> Result<Vec<ChordSegment>, DecodeError> {
    if probs.channels() != ChordLabel::COUNT || probs.bins() != 1 {
        return Err(DecodeError::Channels {
            expected: ChordLabel::COUNT,
            found: probs.channels() * probs.bins(),
        });
    }
    if probs.frames() != grid.n_frames {
        return Err(DecodeError::Frames {
            left: probs.frames(),
            right: grid.n_frames,
        });
    }
    let mut segments: Vec<ChordSegment> = Vec::new();
    for k in 0..probs.frames() {
        let row: Vec<f64> = (0..ChordLabel::COUNT).map(|c| probs.get(k, 0, c)).collect();
        let sum: f64 = row.iter().sum();
        if !(Float::abs(sum - 1.0) <= ROW_SUM_TOLERANCE) {
            return Err(DecodeError::NotNormalized { frame: k, sum });
        }
        let best = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0;
        let label = ChordLabel::from_index(best).unwrap();
        let end_s = (k + 1) as f64 * grid.hop_s;
        match segments.last_mut() {
            Some(s) if s.label == label => s.end_s = end_s,
            _ => segments.push(ChordSegment {
                start_s: k as f64 * grid.hop_s,
                end_s,
                label,
            }),
        }
    }
    Ok(segments)
}

/// Beats from a `[frames, 1, 2]` `[beat, downbeat]` tensor on the 10 ms grid:
/// beat-channel peaks at or above `act_threshold`, at least 200 ms apart;
/// a beat is a downbeat when its downbeat value reaches the same threshold.
pub fn decode_beats(probs: &ActivationTensor, p: &DecodeParams) -> Result<BeatAnnotation, DecodeError> {
    p.validate()?;
    if probs.channels() != 2 || probs.bins() != 1 {
        return Err(DecodeError::Channels {
            expected: 2,
            found: probs.channels() * probs.bins(),
        });
    }
    let beat = probs.series(0, 0);
    let sep = frames_for(BEAT_MIN_SEPARATION_S, BEAT_HOP_S);
    let frames = pick_peaks(&beat, p.act_threshold, sep);
    let beats_s = frames.iter().map(|&k| k as f64 * BEAT_HOP_S).collect();
    let downbeats_s = frames
        .iter()
        .filter(|&&k| probs.get(k, 0, 1) >= p.act_threshold)
        .map(|&k| k as f64 * BEAT_HOP_S)
        .collect();
    Ok(BeatAnnotation { beats_s, downbeats_s })
}
