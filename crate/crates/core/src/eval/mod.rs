//! Transcription metrics.
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::midi::{BeatAnnotation, ChordSegment, NoteEvent, NoteStream};
use crate::tensor::ActivationTensor;

pub const NOTE_ONSET_TOLERANCE_S: f64 = 0.050;
pub const BEAT_TOLERANCE_S: f64 = 0.070;
/// Allowed disagreement between the total durations of two chord segmentations.
pub const CHORD_DURATION_TOLERANCE_S: f64 = 0.001;

/// Slack on tolerance comparisons so that a shift of exactly `tol` matches
/// despite rounding in the stored times.
const TOL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("shape mismatch: reference {reference:?}, estimate {estimate:?}")]
    Shape { reference: [usize; 3], estimate: [usize; 3] },
    #[error("durations differ: reference {reference} s, estimate {estimate} s")]
    Duration { reference: f64, estimate: f64 },
    #[error("chord segments are not a partition: {0}")]
    Segments(&'static str),
    #[error("malformed metric record: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_ref: usize,
    pub n_est: usize,
    pub n_match: usize,
}

impl MetricReport {
    /// Report from match counts. Empty reference and estimate count as a
    /// perfect score.
    pub fn from_counts(n_ref: usize, n_est: usize, n_match: usize) -> Self {
        assert!(n_match <= n_ref.min(n_est), "more matches than events");
        let (precision, recall) = if n_ref == 0 && n_est == 0 {
            (1.0, 1.0)
        } else {
            let ratio = |n: usize| if n == 0 { 0.0 } else { n_match as f64 / n as f64 };
            (ratio(n_est), ratio(n_ref))
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            n_ref,
            n_est,
            n_match,
        }
    }

    /// Parses the output of `Display`. Unknown keys are rejected; the scores
    /// are recomputed from the counts.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut counts = [None; 3];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| EvalError::Parse(alloc::format!("no '=' in {line:?}")))?;
            let slot = match k.trim() {
                "n_ref" => 0,
                "n_est" => 1,
                "n_match" => 2,
                "precision" | "recall" | "f1" => continue,
                other => return Err(EvalError::Parse(alloc::format!("unknown key {other:?}"))),
            };
            let n = v.trim().parse::<usize>().map_err(|e| EvalError::Parse(alloc::format!("{k}: {e}")))?;
            counts[slot] = Some(n);
        }
        match counts {
            [Some(r), Some(e), Some(m)] if m <= r.min(e) => Ok(Self::from_counts(r, e, m)),
            [Some(_), Some(_), Some(_)] => Err(EvalError::Parse(String::from("n_match exceeds n_ref or n_est"))),
            _ => Err(EvalError::Parse(String::from("missing count"))),
        }
    }
}

/// One `key=value` pair per line.
impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "precision={:.6}", self.precision)?;
        writeln!(f, "recall={:.6}", self.recall)?;
        writeln!(f, "f1={:.6}", self.f1)?;
        writeln!(f, "n_ref={}", self.n_ref)?;
        writeln!(f, "n_est={}", self.n_est)?;
        write!(f, "n_match={}", self.n_match)
    }
}

/// Cell-wise scores of two binary tensors; cells count as active when > 0.5.
pub fn frame_f1(reference: &ActivationTensor, estimate: &ActivationTensor) -> Result<MetricReport, EvalError> {
    if reference.shape() != estimate.shape() {
        return Err(EvalError::Shape {
            reference: reference.shape(),
            estimate: estimate.shape(),
        });
    }
    let (mut n_ref, mut n_est, mut n_match) = (0, 0, 0);
    for (&r, &e) in reference.data().iter().zip(estimate.data()) {
        let (r, e) = (r > 0.5, e > 0.5);
        n_ref += r as usize;
        n_est += e as usize;
        n_match += (r && e) as usize;
    }
    Ok(MetricReport::from_counts(n_ref, n_est, n_match))
}

/// Size of a maximum one-to-one matching between two time lists where a pair
/// matches when the times differ by at most `tol`.
///
/// With both lists sorted, matching each reference to the earliest unmatched
/// estimate inside its window is optimal: every window has the same width, so
/// the windows are ordered by both ends and an exchange argument applies.
fn max_matching(reference: &[f64], estimate: &[f64], tol: f64) -> usize {
    let sorted = |x: &[f64]| {
        let mut v = x.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (r, e) = (sorted(reference), sorted(estimate));
    let tol = tol + TOL_SLACK;
    let mut j = 0;
    let mut n = 0;
    for &t in &r {
        while j < e.len() && e[j] < t - tol {
            j += 1;
        }
        if j < e.len() && e[j] <= t + tol {
            n += 1;
            j += 1;
        }
    }
    n
}

/// Onset-and-pitch note scores; offsets are ignored.
pub fn note_f1(reference: &[NoteEvent], estimate: &[NoteEvent], onset_tol_s: f64) -> MetricReport {
    let onsets = |notes: &[NoteEvent], pitch: u8| -> Vec<f64> {
        notes.iter().filter(|n| n.pitch == pitch).map(|n| n.onset_s).collect()
    };
    let mut pitches: Vec<u8> = reference.iter().chain(estimate).map(|n| n.pitch).collect();
    pitches.sort_unstable();
    pitches.dedup();
    let n_match = pitches
        .iter()
        .map(|&p| max_matching(&onsets(reference, p), &onsets(estimate, p), onset_tol_s))
        .sum();
    MetricReport::from_counts(reference.len(), estimate.len(), n_match)
}

/// Micro-averaged note scores over instrument streams: notes only match within
/// the same instrument and all counts are pooled.
pub fn stream_note_f1(reference: &[NoteStream], estimate: &[NoteStream], onset_tol_s: f64) -> MetricReport {
    let mut insts: Vec<_> = reference.iter().chain(estimate).map(|s| s.instrument).collect();
    insts.sort_unstable();
    insts.dedup();
    let gather = |streams: &[NoteStream], inst| -> Vec<NoteEvent> {
        streams.iter().filter(|s| s.instrument == inst).flat_map(|s| s.notes.iter().cloned()).collect()
    };
    let (mut n_ref, mut n_est, mut n_match) = (0, 0, 0);
    for inst in insts {
        let r = note_f1(&gather(reference, inst), &gather(estimate, inst), onset_tol_s);
        n_ref += r.n_ref;
        n_est += r.n_est;
        n_match += r.n_match;
    }
    MetricReport::from_counts(n_ref, n_est, n_match)
}

fn check_partition(segs: &[ChordSegment]) -> Result<f64, EvalError> {
    let first = segs.first().ok_or(EvalError::Segments("empty"))?;
    if first.start_s.abs() > CHORD_DURATION_TOLERANCE_S {
        return Err(EvalError::Segments("does not start at 0"));
    }
    for s in segs {
        if !(s.end_s >= s.start_s) {
            return Err(EvalError::Segments("segment ends before it starts"));
        }
    }
    for w in segs.windows(2) {
        if (w[1].start_s - w[0].end_s).abs() > CHORD_DURATION_TOLERANCE_S {
            return Err(EvalError::Segments("gap or overlap between segments"));
        }
    }
    Ok(segs[segs.len() - 1].end_s)
}

/// Fraction of the timeline on which the labels agree.
pub fn chord_accuracy(reference: &[ChordSegment], estimate: &[ChordSegment]) -> Result<f64, EvalError> {
    let (dr, de) = (check_partition(reference)?, check_partition(estimate)?);
    if (dr - de).abs() > CHORD_DURATION_TOLERANCE_S {
        return Err(EvalError::Duration {
            reference: dr,
            estimate: de,
        });
    }
    if dr <= 0.0 {
        return Ok(1.0);
    }
    let (mut i, mut j) = (0, 0);
    let mut agree = 0.0;
    while i < reference.len() && j < estimate.len() {
        let (r, e) = (&reference[i], &estimate[j]);
        let overlap = r.end_s.min(e.end_s) - r.start_s.max(e.start_s);
        if overlap > 0.0 && r.label == e.label {
            agree += overlap;
        }
        if r.end_s <= e.end_s {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok((agree / dr).clamp(0.0, 1.0))
}

/// Beat and downbeat scores, matched independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatReport {
    pub beats: MetricReport,
    pub downbeats: MetricReport,
}

pub fn beat_f_measure(reference: &BeatAnnotation, estimate: &BeatAnnotation, tol_s: f64) -> BeatReport {
    let score = |r: &[f64], e: &[f64]| MetricReport::from_counts(r.len(), e.len(), max_matching(r, e, tol_s));
    BeatReport {
        beats: score(&reference.beats_s, &estimate.beats_s),
        downbeats: score(&reference.downbeats_s, &estimate.downbeats_s),
    }
}
