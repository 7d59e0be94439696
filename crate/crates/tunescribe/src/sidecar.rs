//! Plain-text outputs for chords and beats. Times are seconds with three
//! decimals, fields separated by a tab.
use std::fmt::Write;

use tunescribe_core::{BeatAnnotation, ChordSegment};

pub fn format_chords(segments: &[ChordSegment]) -> String {
    let mut out = String::new();
    for s in segments {
        writeln!(out, "{:.3}\t{:.3}\t{}", s.start_s, s.end_s, s.label).unwrap();
    }
    out
}

pub fn parse_chords(text: &str) -> Result<Vec<ChordSegment>, String> {
    let mut segs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let [a, b, l] = f[..] else {
            return Err(format!("line {}: expected start, end, label", i + 1));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 1));
        segs.push(ChordSegment {
            start_s: num(a)?,
            end_s: num(b)?,
            label: l.parse().map_err(|e| format!("line {}: {e}", i + 1))?,
        });
    }
    Ok(segs)
}

/// One beat per line with 1 for downbeats and 0 otherwise.
pub fn format_beats(beats: &BeatAnnotation) -> String {
    let mut out = String::new();
    for &t in &beats.beats_s {
        let down = beats.downbeats_s.iter().any(|&d| (d - t).abs() < 1e-9);
        writeln!(out, "{t:.3}\t{}", down as u8).unwrap();
    }
    out
}

pub fn parse_beats(text: &str) -> Result<BeatAnnotation, String> {
    let mut ann = BeatAnnotation::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let [t, d] = f[..] else {
            return Err(format!("line {}: expected time, is_downbeat", i + 1));
        };
        let t: f64 = t.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
        ann.beats_s.push(t);
        match d {
            "1" => ann.downbeats_s.push(t),
            "0" => {}
            _ => return Err(format!("line {}: is_downbeat must be 0 or 1", i + 1)),
        }
    }
    ann.validate().map_err(|e| e.to_string())?;
    Ok(ann)
}
