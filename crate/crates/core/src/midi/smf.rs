//! Standard MIDI File reading (formats 0 and 1) and writing (format 1).
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{sort_notes, truncate_same_pitch_overlaps, Instrument, MidiDocument, NoteEvent, NoteStream, DRUM_CHANNEL};
use crate::pitch::{PIANO_HIGH, PIANO_LOW};

const DEFAULT_TEMPO_US: u32 = 500_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {reason}")]
    Parse { offset: usize, reason: &'static str },
    #[error("unsupported MIDI feature at byte {offset}: {reason}")]
    Unsupported { offset: usize, reason: &'static str },
    #[error("{what} {value} out of MIDI range")]
    Range { what: &'static str, value: i64 },
}

/// Side information from [`read_midi_with_report`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub format: u16,
    pub tracks: usize,
    /// Notes outside the 88-key range that were dropped.
    pub dropped_out_of_range: usize,
    /// Note-ons without a matching note-off, closed at the end of their track.
    pub closed_at_track_end: usize,
    /// Notes truncated because the same key was struck again while sounding.
    pub retriggered: usize,
}

pub fn read_midi(bytes: &[u8]) -> Result<MidiDocument, MidiError> {
    read_midi_with_report(bytes).map(|(d, _)| d)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self, what: &'static str) -> Result<u8, MidiError> {
        let b = *self.buf.get(self.pos).ok_or(MidiError::Parse {
            offset: self.pos,
            reason: what,
        })?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], MidiError> {
        if self.buf.len() - self.pos < n {
            return Err(MidiError::Parse {
                offset: self.pos,
                reason: what,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, MidiError> {
        let s = self.take(4, what)?;
        Ok(u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
    }

    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut v: u32 = 0;
        for _ in 0..4 {
            let b = self.u8("truncated variable-length quantity")?;
            v = (v << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(MidiError::Parse {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes",
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    NoteOn { channel: u8, key: u8, velocity: u8 },
    NoteOff { channel: u8, key: u8 },
    Program { channel: u8, program: u8 },
    Tempo(u32),
    EndOfTrack,
}

fn parse_track(data: &[u8], base: usize) -> Result<(Vec<(u64, Event)>, u64), MidiError> {
    let mut c = Cursor { buf: data, pos: 0 };
    let err_at = |c: &Cursor, e: MidiError| match e {
        MidiError::Parse { offset, reason } => MidiError::Parse {
            offset: base + offset,
            reason,
        },
        other => {
            let _ = c;
            other
        }
    };
    let mut events = Vec::new();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    while c.pos < data.len() {
        let delta = c.vlq().map_err(|e| err_at(&c, e))?;
        tick += delta as u64;
        let status_pos = c.pos;
        let first = c.u8("truncated event").map_err(|e| err_at(&c, e))?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            c.pos -= 1;
            running.ok_or(MidiError::Parse {
                offset: base + status_pos,
                reason: "data byte without running status",
            })?
        };
        match status {
            0xff => {
                running = None;
                let kind = c.u8("truncated meta event").map_err(|e| err_at(&c, e))?;
                let len = c.vlq().map_err(|e| err_at(&c, e))? as usize;
                let body = c.take(len, "truncated meta event").map_err(|e| err_at(&c, e))?;
                match kind {
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        if us == 0 {
                            return Err(MidiError::Parse {
                                offset: base + status_pos,
                                reason: "zero tempo",
                            });
                        }
                        events.push((tick, Event::Tempo(us)));
                    }
                    0x2f => {
                        events.push((tick, Event::EndOfTrack));
                        return Ok((events, tick));
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = c.vlq().map_err(|e| err_at(&c, e))? as usize;
                c.take(len, "truncated sysex").map_err(|e| err_at(&c, e))?;
            }
            0xf1..=0xfe => {
                return Err(MidiError::Parse {
                    offset: base + status_pos,
                    reason: "system message inside a track",
                });
            }
            _ => {
                running = Some(status);
                let channel = status & 0x0f;
                let n_data = match status & 0xf0 {
                    0xc0 | 0xd0 => 1,
                    _ => 2,
                };
                let d = c.take(n_data, "truncated channel event").map_err(|e| err_at(&c, e))?;
                if d.iter().any(|&b| b & 0x80 != 0) {
                    return Err(MidiError::Parse {
                        offset: base + status_pos,
                        reason: "status byte inside channel event data",
                    });
                }
                match status & 0xf0 {
                    0x90 if d[1] > 0 => events.push((
                        tick,
                        Event::NoteOn {
                            channel,
                            key: d[0],
                            velocity: d[1],
                        },
                    )),
                    0x80 | 0x90 => events.push((tick, Event::NoteOff { channel, key: d[0] })),
                    0xc0 => events.push((tick, Event::Program { channel, program: d[0] })),
                    _ => {}
                }
            }
        }
    }
    Ok((events, tick))
}

/// Piecewise-constant tempo map from absolute ticks to seconds.
struct TempoMap {
    /// (tick, seconds at tick, seconds per tick from here on)
    segments: Vec<(u64, f64, f64)>,
}

impl TempoMap {
    fn new(mut changes: Vec<(u64, u32)>, tpq: u16) -> Self {
        changes.sort_by_key(|c| c.0);
        let spt = |us: u32| us as f64 * 1e-6 / tpq as f64;
        let mut segments = vec![(0u64, 0.0f64, spt(DEFAULT_TEMPO_US))];
        for (tick, us) in changes {
            let (t0, s0, r0) = *segments.last().unwrap();
            let s = s0 + (tick - t0) as f64 * r0;
            if tick == t0 {
                segments.pop();
            }
            segments.push((tick, s, spt(us)));
        }
        Self { segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let i = self.segments.partition_point(|s| s.0 <= tick).saturating_sub(1);
        let (t0, s0, r) = self.segments[i];
        s0 + (tick - t0) as f64 * r
    }
}

/// Parses a format 0 or 1 file, also returning what had to be repaired.
pub fn read_midi_with_report(bytes: &[u8]) -> Result<(MidiDocument, ReadReport), MidiError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4, "truncated header")?;
    if magic != b"MThd" {
        return Err(MidiError::Parse {
            offset: 0,
            reason: "missing MThd header",
        });
    }
    let hlen = c.u32("truncated header")? as usize;
    if hlen < 6 {
        return Err(MidiError::Parse {
            offset: 4,
            reason: "header chunk shorter than 6 bytes",
        });
    }
    let header = c.take(hlen, "truncated header")?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntrks = u16::from_be_bytes([header[2], header[3]]) as usize;
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(MidiError::Unsupported {
            offset: 8,
            reason: "only formats 0 and 1 are supported",
        });
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::Unsupported {
            offset: 12,
            reason: "SMPTE time division",
        });
    }
    if division == 0 {
        return Err(MidiError::Parse {
            offset: 12,
            reason: "zero ticks per quarter note",
        });
    }

    let mut tracks = Vec::with_capacity(ntrks);
    while tracks.len() < ntrks {
        let chunk_start = c.pos;
        let kind = c.take(4, "truncated track header")?;
        let len = c.u32("truncated track header")? as usize;
        let body_start = c.pos;
        let body = c.take(len, "track shorter than its declared length").map_err(|_| MidiError::Parse {
            offset: chunk_start,
            reason: "track shorter than its declared length",
        })?;
        if kind != b"MTrk" {
            continue;
        }
        tracks.push(parse_track(body, body_start)?);
    }

    let tempo_changes: Vec<(u64, u32)> = tracks
        .iter()
        .flat_map(|(evs, _)| evs.iter())
        .filter_map(|&(t, e)| match e {
            Event::Tempo(us) => Some((t, us)),
            _ => None,
        })
        .collect();
    let first_tempo = tempo_changes
        .iter()
        .filter(|c| c.0 == 0)
        .map(|c| c.1)
        .next_back()
        .unwrap_or(DEFAULT_TEMPO_US);
    let map = TempoMap::new(tempo_changes, division);

    let mut report = ReadReport {
        format,
        tracks: tracks.len(),
        ..ReadReport::default()
    };
    // (track, channel, instrument) -> notes, in first-appearance order
    let mut order: Vec<(usize, u8, Instrument)> = Vec::new();
    let mut groups: BTreeMap<(usize, u8, Instrument), Vec<NoteEvent>> = BTreeMap::new();
    for (ti, (events, end_tick)) in tracks.iter().enumerate() {
        let mut program = [0u8; 16];
        // (start tick, velocity, instrument) per channel and key
        let mut sounding: Vec<[Option<(u64, u8, Instrument)>; 128]> = vec![[None; 128]; 16];
        let mut emit = |ch: u8, key: u8, start: u64, end: u64, vel: u8, inst: Instrument, report: &mut ReadReport| {
            if end <= start {
                return;
            }
            if !(PIANO_LOW..=PIANO_HIGH).contains(&key) {
                report.dropped_out_of_range += 1;
                return;
            }
            let note = NoteEvent {
                onset_s: map.seconds(start),
                offset_s: map.seconds(end),
                pitch: key,
                velocity: vel,
                instrument: inst,
                confidence: 1.0,
            };
            let gk = (ti, ch, inst);
            if !groups.contains_key(&gk) {
                order.push(gk);
            }
            groups.entry(gk).or_default().push(note);
        };
        for &(tick, ev) in events {
            match ev {
                Event::Program { channel, program: p } => program[channel as usize] = p,
                Event::NoteOn { channel, key, velocity } => {
                    let slot = &mut sounding[channel as usize][key as usize];
                    if let Some((start, vel, inst)) = slot.take() {
                        report.retriggered += 1;
                        emit(channel, key, start, tick, vel, inst, &mut report);
                    }
                    let inst = if channel == DRUM_CHANNEL {
                        Instrument::Drums
                    } else {
                        Instrument::from_program(program[channel as usize])
                    };
                    sounding[channel as usize][key as usize] = Some((tick, velocity, inst));
                }
                Event::NoteOff { channel, key } => {
                    if let Some((start, vel, inst)) = sounding[channel as usize][key as usize].take() {
                        emit(channel, key, start, tick, vel, inst, &mut report);
                    }
                }
                Event::Tempo(_) | Event::EndOfTrack => {}
            }
        }
        for ch in 0..16u8 {
            for key in 0..128u8 {
                if let Some((start, vel, inst)) = sounding[ch as usize][key as usize].take() {
                    report.closed_at_track_end += 1;
                    emit(ch, key, start, *end_tick, vel, inst, &mut report);
                }
            }
        }
    }

    let streams = order
        .into_iter()
        .map(|k| {
            let mut notes = groups.remove(&k).unwrap_or_default();
            sort_notes(&mut notes);
            truncate_same_pitch_overlaps(&mut notes);
            NoteStream { instrument: k.2, notes }
        })
        .filter(|s| !s.notes.is_empty())
        .collect();

    Ok((
        MidiDocument {
            streams,
            tempo_bpm: 60e6 / first_tempo as f64,
            ticks_per_quarter: division,
        },
        report,
    ))
}

fn push_vlq(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 5];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

fn push_chunk(out: &mut Vec<u8>, kind: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(kind);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
}

fn encode_track(mut events: Vec<(u64, u8, [u8; 3], usize)>) -> Vec<u8> {
    // (tick, sort rank, bytes, length); offs (rank 0) before program (1) before ons (2)
    events.sort_by_key(|e| (e.0, e.1));
    let mut body = Vec::new();
    let mut last = 0u64;
    for (tick, _, bytes, len) in events {
        push_vlq(&mut body, (tick - last) as u32);
        body.extend_from_slice(&bytes[..len]);
        last = tick;
    }
    body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
    body
}

/// Encodes a format 1 file: a tempo track followed by one track per stream.
/// Pitched streams get their own channel (skipping the percussion channel) and a
/// program change; drum streams play on the percussion channel.
pub fn write_midi(doc: &MidiDocument) -> Result<Vec<u8>, MidiError> {
    if !(doc.tempo_bpm > 0.0 && doc.tempo_bpm.is_finite()) {
        return Err(MidiError::Range {
            what: "tempo",
            value: doc.tempo_bpm as i64,
        });
    }
    if doc.ticks_per_quarter == 0 || doc.ticks_per_quarter & 0x8000 != 0 {
        return Err(MidiError::Range {
            what: "ticks per quarter",
            value: doc.ticks_per_quarter as i64,
        });
    }
    let us = Float::round(60e6 / doc.tempo_bpm);
    if !(1.0..=16_777_215.0).contains(&us) {
        return Err(MidiError::Range {
            what: "tempo (us per quarter)",
            value: us as i64,
        });
    }
    let us = us as u32;
    let spt = us as f64 * 1e-6 / doc.ticks_per_quarter as f64;
    let to_tick = |t: f64| -> Result<u64, MidiError> {
        let x = Float::round(t / spt);
        if !(x >= 0.0 && x < (1u64 << 40) as f64) {
            return Err(MidiError::Range {
                what: "time",
                value: t as i64,
            });
        }
        Ok(x as u64)
    };

    let mut out = Vec::new();
    let mut header = Vec::with_capacity(6);
    header.extend_from_slice(&1u16.to_be_bytes());
    header.extend_from_slice(&((doc.streams.len() + 1) as u16).to_be_bytes());
    header.extend_from_slice(&doc.ticks_per_quarter.to_be_bytes());
    push_chunk(&mut out, b"MThd", &header);

    let tb = us.to_be_bytes();
    let mut tempo_track = vec![0x00, 0xff, 0x51, 0x03, tb[1], tb[2], tb[3]];
    tempo_track.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
    push_chunk(&mut out, b"MTrk", &tempo_track);

    let mut next_channel = 0u8;
    for stream in &doc.streams {
        let channel = if stream.instrument.is_drums() {
            DRUM_CHANNEL
        } else {
            let ch = next_channel;
            next_channel = (next_channel + 1) % 16;
            if next_channel == DRUM_CHANNEL {
                next_channel += 1;
            }
            ch
        };
        let mut events = Vec::with_capacity(stream.notes.len() * 2 + 1);
        if !stream.instrument.is_drums() {
            let program = stream.instrument.program();
            if program > 127 {
                return Err(MidiError::Range {
                    what: "program",
                    value: program as i64,
                });
            }
            events.push((0, 1, [0xc0 | channel, program, 0], 2));
        }
        for n in &stream.notes {
            if n.pitch > 127 {
                return Err(MidiError::Range {
                    what: "pitch",
                    value: n.pitch as i64,
                });
            }
            if !(1..=127).contains(&n.velocity) {
                return Err(MidiError::Range {
                    what: "velocity",
                    value: n.velocity as i64,
                });
            }
            let on = to_tick(n.onset_s)?;
            let off = to_tick(n.offset_s)?.max(on + 1);
            events.push((on, 2, [0x90 | channel, n.pitch, n.velocity], 3));
            events.push((off, 0, [0x80 | channel, n.pitch, 0], 3));
        }
        push_chunk(&mut out, b"MTrk", &encode_track(events));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_note_file() -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0");
        let body: &[u8] = &[
            0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, // tempo 500000
            0x00, 0x90, 60, 100, // note on
            0x83, 0x60, 0x80, 60, 0, // +480 note off
            0x00, 0xff, 0x2f, 0x00,
        ];
        push_chunk(&mut f, b"MTrk", body);
        f
    }

    #[test]
    fn reads_single_quarter_note() {
        let doc = read_midi(&one_note_file()).unwrap();
        assert_eq!(doc.streams.len(), 1);
        let n = &doc.streams[0].notes[0];
        assert_eq!((n.onset_s, n.offset_s, n.pitch), (0.0, 0.5, 60));
        assert_eq!(doc.tempo_bpm, 120.0);
        assert_eq!(doc.ticks_per_quarter, 480);
    }

    #[test]
    fn empty_track_list_gives_no_streams() {
        let f = b"MThd\x00\x00\x00\x06\x00\x01\x00\x00\x01\xe0";
        let doc = read_midi(f).unwrap();
        assert!(doc.streams.is_empty());
    }

    #[test]
    fn truncated_track_names_offset() {
        let mut f = one_note_file();
        f.truncate(f.len() - 3);
        match read_midi(&f) {
            Err(MidiError::Parse { offset, .. }) => assert_eq!(offset, 14),
            other => panic!("unexpected {other:?}"),
        }
        match read_midi(b"MTh") {
            Err(MidiError::Parse { offset: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn running_status_and_velocity_zero_offs() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x00\x60");
        let body: &[u8] = &[
            0x00, 0x90, 60, 90, // on
            0x00, 64, 90, // running status on
            0x60, 60, 0, // off via vel 0
            0x00, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        push_chunk(&mut f, b"MTrk", body);
        let doc = read_midi(&f).unwrap();
        assert_eq!(doc.note_count(), 2);
        assert!(doc.all_notes().iter().all(|n| n.offset_s == 0.5));
    }

    #[test]
    fn overlapping_same_pitch_last_on_wins() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0");
        let body: &[u8] = &[
            0x00, 0x90, 60, 100, // on @0
            0x81, 0x70, 0x90, 60, 100, // on @240 while sounding
            0x83, 0x60, 0x80, 60, 0, // off @720
            0x81, 0x70, 0x80, 60, 0, // stray off @960
            0x00, 0xff, 0x2f, 0x00,
        ];
        push_chunk(&mut f, b"MTrk", body);
        let (doc, rep) = read_midi_with_report(&f).unwrap();
        let notes = &doc.streams[0].notes;
        assert_eq!(notes.len(), 2);
        assert_eq!((notes[0].onset_s, notes[0].offset_s), (0.0, 0.25));
        assert_eq!((notes[1].onset_s, notes[1].offset_s), (0.25, 0.75));
        assert_eq!(rep.retriggered, 1);
        assert!(!doc.streams[0].has_same_pitch_overlap());
    }

    #[test]
    fn unpaired_note_on_closed_at_track_end() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0");
        let body: &[u8] = &[0x00, 0x90, 62, 100, 0x87, 0x40, 0xff, 0x2f, 0x00];
        push_chunk(&mut f, b"MTrk", body);
        let (doc, rep) = read_midi_with_report(&f).unwrap();
        assert_eq!(rep.closed_at_track_end, 1);
        assert_eq!(doc.streams[0].notes[0].offset_s, 1.0);
    }

    #[test]
    fn zero_note_document_has_only_tempo() {
        let bytes = write_midi(&MidiDocument::default()).unwrap();
        assert_eq!(&bytes[..4], b"MThd");
        // header + tempo track only
        assert_eq!(bytes.len(), 14 + 8 + 11);
        assert_eq!(&bytes[22..29], &[0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]);
        assert!(read_midi(&bytes).unwrap().streams.is_empty());
    }

    #[test]
    fn velocity_out_of_range_rejected() {
        let mut n = NoteEvent::new(0.0, 1.0, 60, Instrument::Piano);
        n.velocity = 0;
        let doc = MidiDocument::single(Instrument::Piano, vec![n]);
        assert!(matches!(write_midi(&doc), Err(MidiError::Range { what: "velocity", .. })));
    }

    #[test]
    fn tempo_changes_are_honoured_on_read() {
        let mut f = Vec::new();
        f.extend_from_slice(b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0");
        let body: &[u8] = &[
            0x00, 0x90, 60, 100, // on @0 at 120 bpm
            0x83, 0x60, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40, // @480 tempo 60 bpm
            0x83, 0x60, 0x80, 60, 0, // off @960
            0x00, 0xff, 0x2f, 0x00,
        ];
        push_chunk(&mut f, b"MTrk", body);
        let doc = read_midi(&f).unwrap();
        assert!((doc.streams[0].notes[0].offset_s - 1.5).abs() < 1e-12);
    }
}
