//! Additive rendering of symbolic music for auditioning and synthetic data.
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::AudioClip;
use crate::midi::{DrumClass, Instrument, MidiDocument, NoteEvent};
use crate::pitch::midi_to_hz;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub sample_rate: u32,
    /// Relative amplitudes of partials 1..=4.
    pub partials: [f64; 4],
    /// Time constant of the exponential decay of pitched notes.
    pub decay_s: f64,
    pub attack_s: f64,
    /// Linear fade after the note offset.
    pub release_s: f64,
    /// Output peak after normalization.
    pub peak: f64,
    /// Seeds the drum noise.
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: crate::features::DEFAULT_SAMPLE_RATE,
            partials: [1.0, 0.5, 0.33, 0.25],
            decay_s: 0.8,
            attack_s: 0.005,
            release_s: 0.02,
            peak: 0.9,
            seed: 0,
        }
    }
}

/// Per-instrument scaling of the upper partials, so ensemble members differ in
/// timbre. Piano and anything outside the ensemble keep the base profile.
fn timbre(inst: Instrument) -> [f64; 4] {
    match inst.ensemble_index() {
        Some(i) if i > 0 => core::array::from_fn(|k| if k == 0 { 1.0 } else { 0.2 + 0.8 * ((i * (k + 1) * 7) % 11) as f64 / 10.0 }),
        _ => [1.0; 4],
    }
}

fn add_tone(out: &mut [f64], note: &NoteEvent, p: &SynthParams) {
    let sr = p.sample_rate as f64;
    let shape = timbre(note.instrument);
    let f0 = midi_to_hz(note.pitch as f64);
    let gain = note.velocity as f64 / 127.0;
    let start = (note.onset_s * sr).round() as usize;
    let hold = ((note.offset_s - note.onset_s).max(0.0) * sr).round() as usize;
    let release = (p.release_s * sr).round() as usize;
    let end = (start + hold + release).min(out.len());
    for (i, y) in out.iter_mut().enumerate().take(end).skip(start) {
        let n = i - start;
        let t = n as f64 / sr;
        let mut env = Float::exp(-t / p.decay_s) * (t / p.attack_s).min(1.0);
        if n >= hold {
            env *= 1.0 - (n - hold) as f64 / release.max(1) as f64;
        }
        let mut v = 0.0;
        for (k, &a) in p.partials.iter().enumerate() {
            let f = f0 * (k + 1) as f64;
            if f < 0.5 * sr {
                v += a * shape[k] * Float::sin(2.0 * PI * f * t);
            }
        }
        *y += gain * env * v;
    }
}

/// Noise burst shaped per class: low-passed for the kick, band-passed for the
/// snare, high-passed for the hi-hat.
fn add_drum(out: &mut [f64], onset_s: f64, class: DrumClass, gain: f64, rng: &mut ChaCha8Rng, sr: f64) {
    let (decay_s, cutoff_hz) = match class {
        DrumClass::Kick => (0.08, 150.0),
        DrumClass::Snare => (0.12, 1800.0),
        DrumClass::HiHat => (0.04, 7000.0),
    };
    // keep the corner well below Nyquist at low sample rates
    let cutoff_hz = f64::min(cutoff_hz, 0.25 * sr);
    let alpha = 1.0 - Float::exp(-2.0 * PI * cutoff_hz / sr);
    let start = (onset_s * sr).round() as usize;
    let len = (5.0 * decay_s * sr) as usize;
    let (mut low, mut low2) = (0.0, 0.0);
    for (n, y) in out.iter_mut().skip(start).take(len).enumerate() {
        let x: f64 = rng.random_range(-1.0..1.0);
        low += alpha * (x - low);
        let v = match class {
            DrumClass::Kick => low,
            DrumClass::Snare => {
                low2 += (alpha * 0.25) * (x - low2);
                low - low2
            }
            DrumClass::HiHat => x - low,
        };
        *y += gain * Float::exp(-(n as f64 / sr) / decay_s) * v;
    }
}

/// Renders every stream of `doc`: pitched notes as decaying four-partial tones
/// at their equal-tempered frequency, drum-track notes as noise bursts. The
/// result lasts at least `min_duration_s` and is scaled to `params.peak`;
/// a document without audible events renders as silence.
pub fn sonify(doc: &MidiDocument, min_duration_s: f64, params: &SynthParams) -> AudioClip {
    let sr = params.sample_rate as f64;
    let duration = (doc.end_s() + params.release_s).max(min_duration_s);
    let n = ((duration * sr).ceil() as usize).max(1);
    let mut out = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for stream in &doc.streams {
        for note in &stream.notes {
            if stream.instrument.is_drums() {
                if let Some(class) = DrumClass::from_gm_key(note.pitch) {
                    add_drum(&mut out, note.onset_s, class, note.velocity as f64 / 127.0, &mut rng, sr);
                }
            } else {
                add_tone(&mut out, note, params);
            }
        }
    }
    let m = out.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if m > 0.0 {
        out.iter_mut().for_each(|v| *v *= params.peak / m);
    } else {
        log::warn!("nothing to render; output is silent");
    }
    AudioClip::new(out, params.sample_rate).expect("rendered samples are finite")
}

/// Samples of one rendered note, before normalization; handy for fixtures.
pub fn tone(pitch: u8, duration_s: f64, params: &SynthParams) -> Vec<f64> {
    let n = ((duration_s + params.release_s) * params.sample_rate as f64).ceil() as usize;
    let mut out = vec![0.0; n.max(1)];
    let note = NoteEvent::new(0.0, duration_s, pitch, Instrument::Piano);
    add_tone(&mut out, &note, params);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    use crate::dsp::Fft;
    use crate::midi::NoteStream;

    fn params() -> SynthParams {
        SynthParams {
            sample_rate: 8000,
            ..SynthParams::default()
        }
    }

    /// Magnitude spectrum of the first `n` samples.
    fn spectrum(x: &[f64], n: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x[..n].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Fft::new(n).forward(&mut buf);
        buf.iter().take(n / 2).map(|c| c.norm()).collect()
    }

    #[test]
    fn a4_peaks_at_440() {
        let doc = MidiDocument::single(Instrument::Piano, vec![NoteEvent::new(0.0, 0.5, 69, Instrument::Piano)]);
        let clip = sonify(&doc, 0.0, &params());
        let n = 2000;
        let s = spectrum(clip.samples(), n);
        let peak = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        let bin_hz = 8000.0 / n as f64;
        assert!((peak as f64 * bin_hz - 440.0).abs() <= bin_hz, "peak at {} Hz", peak as f64 * bin_hz);
        let m = clip.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((m - 0.9).abs() < 1e-12);
    }

    #[test]
    fn two_notes_both_fundamentals() {
        let notes = vec![
            NoteEvent::new(0.0, 0.5, 60, Instrument::Piano),
            NoteEvent::new(0.0, 0.5, 67, Instrument::Piano),
        ];
        let clip = sonify(&MidiDocument::single(Instrument::Piano, notes), 0.0, &params());
        let n = 4000;
        let s = spectrum(clip.samples(), n);
        let at = |hz: f64| s[(hz * n as f64 / 8000.0).round() as usize];
        let floor = s.iter().sum::<f64>() / s.len() as f64;
        assert!(at(midi_to_hz(60.0)) > 10.0 * floor);
        assert!(at(midi_to_hz(67.0)) > 10.0 * floor);
    }

    #[test]
    fn empty_document_is_silent() {
        let clip = sonify(&MidiDocument::default(), 1.0, &params());
        assert_eq!(clip.samples().len(), 8000);
        assert!(clip.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn drums_render_deterministically() {
        let hits = [(0.0, DrumClass::Kick), (0.25, DrumClass::Snare), (0.5, DrumClass::HiHat)];
        let notes = hits
            .iter()
            .map(|&(t, c)| NoteEvent::new(t, t + 0.05, c.gm_key(), Instrument::Drums))
            .collect();
        let doc = MidiDocument::from_streams(vec![NoteStream::new(Instrument::Drums, notes)]);
        let a = sonify(&doc, 0.0, &params());
        let b = sonify(&doc, 0.0, &params());
        assert_eq!(a, b);
        let energy = |from: f64, to: f64| {
            a.samples()[(from * 8000.0) as usize..(to * 8000.0) as usize].iter().map(|v| v * v).sum::<f64>()
        };
        assert!(energy(0.0, 0.05) > 0.0 && energy(0.25, 0.3) > 0.0 && energy(0.5, 0.55) > 0.0);
        // the hi-hat is brighter than the kick
        let zc = |from: f64| {
            let s = &a.samples()[(from * 8000.0) as usize..(from * 8000.0 + 200.0) as usize];
            s.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
        };
        assert!(zc(0.5) > 3 * zc(0.0));
    }
}
