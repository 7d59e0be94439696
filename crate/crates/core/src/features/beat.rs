//! Beat-informed preprocessing for drum transcription: a beat tracker runs on
//! the input spectrogram and its beat phase is appended as an extra channel.
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{ChannelKind, FeatureError, SpectralFeature};
use crate::time::DRUM_HOP_S;

const MIN_BPM: f64 = 40.0;
const MAX_BPM: f64 = 240.0;
const PRIOR_BPM: f64 = 120.0;
/// Width of the log2-tempo prior, in octaves.
const PRIOR_OCTAVES: f64 = 1.0;
/// Penalty on deviations of an inter-beat interval from the tempo period.
const TIGHTNESS: f64 = 100.0;

/// Beats estimated from an onset-strength envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTrack {
    /// Beat frames, ascending.
    pub beats: Vec<usize>,
    /// Tempo period in frames.
    pub period: usize,
}

/// Output of [`beat_informed_preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeatInformed {
    pub feature: SpectralFeature,
    /// `None` when the onset strength is flat and no tempo could be estimated;
    /// the phase channel is then all zeros.
    pub track: Option<BeatTrack>,
}

impl BeatInformed {
    pub fn tempo_failed(&self) -> bool {
        self.track.is_none()
    }
}

/// Half-wave rectified frame-to-frame increase of `ln(1 + 100 x)` summed over
/// bins of channel 0.
fn onset_strength(spec: &SpectralFeature) -> Vec<f64> {
    let n = spec.frames();
    let mut out = vec![0.0; n];
    for k in 1..n {
        out[k] = (0..spec.bins)
            .map(|b| {
                let a = Float::ln_1p(100.0 * spec.get(k, b, 0));
                let p = Float::ln_1p(100.0 * spec.get(k - 1, b, 0));
                (a - p).max(0.0)
            })
            .sum();
    }
    out
}

/// Tempo by autocorrelation of the onset envelope under a log-normal prior
/// around 120 BPM, then dynamic-programming beat placement.
pub fn estimate_beats(envelope: &[f64], hop_s: f64) -> Option<BeatTrack> {
    let n = envelope.len();
    let mean = envelope.iter().sum::<f64>() / n.max(1) as f64;
    let var = envelope.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
    if !(var > 1e-12) {
        return None;
    }
    let std = Float::sqrt(var);
    let env: Vec<f64> = envelope.iter().map(|v| v / std).collect();
    let centred: Vec<f64> = env.iter().map(|v| v - mean / std).collect();

    let min_lag = Float::round(60.0 / (MAX_BPM * hop_s)).max(1.0) as usize;
    let max_lag = (Float::round(60.0 / (MIN_BPM * hop_s)) as usize).min(n.saturating_sub(1));
    if max_lag <= min_lag {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for lag in min_lag..=max_lag {
        let r: f64 = (0..n - lag).map(|i| centred[i] * centred[i + lag]).sum::<f64>() / (n - lag) as f64;
        let bpm = 60.0 / (lag as f64 * hop_s);
        let z = Float::log2(bpm / PRIOR_BPM) / PRIOR_OCTAVES;
        let score = r * Float::exp(-0.5 * z * z);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((lag, score));
        }
    }
    let (period, score) = best?;
    if !(score > 0.0) {
        return None;
    }

    // cumulative score with a log-interval transition penalty
    let p = period as f64;
    let mut cum = vec![0.0; n];
    let mut back: Vec<Option<usize>> = vec![None; n];
    for t in 0..n {
        let lo = t.saturating_sub(2 * period);
        let hi = t.saturating_sub((period / 2).max(1));
        let mut best_prev: Option<(usize, f64)> = None;
        if t >= (period / 2).max(1) {
            for tau in lo..=hi {
                let d = Float::ln((t - tau) as f64 / p);
                let s = cum[tau] - TIGHTNESS * d * d;
                if best_prev.is_none_or(|(_, b)| s > b) {
                    best_prev = Some((tau, s));
                }
            }
        }
        match best_prev {
            Some((tau, s)) if s > 0.0 => {
                cum[t] = env[t] + s;
                back[t] = Some(tau);
            }
            _ => cum[t] = env[t],
        }
    }
    let tail = n.saturating_sub(period);
    let mut t = (tail..n).max_by(|&a, &b| cum[a].total_cmp(&cum[b]).then(b.cmp(&a)))?;
    let mut beats = vec![t];
    while let Some(prev) = back[t] {
        beats.push(prev);
        t = prev;
    }
    beats.reverse();
    Some(BeatTrack { beats, period })
}

/// Phase in `[0, 1)` of every frame within its inter-beat interval; frames
/// before the first or after the last beat extrapolate with the tempo period.
fn beat_phase(track: &BeatTrack, n: usize) -> Vec<f64> {
    let p = track.period as isize;
    let first = track.beats[0] as isize;
    let last = *track.beats.last().unwrap() as isize;
    let mut out = vec![0.0; n];
    let mut i = 0;
    for (k, o) in out.iter_mut().enumerate() {
        let k = k as isize;
        while i + 1 < track.beats.len() && track.beats[i + 1] as isize <= k {
            i += 1;
        }
        *o = if k < first || k >= last {
            let base = if k < first { first } else { last };
            (k - base).rem_euclid(p) as f64 / p as f64
        } else {
            let a = track.beats[i] as f64;
            let b = track.beats[i + 1] as f64;
            (k as f64 - a) / (b - a)
        };
    }
    out
}

/// Appends a beat-phase channel to a 10 ms spectrogram.
pub fn beat_informed_preprocess(spec: &SpectralFeature) -> Result<BeatInformed, FeatureError> {
    if Float::abs(spec.grid.hop_s - DRUM_HOP_S) > 1e-4 {
        return Err(FeatureError::Parameter {
            name: "hop_s",
            value: spec.grid.hop_s,
        });
    }
    if spec.channels.first() != Some(&ChannelKind::Spectrogram) {
        return Err(FeatureError::Layout("channel 0 must be a spectrogram"));
    }
    let env = onset_strength(spec);
    let track = estimate_beats(&env, spec.grid.hop_s);
    let n = spec.frames();
    let phase = match &track {
        Some(t) => beat_phase(t, n),
        None => {
            log::warn!("flat onset strength; beat phase channel left at zero");
            vec![0.0; n]
        }
    };
    let old_c = spec.channels.len();
    let nc = old_c + 1;
    let mut data = vec![0.0; n * spec.bins * nc];
    for k in 0..n {
        for b in 0..spec.bins {
            let src = (k * spec.bins + b) * old_c;
            let dst = (k * spec.bins + b) * nc;
            data[dst..dst + old_c].copy_from_slice(&spec.data[src..src + old_c]);
            data[dst + old_c] = phase[k];
        }
    }
    let mut channels = spec.channels.clone();
    channels.push(ChannelKind::BeatPhase);
    Ok(BeatInformed {
        feature: SpectralFeature {
            data,
            bins: spec.bins,
            channels,
            grid: spec.grid,
            axis: spec.axis,
            sample_rate: spec.sample_rate,
        },
        track,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{compute_spectrogram, AudioClip};
    use rand::{Rng, SeedableRng};

    fn click_track(bpm: f64, dur: f64, sr: u32) -> (AudioClip, Vec<f64>) {
        let n = (dur * sr as f64) as usize;
        let mut x = vec![0.0; n];
        let period = 60.0 / bpm;
        let mut clicks = Vec::new();
        let mut t = 0.25;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        while t < dur - 0.05 {
            clicks.push(t);
            let s = (t * sr as f64) as usize;
            for j in 0..(0.02 * sr as f64) as usize {
                if s + j < n {
                    x[s + j] += rng.random_range(-0.8..0.8) * Float::exp(-(j as f64) / (0.003 * sr as f64));
                }
            }
            t += period;
        }
        (AudioClip::new(x, sr).unwrap(), clicks)
    }

    #[test]
    fn click_track_at_120_bpm() {
        let (clip, clicks) = click_track(120.0, 8.0, 22_050);
        let spec = compute_spectrogram(&clip, 0.046, 0.01).unwrap();
        let out = beat_informed_preprocess(&spec).unwrap();
        let track = out.track.as_ref().expect("tempo");
        let ibi = track.period as f64 * 0.01;
        assert!((ibi - 0.5).abs() <= 0.02, "inter-beat interval {ibi}");
        let phase_c = out.feature.channel_index(ChannelKind::BeatPhase).unwrap();
        assert_eq!(phase_c, 1);
        // phase resets (wraps to ~0) within two frames of each interior click
        for &c in &clicks[1..clicks.len() - 1] {
            let k = (c / 0.01).round() as usize;
            let near_zero = (k.saturating_sub(2)..=k + 2).any(|j| {
                let v = out.feature.get(j, 0, phase_c);
                !(0.06..=0.94).contains(&v)
            });
            assert!(near_zero, "no phase reset near click at {c}");
        }
        assert!(out.feature.is_valid());
        let ph = out.feature.channel(phase_c);
        assert!(ph.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn silence_sets_failure_flag() {
        let clip = AudioClip::silence(3.0, 16_000);
        let spec = compute_spectrogram(&clip, 0.032, 0.01).unwrap();
        let out = beat_informed_preprocess(&spec).unwrap();
        assert!(out.tempo_failed());
        let c = out.feature.channel_index(ChannelKind::BeatPhase).unwrap();
        assert!(out.feature.channel(c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_preserved_on_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let clip = AudioClip::new((0..32_000).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000).unwrap();
        let spec = compute_spectrogram(&clip, 0.032, 0.01).unwrap();
        let out = beat_informed_preprocess(&spec).unwrap();
        assert_eq!(out.feature.frames(), spec.frames());
        assert_eq!(out.feature.n_channels(), 2);
    }

    #[test]
    fn wrong_hop_rejected() {
        let clip = AudioClip::silence(1.0, 16_000);
        let spec = compute_spectrogram(&clip, 0.032, 0.02).unwrap();
        assert!(beat_informed_preprocess(&spec).is_err());
    }
}
