use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{BinAxis, ChannelKind, FeatureError, SpectralFeature};
use crate::pitch::PitchAxis;

/// How one output pitch bin is read from the linear source bins.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Tap {
    /// Maximum over source bins `lo..hi`.
    Max(usize, usize),
    /// Linear interpolation between two neighbouring source bins.
    Lerp(usize, usize, f64),
    Zero,
}

impl Tap {
    #[inline]
    pub(crate) fn read(&self, row: &[f64]) -> f64 {
        match *self {
            Tap::Max(lo, hi) => row[lo..hi].iter().copied().fold(0.0, f64::max),
            Tap::Lerp(a, b, w) => row[a] * (1.0 - w) + row[b] * w,
            Tap::Zero => 0.0,
        }
    }
}

/// Taps for a channel whose source bin `i` sits at `position(i)` Hz, where
/// `position` is monotone over `1..n_src`.
pub(crate) fn frequency_taps(axis: &PitchAxis, n_src: usize, hz_per_bin: f64) -> Vec<Tap> {
    (0..axis.n_bins())
        .map(|b| {
            let (lo, hi) = axis.bin_edges_hz(b);
            let first = Float::ceil(lo / hz_per_bin) as usize;
            let last = Float::ceil(hi / hz_per_bin) as usize;
            let (first, last) = (first.min(n_src), last.min(n_src));
            if last > first {
                Tap::Max(first, last)
            } else {
                let x = axis.bin_hz(b) / hz_per_bin;
                let i = Float::floor(x) as usize;
                if i + 1 >= n_src {
                    Tap::Zero
                } else {
                    Tap::Lerp(i, i + 1, x - i as f64)
                }
            }
        })
        .collect()
}

/// Taps for a cepstral channel: source bin `q` is a lag of `q` samples, which
/// corresponds to frequency `sr / q`.
fn quefrency_taps(axis: &PitchAxis, n_src: usize, sample_rate: f64) -> Vec<Tap> {
    (0..axis.n_bins())
        .map(|b| {
            let (lo, hi) = axis.bin_edges_hz(b);
            // lags with sr/q in [lo, hi) are q in (sr/hi, sr/lo]
            let first = Float::floor(sample_rate / hi) as usize + 1;
            let last = Float::floor(sample_rate / lo) as usize + 1;
            let (first, last) = (first.min(n_src), last.min(n_src));
            if last > first {
                Tap::Max(first, last)
            } else {
                let x = sample_rate / axis.bin_hz(b);
                let i = Float::floor(x) as usize;
                if i + 1 >= n_src || i == 0 {
                    Tap::Zero
                } else {
                    Tap::Lerp(i, i + 1, x - i as f64)
                }
            }
        })
        .collect()
}

/// Resamples a linear-bin feature onto a log-frequency pitch axis.
///
/// Spectral channels (spectrogram, GCoS) are read at frequency; the GC channel is
/// read at lag `sr / f`. Each pitch bin takes the maximum of the source bins
/// inside its band, or interpolates when the band falls between two source bins.
/// Beat-phase channels are copied per frame.
pub fn to_pitch_axis(feature: &SpectralFeature, axis: &PitchAxis) -> Result<SpectralFeature, FeatureError> {
    let n_fft = match feature.axis {
        BinAxis::Linear { n_fft } => n_fft,
        BinAxis::Pitch(_) => return Err(FeatureError::Layout("feature is already on a pitch axis")),
    };
    let sr = feature.sample_rate as f64;
    let hz_per_bin = sr / n_fft as f64;
    let spectral = frequency_taps(axis, feature.bins, hz_per_bin);
    let cepstral = quefrency_taps(axis, feature.bins, sr);
    let nb = axis.n_bins();
    let nc = feature.channels.len();
    let frames = feature.frames();
    let mut data = vec![0.0; frames * nb * nc];
    let mut row = vec![0.0; feature.bins];
    for (c, kind) in feature.channels.iter().enumerate() {
        for k in 0..frames {
            for (i, r) in row.iter_mut().enumerate() {
                *r = feature.get(k, i, c);
            }
            for b in 0..nb {
                let v = match kind {
                    ChannelKind::Spectrogram | ChannelKind::Gcos => spectral[b].read(&row),
                    ChannelKind::GeneralizedCepstrum => cepstral[b].read(&row),
                    ChannelKind::BeatPhase => row[0],
                };
                data[(k * nb + b) * nc + c] = v;
            }
        }
    }
    Ok(SpectralFeature {
        data,
        bins: nb,
        channels: feature.channels.clone(),
        grid: feature.grid,
        axis: BinAxis::Pitch(*axis),
        sample_rate: feature.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{feature_stack, AudioClip, FeatureParams};
    use core::f64::consts::PI;
    use num_traits::Float;

    fn harmonic(f0: f64, dur: f64, sr: u32) -> AudioClip {
        let n = (dur * sr as f64) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr as f64;
                    (1..=6).map(|h| Float::sin(2.0 * PI * f0 * h as f64 * t) / h as f64).sum::<f64>() * 0.2
                })
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn pitch_stack_peaks_at_the_played_semitone() {
        let clip = harmonic(220.0, 0.6, 44_100);
        let st = feature_stack(&clip, &FeatureParams::default()).unwrap();
        let p = to_pitch_axis(&st, &PitchAxis::PIANO_QUARTER).unwrap();
        assert_eq!(p.shape(), [st.frames(), 352, 3]);
        let k = p.frames() / 2;
        let a3 = PitchAxis::PIANO_QUARTER.bins_of_pitch(57).unwrap();
        // product of spectrum, GC and GCoS is largest at the fundamental
        let prod: Vec<f64> = (0..352).map(|b| p.get(k, b, 0) * p.get(k, b, 1) * p.get(k, b, 2)).collect();
        let best = (0..352).max_by(|&a, &b| prod[a].total_cmp(&prod[b])).unwrap();
        assert!(a3.contains(&best), "best bin {best}, expected {a3:?}");
        assert!(p.is_valid());
    }

    #[test]
    fn rejects_pitch_input() {
        let clip = harmonic(220.0, 0.2, 8000);
        let st = feature_stack(&clip, &FeatureParams::default()).unwrap();
        let p = to_pitch_axis(&st, &PitchAxis::PIANO_SEMITONE).unwrap();
        assert!(to_pitch_axis(&p, &PitchAxis::PIANO_SEMITONE).is_err());
    }
}
