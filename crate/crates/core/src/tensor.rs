use alloc::vec;
use alloc::vec::Vec;

/// Dense `frames x bins x channels` tensor, frame-major.
///
/// Model outputs and ideal targets share this layout. Class-per-frame outputs
/// (drum onsets, chords, beats, vocal segmentation) use a single bin with one
/// channel per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    frames: usize,
    bins: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("tensor shape mismatch: expected {expected:?}, found {found:?}")]
pub struct ShapeError {
    pub expected: [usize; 3],
    pub found: [usize; 3],
}

impl ActivationTensor {
    pub fn zeros(frames: usize, bins: usize, channels: usize) -> Self {
        Self {
            frames,
            bins,
            channels,
            data: vec![0.0; frames * bins * channels],
        }
    }

    pub fn filled(frames: usize, bins: usize, channels: usize, value: f64) -> Self {
        Self {
            frames,
            bins,
            channels,
            data: vec![value; frames * bins * channels],
        }
    }

    pub fn from_vec(frames: usize, bins: usize, channels: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != frames * bins * channels {
            return Err(ShapeError {
                expected: [frames, bins, channels],
                found: [data.len(), 1, 1],
            });
        }
        Ok(Self {
            frames,
            bins,
            channels,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.bins, self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn index(&self, frame: usize, bin: usize, channel: usize) -> usize {
        debug_assert!(frame < self.frames && bin < self.bins && channel < self.channels);
        (frame * self.bins + bin) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> f64 {
        self.data[self.index(frame, bin, channel)]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, value: f64) {
        let i = self.index(frame, bin, channel);
        self.data[i] = value;
    }

    /// Time series of one `(bin, channel)` cell.
    pub fn series(&self, bin: usize, channel: usize) -> Vec<f64> {
        (0..self.frames).map(|k| self.get(k, bin, channel)).collect()
    }

    pub fn ensure_shape(&self, expected: [usize; 3]) -> Result<(), ShapeError> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(ShapeError {
                expected,
                found: self.shape(),
            })
        }
    }

    /// Keep only `channels` (in the given order).
    pub fn select_channels(&self, channels: &[usize]) -> Self {
        let mut out = Self::zeros(self.frames, self.bins, channels.len());
        for k in 0..self.frames {
            for b in 0..self.bins {
                for (j, &c) in channels.iter().enumerate() {
                    out.set(k, b, j, self.get(k, b, c));
                }
            }
        }
        out
    }

    /// Cells `>= 0.5` become 1, everything else 0.
    pub fn binarized(&self) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = if *v >= 0.5 { 1.0 } else { 0.0 };
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
