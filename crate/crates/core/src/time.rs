/// Frame hop of the pitched transcription tasks (music, vocal).
pub const MUSIC_HOP_S: f64 = 0.020;
/// Frame hop of drum onsets and beat tracking.
pub const DRUM_HOP_S: f64 = 0.010;
/// Frame hop of beat tracking.
pub const BEAT_HOP_S: f64 = 0.010;
/// Frame hop of chord recognition.
pub const CHORD_HOP_S: f64 = 0.230;

use num_traits::Float;

const EDGE_EPS: f64 = 1e-9;

/// Uniform frame grid. Frame `k` covers the half-open interval
/// `[k * hop_s, (k + 1) * hop_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub hop_s: f64,
    pub n_frames: usize,
}

impl TimeGrid {
    pub fn new(hop_s: f64, n_frames: usize) -> Self {
        assert!(hop_s > 0.0 && hop_s.is_finite(), "hop must be positive");
        Self { hop_s, n_frames }
    }

    /// Smallest grid of the given hop whose frames cover `[0, duration_s)`.
    pub fn covering(hop_s: f64, duration_s: f64) -> Self {
        Self::new(hop_s, frames_covering(hop_s, duration_s))
    }

    pub fn duration_s(&self) -> f64 {
        self.n_frames as f64 * self.hop_s
    }

    pub fn frame_start(&self, k: usize) -> f64 {
        k as f64 * self.hop_s
    }

    /// Frame containing time `t` (clamped at zero, not at the grid end).
    pub fn frame_of(&self, t: f64) -> usize {
        frame_floor(self.hop_s, t)
    }

    /// Frames touched by the interval `[start, end)`: `start_frame..end_frame`.
    pub fn frame_span(&self, start: f64, end: f64) -> (usize, usize) {
        let a = frame_floor(self.hop_s, start);
        let b = frame_ceil(self.hop_s, end).max(a + 1);
        (a, b)
    }
}

pub(crate) fn frame_floor(hop: f64, t: f64) -> usize {
    let x = Float::floor(t / hop + EDGE_EPS);
    if x <= 0.0 {
        0
    } else {
        x as usize
    }
}

pub(crate) fn frame_ceil(hop: f64, t: f64) -> usize {
    let x = Float::ceil(t / hop - EDGE_EPS);
    if x <= 0.0 {
        0
    } else {
        x as usize
    }
}

pub(crate) fn frames_covering(hop: f64, duration: f64) -> usize {
    frame_ceil(hop, duration).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_open_frames() {
        let g = TimeGrid::new(0.02, 100);
        assert_eq!(g.frame_of(0.06), 3);
        assert_eq!(g.frame_of(0.0599999), 2);
        assert_eq!(g.frame_span(0.06, 0.16), (3, 8));
        assert_eq!(g.frame_span(0.061, 0.161), (3, 9));
    }

    #[test]
    fn covering_is_ceil() {
        assert_eq!(TimeGrid::covering(0.01, 1.0).n_frames, 100);
        assert_eq!(TimeGrid::covering(0.01, 1.001).n_frames, 101);
        assert_eq!(TimeGrid::covering(0.23, 0.0).n_frames, 1);
    }
}
