use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use num_traits::Float;

/// Precomputed complex FFT of a fixed length.
///
/// Power-of-two lengths use an iterative radix-2 transform; other lengths go
/// through Bluestein's chirp-z reduction onto a power-of-two transform.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Radix2 { twiddles: Vec<Complex64>, rev: Vec<usize> },
    Bluestein { chirp: Vec<Complex64>, kernel_hat: Vec<Complex64>, inner: Box<Fft> },
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let rev = (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect();
            let twiddles = (0..n / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect();
            return Self {
                n,
                kind: Kind::Radix2 { twiddles, rev },
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        // chirp[k] = exp(-i pi k^2 / n); k^2 reduced mod 2n keeps the angle exact
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        let inner = Fft::new(m);
        inner.forward(&mut kernel);
        Self {
            n,
            kind: Kind::Bluestein {
                chirp,
                kernel_hat: kernel,
                inner: Box::new(inner),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform `X[k] = sum_j x[j] exp(-2 pi i j k / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n);
        match &self.kind {
            Kind::Radix2 { twiddles, rev } => {
                for i in 0..self.n {
                    let j = rev[i];
                    if j > i {
                        data.swap(i, j);
                    }
                }
                let mut len = 2;
                while len <= self.n {
                    let step = self.n / len;
                    for start in (0..self.n).step_by(len) {
                        for k in 0..len / 2 {
                            let w = twiddles[k * step];
                            let a = data[start + k];
                            let b = data[start + k + len / 2] * w;
                            data[start + k] = a + b;
                            data[start + k + len / 2] = a - b;
                        }
                    }
                    len <<= 1;
                }
            }
            Kind::Bluestein {
                chirp,
                kernel_hat,
                inner,
            } => {
                let m = inner.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); m];
                for k in 0..self.n {
                    buf[k] = data[k] * chirp[k];
                }
                inner.forward(&mut buf);
                for (b, h) in buf.iter_mut().zip(kernel_hat) {
                    *b *= h;
                }
                inner.inverse_unscaled(&mut buf);
                let scale = 1.0 / m as f64;
                for k in 0..self.n {
                    data[k] = buf[k] * chirp[k] * scale;
                }
            }
        }
    }

    fn inverse_unscaled(&self, data: &mut [Complex64]) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data);
        for v in data.iter_mut() {
            *v = v.conj();
        }
    }

    /// In-place inverse transform, scaled by `1/n`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_unscaled(data);
        let s = 1.0 / self.n as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    /// Magnitudes of bins `0..=n/2` of a real frame (zero padded to `n`).
    pub fn real_magnitude(&self, frame: &[f64], out: &mut Vec<f64>) {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward(&mut buf);
        out.clear();
        out.extend(buf[..self.n / 2 + 1].iter().map(|c| c.norm()));
    }
}

/// Direct O(n^2) DFT, used as a reference in tests.
pub fn naive_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                let ang = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                acc += v * Complex64::new(Float::cos(ang), Float::sin(ang));
            }
            if inverse {
                acc / n as f64
            } else {
                acc
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_signal(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_many_lengths() {
        for n in [1usize, 2, 3, 5, 8, 12, 17, 64, 100, 257] {
            let x = random_signal(n, n as u64);
            let mut y = x.clone();
            let fft = Fft::new(n);
            fft.forward(&mut y);
            let r = naive_dft(&x, false);
            for (a, b) in y.iter().zip(&r) {
                assert!((a - b).norm() < 1e-9 * (n as f64), "n={n}: {a} vs {b}");
            }
            fft.inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a - b).norm() < 1e-10 * (n as f64));
            }
        }
    }
}
