//! Framing, windows and FFT plumbing shared by the analyzers and vocoders.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub fn hann(len: usize) -> Vec<f64> {
    // periodic Hann
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Real-input FFT of a fixed size, returning the non-negative half spectrum.
pub struct RealFft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RealFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        RealFft {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// `input` shorter than the FFT size is zero-padded at the end.
    pub fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(input.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.fwd.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Inverse of a half spectrum; imaginary parts of DC and Nyquist are dropped.
    pub fn inverse(&self, half: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, v) in half.iter().enumerate().take(n / 2 + 1) {
            buf[k] = *v;
        }
        buf[0].im = 0.0;
        if n.is_multiple_of(2) {
            buf[n / 2].im = 0.0;
        }
        for k in 1..n.div_ceil(2) {
            buf[n - k] = buf[k].conj();
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Frame layout used throughout: frame `t` is centered on sample `t * hop + hop / 2`,
/// so `ceil(n / hop)` frames cover `n` samples.
#[derive(Debug, Clone, Copy)]
pub struct Framing {
    pub hop: usize,
    pub win: usize,
}

impl Framing {
    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop)
    }

    pub fn center(&self, t: usize) -> usize {
        t * self.hop + self.hop / 2
    }

    /// Copies a `len`-sample segment centered on frame `t`, zero-filled outside the signal.
    pub fn segment(&self, x: &[f32], t: usize, len: usize) -> Vec<f64> {
        let start = self.center(t) as isize - (len / 2) as isize;
        (0..len as isize)
            .map(|i| {
                let j = start + i;
                if j >= 0 && (j as usize) < x.len() {
                    x[j as usize] as f64
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn windowed(&self, x: &[f32], t: usize, window: &[f64]) -> Vec<f64> {
        let mut seg = self.segment(x, t, window.len());
        for (s, w) in seg.iter_mut().zip(window) {
            *s *= w;
        }
        seg
    }
}

pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_roundtrip() {
        let f = RealFft::new(16);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let y = f.inverse(&f.forward(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_count_is_ceiling() {
        let fr = Framing { hop: 200, win: 800 };
        assert_eq!(fr.n_frames(16000), 80);
        assert_eq!(fr.n_frames(16001), 81);
        assert_eq!(fr.n_frames(1), 1);
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((linear_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
    }
}
