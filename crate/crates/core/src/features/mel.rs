use ndarray::Array2;

use super::dsp::{hann, Framing, RealFft};
use super::{Waveform, MEL_DIM, MEL_HOP, SAMPLE_RATE};
use crate::error::Result;

pub const MEL_FLOOR: f32 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct MelConfig {
    pub n_fft: usize,
    pub win: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            n_fft: 1024,
            win: 800,
            hop: MEL_HOP,
            n_mels: MEL_DIM,
            f_min: 50.0,
            f_max: 8000.0,
        }
    }
}

/// Natural-log mel amplitudes, one row per 12.5 ms frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f32>,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn mel_points(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.f_min);
    let hi = hz_to_mel(cfg.f_max);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Center frequency (Hz) of each triangular band.
pub fn mel_band_centers(cfg: &MelConfig) -> Vec<f64> {
    mel_points(cfg)[1..=cfg.n_mels].to_vec()
}

/// Triangular filterbank, `n_mels × (n_fft/2 + 1)`, unit peak per band.
pub fn mel_filterbank(cfg: &MelConfig) -> Array2<f64> {
    let bins = cfg.n_fft / 2 + 1;
    let pts = mel_points(cfg);
    let mut fb = Array2::zeros((cfg.n_mels, bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
        for k in 0..bins {
            let f = k as f64 * SAMPLE_RATE as f64 / cfg.n_fft as f64;
            let v = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            fb[[m, k]] = v;
        }
    }
    fb
}

/// STFT magnitude with the mel framing: rows are frames, columns FFT bins.
pub(crate) fn magnitude_frames(wave: &Waveform, cfg: &MelConfig) -> Array2<f64> {
    let framing = Framing {
        hop: cfg.hop,
        win: cfg.win,
    };
    let window = hann(cfg.win);
    let fft = RealFft::new(cfg.n_fft);
    let t = framing.n_frames(wave.len());
    let mut out = Array2::zeros((t, fft.bins()));
    for i in 0..t {
        let seg = framing.windowed(&wave.samples, i, &window);
        for (k, v) in fft.forward(&seg).iter().enumerate() {
            out[[i, k]] = v.norm();
        }
    }
    out
}

pub fn extract_mel(wave: &Waveform) -> Result<MelSpectrogram> {
    extract_mel_with(wave, &MelConfig::default())
}

pub fn extract_mel_with(wave: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    wave.check_non_empty()?;
    let mag = magnitude_frames(wave, cfg);
    let fb = mel_filterbank(cfg);
    let mel = mag.dot(&fb.t());
    Ok(MelSpectrogram {
        frames: mel.mapv(|v| (v as f32).max(MEL_FLOOR).ln()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()) as f32)
                .collect(),
        )
    }

    #[test]
    fn one_second_gives_eighty_frames() {
        let m = extract_mel(&Waveform::new(vec![0.1; 16000])).unwrap();
        assert_eq!(m.frames.dim(), (80, 80));
    }

    #[test]
    fn silence_is_floor() {
        let m = extract_mel(&Waveform::new(vec![0.0; 4000])).unwrap();
        let floor = MEL_FLOOR.ln();
        assert!(m.frames.iter().all(|&v| v == floor));
    }

    #[test]
    fn empty_wave_is_error() {
        assert!(extract_mel(&Waveform::new(vec![])).is_err());
    }

    #[test]
    fn sine_peaks_in_nearest_band() {
        let cfg = MelConfig::default();
        let centers = mel_band_centers(&cfg);
        let expected = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 440.0).abs().partial_cmp(&(b.1 - 440.0).abs()).unwrap())
            .unwrap()
            .0;
        let m = extract_mel(&sine(440.0, 16000)).unwrap();
        // skip the two edge frames whose windows hang off the signal
        for t in 2..m.n_frames() - 2 {
            let row = m.frames.row(t);
            let arg = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(arg, expected, "frame {t}");
        }
    }

    #[test]
    fn filterbank_covers_range() {
        let cfg = MelConfig::default();
        let c = mel_band_centers(&cfg);
        assert_eq!(c.len(), 80);
        assert!(c[0] > 50.0 && *c.last().unwrap() < 8000.0);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
    }
}
