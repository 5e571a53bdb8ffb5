//! Simplified World-style analyzer: warped cepstrum, autocorrelation F0,
//! aperiodicity ratio and voicing, all at a 5 ms frame shift.

use ndarray::{s, Array2};

use super::dsp::{hann, Framing, RealFft};
use super::{Waveform, SAMPLE_RATE, WORLD_HOP};
use crate::error::{Error, Result};

pub const MGC_DIM: usize = 60;
/// mgc + log-F0 + bap + vuv.
pub const WORLD_DIM: usize = MGC_DIM + 3;
/// mgc + vuv + log-F0 (bap excluded).
pub const WORLD_COND_DIM: usize = MGC_DIM + 2;

pub const COL_LOG_F0: usize = MGC_DIM;
pub const COL_BAP: usize = MGC_DIM + 1;
pub const COL_VUV: usize = MGC_DIM + 2;

const LOG_AMP_FLOOR: f64 = 1e-5;
const UNVOICED_F0_FALLBACK_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy)]
pub struct WorldConfig {
    pub hop: usize,
    pub win: usize,
    pub n_fft: usize,
    pub f0_win: usize,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Normalized autocorrelation above which a frame counts as voiced.
    pub voicing_threshold: f64,
    /// Frames quieter than this RMS are unvoiced regardless of periodicity.
    pub silence_rms: f64,
    pub alpha: f64,
    pub n_warp: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            hop: WORLD_HOP,
            win: 400,
            n_fft: 512,
            f0_win: 640,
            f0_min: 60.0,
            f0_max: 400.0,
            voicing_threshold: 0.5,
            silence_rms: 1e-3,
            alpha: 0.42,
            n_warp: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldFeatures {
    /// T × 60
    pub mgc: Array2<f32>,
    /// Natural-log Hz, interpolated through unvoiced frames.
    pub log_f0: Vec<f32>,
    pub bap: Vec<f32>,
    pub vuv: Vec<f32>,
}

impl WorldFeatures {
    pub fn n_frames(&self) -> usize {
        self.log_f0.len()
    }

    /// `[mgc | log_f0 | bap | vuv]`, T × 63.
    pub fn to_matrix(&self) -> Array2<f32> {
        let t = self.n_frames();
        let mut m = Array2::zeros((t, WORLD_DIM));
        m.slice_mut(s![.., ..MGC_DIM]).assign(&self.mgc);
        for i in 0..t {
            m[[i, COL_LOG_F0]] = self.log_f0[i];
            m[[i, COL_BAP]] = self.bap[i];
            m[[i, COL_VUV]] = self.vuv[i];
        }
        m
    }

    /// Inverse of [`to_matrix`](Self::to_matrix) for model predictions: vuv is
    /// thresholded at 0.5 and bap clamped to [0, 1].
    pub fn from_matrix(m: &Array2<f32>) -> Result<Self> {
        if m.ncols() != WORLD_DIM {
            return Err(Error::Shape(format!(
                "world matrix needs {WORLD_DIM} columns, got {}",
                m.ncols()
            )));
        }
        Ok(WorldFeatures {
            mgc: m.slice(s![.., ..MGC_DIM]).to_owned(),
            log_f0: m.column(COL_LOG_F0).to_vec(),
            bap: m.column(COL_BAP).iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            vuv: m
                .column(COL_VUV)
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect(),
        })
    }

    pub fn mean_voiced_f0_hz(&self) -> Option<f64> {
        let voiced: Vec<f64> = self
            .log_f0
            .iter()
            .zip(&self.vuv)
            .filter(|(_, &v)| v > 0.5)
            .map(|(&l, _)| (l as f64).exp())
            .collect();
        (!voiced.is_empty()).then(|| voiced.iter().sum::<f64>() / voiced.len() as f64)
    }
}

/// Frequency warping of an all-pass first-order filter; `-alpha` inverts it.
fn warp(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin() / (1.0 - alpha * omega.cos())).atan()
}

/// Linear frequencies (radians) sampled at the midpoints of a uniform warped grid.
fn warped_grid(cfg: &WorldConfig) -> Vec<f64> {
    let n = cfg.n_warp;
    (0..n)
        .map(|i| {
            let wt = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
            warp(wt, -cfg.alpha)
        })
        .collect()
}

fn interp_bins(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    let p = pos.clamp(0.0, last as f64);
    let i = (p.floor() as usize).min(last - 1);
    let f = p - i as f64;
    values[i] * (1.0 - f) + values[i + 1] * f
}

/// Warped cepstrum of one log-amplitude half spectrum.
fn warped_cepstrum(log_amp: &[f64], grid: &[f64]) -> Vec<f64> {
    let bins = log_amp.len() - 1;
    let n = grid.len();
    let sampled: Vec<f64> = grid
        .iter()
        .map(|&w| interp_bins(log_amp, w / std::f64::consts::PI * bins as f64))
        .collect();
    (0..MGC_DIM)
        .map(|k| {
            sampled
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos())
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Log-amplitude envelope on `bins` linear-frequency points from 0 to Nyquist.
pub fn envelope_from_mgc(mgc: &[f32], bins: usize, alpha: f64) -> Vec<f64> {
    (0..bins)
        .map(|k| {
            let omega = std::f64::consts::PI * k as f64 / (bins - 1) as f64;
            let wt = warp(omega, alpha);
            let mut v = mgc[0] as f64;
            for (j, &c) in mgc.iter().enumerate().skip(1) {
                v += 2.0 * c as f64 * (j as f64 * wt).cos();
            }
            v
        })
        .collect()
}

struct PitchEstimate {
    f0_hz: f64,
    periodicity: f64,
}

fn estimate_pitch(seg: &[f64], cfg: &WorldConfig) -> Option<PitchEstimate> {
    let n = seg.len();
    let mean = seg.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = seg.iter().map(|v| v - mean).collect();
    let min_lag = (SAMPLE_RATE as f64 / cfg.f0_max).floor() as usize;
    let max_lag = (SAMPLE_RATE as f64 / cfg.f0_min).ceil() as usize;
    if max_lag + 2 >= n {
        return None;
    }
    // prefix sums of x^2 for the normalization terms
    let mut sq = vec![0.0; n + 1];
    for i in 0..n {
        sq[i + 1] = sq[i] + x[i] * x[i];
    }
    let nccf = |lag: usize| -> f64 {
        let m = n - lag;
        let num: f64 = (0..m).map(|i| x[i] * x[i + lag]).sum();
        let e0 = sq[m];
        let e1 = sq[n] - sq[lag];
        let den = (e0 * e1).sqrt();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(nccf).collect();
    let at = |lag: usize| r[lag + 1 - min_lag];
    let best = (min_lag..=max_lag).map(at).fold(f64::MIN, f64::max);
    if best <= 0.0 {
        return Some(PitchEstimate {
            f0_hz: 0.0,
            periodicity: 0.0,
        });
    }
    // shortest lag that is a local peak close to the global best; avoids octave-down errors
    let lag = (min_lag..=max_lag)
        .find(|&l| at(l) >= 0.9 * best && at(l) >= at(l - 1) && at(l) >= at(l + 1))
        .unwrap_or(min_lag);
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(PitchEstimate {
        f0_hz: SAMPLE_RATE as f64 / (lag as f64 + shift),
        periodicity: b,
    })
}

pub fn extract_world_like(wave: &Waveform) -> Result<WorldFeatures> {
    extract_world_like_with(wave, &WorldConfig::default())
}

pub fn extract_world_like_with(wave: &Waveform, cfg: &WorldConfig) -> Result<WorldFeatures> {
    wave.check_non_empty()?;
    let framing = Framing {
        hop: cfg.hop,
        win: cfg.win,
    };
    let t = framing.n_frames(wave.len());
    let window = hann(cfg.win);
    let fft = RealFft::new(cfg.n_fft);
    let grid = warped_grid(cfg);

    let mut mgc = Array2::zeros((t, MGC_DIM));
    let mut f0 = vec![0.0f64; t];
    let mut vuv = vec![0.0f32; t];
    let mut bap = vec![1.0f32; t];
    for i in 0..t {
        let seg = framing.windowed(&wave.samples, i, &window);
        let log_amp: Vec<f64> = fft
            .forward(&seg)
            .iter()
            .map(|c| c.norm().max(LOG_AMP_FLOOR).ln())
            .collect();
        for (k, v) in warped_cepstrum(&log_amp, &grid).into_iter().enumerate() {
            mgc[[i, k]] = v as f32;
        }

        let pseg = framing.segment(&wave.samples, i, cfg.f0_win);
        let energy = (pseg.iter().map(|v| v * v).sum::<f64>() / pseg.len() as f64).sqrt();
        if energy < cfg.silence_rms {
            continue;
        }
        if let Some(p) = estimate_pitch(&pseg, cfg) {
            if p.periodicity > cfg.voicing_threshold && p.f0_hz > 0.0 {
                f0[i] = p.f0_hz;
                vuv[i] = 1.0;
                bap[i] = (1.0 - p.periodicity).clamp(0.0, 1.0) as f32;
            }
        }
    }
    let log_f0 = interpolate_log_f0(&f0, &vuv);
    Ok(WorldFeatures {
        mgc,
        log_f0,
        bap,
        vuv,
    })
}

/// Log-domain F0 with unvoiced gaps linearly bridged, edges held at the nearest
/// voiced value, and an all-unvoiced contour filled with log(100 Hz).
pub fn interpolate_log_f0(f0_hz: &[f64], vuv: &[f32]) -> Vec<f32> {
    let n = f0_hz.len().min(vuv.len());
    let voiced: Vec<usize> = (0..n)
        .filter(|&i| vuv[i] > 0.5 && f0_hz[i] > 0.0 && f0_hz[i].is_finite())
        .collect();
    if voiced.is_empty() {
        return vec![UNVOICED_F0_FALLBACK_HZ.ln() as f32; n];
    }
    let mut out = vec![0.0f64; n];
    let first = voiced[0];
    let last = *voiced.last().unwrap();
    for i in 0..=first {
        out[i] = f0_hz[first].ln();
    }
    for i in last..n {
        out[i] = f0_hz[last].ln();
    }
    for w in voiced.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (la, lb) = (f0_hz[a].ln(), f0_hz[b].ln());
        for i in a..=b {
            let f = (i - a) as f64 / (b - a) as f64;
            out[i] = la + (lb - la) * f;
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}

/// WaveNet conditioning `[mgc | vuv | log_f0]`; aperiodicity is dropped.
pub fn select_wavenet_conditioning(wf: &WorldFeatures) -> Array2<f32> {
    let t = wf.n_frames();
    let mut m = Array2::zeros((t, WORLD_COND_DIM));
    m.slice_mut(s![.., ..MGC_DIM]).assign(&wf.mgc);
    for i in 0..t {
        m[[i, MGC_DIM]] = wf.vuv[i];
        m[[i, MGC_DIM + 1]] = wf.log_f0[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pulse_train(period: usize, n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| if i % period == 0 { 0.8 } else { 0.0 }).collect())
    }

    #[test]
    fn frame_count_and_dims() {
        let wf = extract_world_like(&Waveform::new(vec![0.01; 16000])).unwrap();
        assert_eq!(wf.n_frames(), 200);
        assert_eq!(wf.mgc.dim(), (200, 60));
        assert_eq!(wf.bap.len(), 200);
        assert_eq!(wf.vuv.len(), 200);
        assert_eq!(wf.to_matrix().ncols(), 63);
    }

    #[test]
    fn pulse_train_pitch() {
        let wf = extract_world_like(&pulse_train(80, 16000)).unwrap();
        let t = wf.n_frames();
        for i in 4..t - 4 {
            assert_eq!(wf.vuv[i], 1.0, "frame {i}");
            let f0 = (wf.log_f0[i] as f64).exp();
            assert!((f0 - 200.0).abs() / 200.0 < 0.03, "frame {i}: {f0}");
        }
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Waveform::new((0..16000).map(|_| rng.random_range(-0.5f32..0.5)).collect());
        let wf = extract_world_like(&w).unwrap();
        let unvoiced = wf.vuv.iter().filter(|&&v| v == 0.0).count() as f64 / wf.n_frames() as f64;
        assert!(unvoiced >= 0.9, "{unvoiced}");
        let mean_bap = wf.bap.iter().map(|&v| v as f64).sum::<f64>() / wf.n_frames() as f64;
        assert!(mean_bap >= 0.8, "{mean_bap}");
    }

    #[test]
    fn interpolation_cases() {
        let l = interpolate_log_f0(&[100.0, 0.0, 100.0], &[1.0, 0.0, 1.0]);
        assert!((l[1] as f64 - 100f64.ln()).abs() < 1e-6);
        let l = interpolate_log_f0(&[100.0, 0.0, 200.0], &[1.0, 0.0, 1.0]);
        assert!((l[1] as f64 - (100f64.ln() + 200f64.ln()) / 2.0).abs() < 1e-6);
        let l = interpolate_log_f0(&[0.0, 0.0], &[0.0, 0.0]);
        assert!(l.iter().all(|&v| (v as f64 - 100f64.ln()).abs() < 1e-6));
        let l = interpolate_log_f0(&[0.0, 150.0, 0.0], &[0.0, 1.0, 0.0]);
        assert!(l.iter().all(|&v| (v as f64 - 150f64.ln()).abs() < 1e-6));
    }

    #[test]
    fn warp_inverts() {
        for i in 0..20 {
            let w = i as f64 * 0.15;
            assert!((warp(warp(w, 0.42), -0.42) - w).abs() < 1e-9);
        }
    }

    #[test]
    fn cepstrum_envelope_roundtrip_on_smooth_spectrum() {
        let cfg = WorldConfig::default();
        let grid = warped_grid(&cfg);
        let la: Vec<f64> = (0..257).map(|k| -2.0 - 3.0 * (k as f64 / 256.0)).collect();
        let c = warped_cepstrum(&la, &grid);
        let c32: Vec<f32> = c.iter().map(|&v| v as f32).collect();
        let env = envelope_from_mgc(&c32, 257, cfg.alpha);
        for k in 8..250 {
            assert!((env[k] - la[k]).abs() < 0.05, "bin {k}: {} vs {}", env[k], la[k]);
        }
    }

    #[test]
    fn conditioning_drops_bap() {
        let mut mgc = Array2::zeros((1, MGC_DIM));
        for j in 0..MGC_DIM {
            mgc[[0, j]] = j as f32;
        }
        let wf = WorldFeatures {
            mgc,
            log_f0: vec![-7.0],
            bap: vec![-99.0],
            vuv: vec![1.0],
        };
        let c = select_wavenet_conditioning(&wf);
        assert_eq!(c.ncols(), 62);
        for j in 0..MGC_DIM {
            assert_eq!(c[[0, j]], j as f32);
        }
        assert_eq!(c[[0, 60]], 1.0);
        assert_eq!(c[[0, 61]], -7.0);
        assert!(c.iter().all(|&v| v != -99.0));
    }
}
