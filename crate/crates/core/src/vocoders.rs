//! Non-neural waveform generation: Griffin-Lim phase reconstruction for mel
//! spectrograms and a compact source-filter synthesizer for World-style
//! features.

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::dsp::{hann, Framing, RealFft};
use crate::features::{
    envelope_from_mgc, mel_filterbank, MelConfig, MelSpectrogram, Waveform, WorldConfig, WorldFeatures, SAMPLE_RATE,
};

pub const GRIFFIN_LIM_ITERS: usize = 60;
/// Ridge term of the mel pseudo-inverse, relative to the mean diagonal of `M Mᵀ`.
const PINV_RIDGE: f64 = 1e-4;

/// Least-norm linear magnitudes (frames × bins) reproducing `mel`, clamped at zero.
pub fn mel_to_linear(mel: &MelSpectrogram, cfg: &MelConfig) -> Result<Array2<f64>> {
    if mel.frames.ncols() != cfg.n_mels {
        return Err(Error::Shape(format!("mel has {} bands, expected {}", mel.frames.ncols(), cfg.n_mels)));
    }
    let fb = mel_filterbank(cfg);
    let (m, k) = fb.dim();
    let fbm = DMatrix::from_row_iterator(m, k, fb.iter().copied());
    let mut gram = &fbm * fbm.transpose();
    let ridge = PINV_RIDGE * gram.trace() / m as f64;
    for i in 0..m {
        gram[(i, i)] += ridge;
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Config("mel filterbank Gram matrix is singular".into()))?;
    // rows of `mel` are xᵀ Mᵀ, so the least-norm x is Mᵀ (M Mᵀ)⁻¹ y
    let pinv = fbm.transpose() * inv;
    let pinv = Array2::from_shape_fn((k, m), |(i, j)| pinv[(i, j)]);
    let amp = mel.frames.mapv(|v| (v as f64).exp());
    Ok(amp.dot(&pinv.t()).mapv(|v| v.max(0.0)))
}

struct Stft {
    framing: Framing,
    window: Vec<f64>,
    fft: RealFft,
    n_samples: usize,
    n_frames: usize,
    norm: Vec<f64>,
}

impl Stft {
    fn new(cfg: &MelConfig, n_frames: usize) -> Self {
        let framing = Framing { hop: cfg.hop, win: cfg.win };
        let window = hann(cfg.win);
        let n_samples = n_frames * cfg.hop;
        let mut norm = vec![0.0; n_samples];
        for t in 0..n_frames {
            let start = framing.center(t) as isize - (cfg.win / 2) as isize;
            for (i, w) in window.iter().enumerate() {
                let j = start + i as isize;
                if j >= 0 && (j as usize) < n_samples {
                    norm[j as usize] += w * w;
                }
            }
        }
        Stft { framing, window, fft: RealFft::new(cfg.n_fft), n_samples, n_frames, norm }
    }

    fn forward(&self, x: &[f32]) -> Vec<Vec<Complex64>> {
        (0..self.n_frames).map(|t| self.fft.forward(&self.framing.windowed(x, t, &self.window))).collect()
    }

    /// Least-squares signal whose STFT is closest to `spec`.
    fn inverse(&self, spec: &[Vec<Complex64>]) -> Vec<f32> {
        let mut acc = vec![0.0; self.n_samples];
        let win = self.window.len();
        for (t, frame) in spec.iter().enumerate() {
            let seg = self.fft.inverse(frame);
            let start = self.framing.center(t) as isize - (win / 2) as isize;
            for i in 0..win {
                let j = start + i as isize;
                if j >= 0 && (j as usize) < self.n_samples {
                    acc[j as usize] += self.window[i] * seg[i];
                }
            }
        }
        acc.iter().zip(&self.norm).map(|(a, n)| if *n > 1e-12 { (a / n) as f32 } else { 0.0 }).collect()
    }

    /// Hermitian-weighted squared distance between `|spec|` and `mag`.
    fn distance(&self, spec: &[Vec<Complex64>], mag: &Array2<f64>) -> f64 {
        let last = self.fft.bins() - 1;
        let mut d = 0.0;
        for (t, frame) in spec.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                let w = if k == 0 || (k == last && self.fft.len().is_multiple_of(2)) { 1.0 } else { 2.0 };
                d += w * (c.norm() - mag[[t, k]]).powi(2);
            }
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub wave: Waveform,
    /// Spectral convergence after each iteration: ‖|STFT x| − S‖ / ‖S‖.
    pub errors: Vec<f64>,
}

/// Phase retrieval from a log-mel spectrogram, starting from zero phase.
pub fn griffin_lim(mel: &MelSpectrogram, n_iters: usize) -> Result<GriffinLimOutput> {
    griffin_lim_with(mel, n_iters, &MelConfig::default())
}

pub fn griffin_lim_with(mel: &MelSpectrogram, n_iters: usize, cfg: &MelConfig) -> Result<GriffinLimOutput> {
    if n_iters == 0 {
        return Err(Error::Config("griffin-lim needs at least one iteration".into()));
    }
    if mel.n_frames() == 0 {
        return Err(Error::Empty("mel spectrogram has no frames"));
    }
    let mag = mel_to_linear(mel, cfg)?;
    let stft = Stft::new(cfg, mel.n_frames());
    let total = {
        let last = stft.fft.bins() - 1;
        mag.indexed_iter()
            .map(|((_, k), v)| if k == 0 || k == last { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
            .max(1e-12)
    };
    let mut spec: Vec<Vec<Complex64>> =
        mag.axis_iter(Axis(0)).map(|row| row.iter().map(|&m| Complex64::new(m, 0.0)).collect()).collect();
    let mut x = stft.inverse(&spec);
    let mut errors = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let est = stft.forward(&x);
        errors.push(stft.distance(&est, &mag).sqrt() / total);
        for (t, (frame, e)) in spec.iter_mut().zip(&est).enumerate() {
            for (k, (s, c)) in frame.iter_mut().zip(e).enumerate() {
                let n = c.norm();
                let phase = if n > 1e-12 { c / n } else { Complex64::new(1.0, 0.0) };
                *s = phase * mag[[t, k]];
            }
        }
        x = stft.inverse(&spec);
    }
    let mut wave = Waveform::new(x);
    wave.limit_peak();
    Ok(GriffinLimOutput { wave, errors })
}

/// Per-frame filtering of a pulse/noise excitation by the mgc envelope,
/// overlap-added with a Hann window two hops long.
pub fn world_lite_synthesize(wf: &WorldFeatures, seed: u64) -> Result<Waveform> {
    let cfg = WorldConfig::default();
    let t = wf.n_frames();
    if t == 0 {
        return Err(Error::Empty("no frames to synthesize"));
    }
    if wf.mgc.nrows() != t || wf.bap.len() != t || wf.vuv.len() != t {
        return Err(Error::Shape("world feature streams differ in length".into()));
    }
    let hop = cfg.hop;
    let n = t * hop;
    let framing = Framing { hop, win: 2 * hop };

    // sample-level F0 and voicing between frame centers
    let center = |i: usize| framing.center(i) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excitation = vec![0.0f64; n];
    let mut phase = 0.0f64;
    for (s, e) in excitation.iter_mut().enumerate() {
        let pos = ((s as f64 - center(0)) / hop as f64).clamp(0.0, (t - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t - 1);
        let f = pos - lo as f64;
        let nearest = pos.round() as usize;
        let noise: f64 = StandardNormal.sample(&mut rng);
        if wf.vuv[nearest] > 0.5 {
            let f0 = ((wf.log_f0[lo] as f64) * (1.0 - f) + (wf.log_f0[hi] as f64) * f).exp();
            let period = SAMPLE_RATE as f64 / f0;
            phase += 1.0 / period;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                period.sqrt()
            } else {
                0.0
            };
            let ap = (wf.bap[nearest] as f64).clamp(0.0, 1.0);
            *e = (1.0 - ap).sqrt() * pulse + ap.sqrt() * noise;
        } else {
            phase = 0.0;
            *e = noise;
        }
    }

    // analysis windows integrate to Σw², so a unit-variance excitation reads back as the envelope
    let gain = 1.0 / hann(cfg.win).iter().map(|w| w * w).sum::<f64>().sqrt();
    let n_fft = cfg.n_fft;
    let conv = RealFft::new(2 * n_fft);
    let bins = n_fft / 2 + 1;
    let window = hann(2 * hop);
    let taper = hann(n_fft);
    let ir_fft = RealFft::new(n_fft);
    let mut out = vec![0.0f64; n];
    for i in 0..t {
        let mgc: Vec<f32> = wf.mgc.row(i).to_vec();
        let env: Vec<Complex64> = envelope_from_mgc(&mgc, bins, cfg.alpha)
            .into_iter()
            .map(|v| Complex64::new(v.exp() * gain, 0.0))
            .collect();
        // zero-phase impulse response, centered and tapered
        let raw = ir_fft.inverse(&env);
        let ir: Vec<f64> = (0..n_fft).map(|j| raw[(j + n_fft / 2) % n_fft] * taper[j]).collect();
        let seg = framing.windowed(&excitation.iter().map(|&v| v as f32).collect::<Vec<_>>(), i, &window);
        let mut a = seg.clone();
        a.resize(2 * n_fft, 0.0);
        let mut b = ir;
        b.resize(2 * n_fft, 0.0);
        let fa = conv.forward(&a);
        let fb = conv.forward(&b);
        let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
        let y = conv.inverse(&prod);
        let start = framing.center(i) as isize - hop as isize - (n_fft / 2) as isize;
        for (j, v) in y.iter().enumerate().take(2 * hop + n_fft) {
            let k = start + j as isize;
            if k >= 0 && (k as usize) < n {
                out[k as usize] += v;
            }
        }
    }
    let mut wave = Waveform::new(out.into_iter().map(|v| v as f32).collect());
    wave.limit_peak();
    Ok(wave)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{synthesize_toy_utterance, ToyCorpusSpec};
    use crate::features::{extract_mel, extract_world_like, MGC_DIM};
    use ndarray::Array2;

    fn sine(freq: f64, n: usize) -> Waveform {
        Waveform::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin()) as f32)
                .collect(),
        )
    }

    fn dominant_hz(w: &Waveform) -> f64 {
        let n = 16384;
        let mut x: Vec<f64> = w.samples.iter().take(n).map(|&v| v as f64).collect();
        x.resize(n, 0.0);
        let win = hann(n);
        let x: Vec<f64> = x.iter().zip(&win).map(|(a, b)| a * b).collect();
        let spec = RealFft::new(n).forward(&x);
        let k = (1..spec.len()).max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm())).unwrap();
        k as f64 * 16000.0 / n as f64
    }

    fn flat_world(t: usize, f0: f64, voiced: bool) -> WorldFeatures {
        let mut mgc = Array2::zeros((t, MGC_DIM));
        mgc.column_mut(0).fill(-1.0);
        WorldFeatures {
            mgc,
            log_f0: vec![f0.ln() as f32; t],
            bap: vec![if voiced { 0.0 } else { 1.0 }; t],
            vuv: vec![if voiced { 1.0 } else { 0.0 }; t],
        }
    }

    #[test]
    fn griffin_lim_error_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Waveform::new((0..6000).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| (0.1 * v) as f32).collect());
        let mel = extract_mel(&w).unwrap();
        let out = griffin_lim(&mel, 30).unwrap();
        for (k, p) in out.errors.windows(2).enumerate() {
            assert!(p[1] <= p[0] + 1e-9, "iteration {k}: {} -> {}", p[0], p[1]);
        }
    }

    #[test]
    fn griffin_lim_recovers_sine_pitch() {
        let mel = extract_mel(&sine(440.0, 16000)).unwrap();
        let out = griffin_lim(&mel, GRIFFIN_LIM_ITERS).unwrap();
        let f = dominant_hz(&out.wave);
        assert!((f - 440.0).abs() / 440.0 < 0.03, "{f}");
        assert_eq!(out.wave.len(), 16000);
        assert!(out.wave.samples.iter().all(|v| v.abs() <= 1.0));
        let one = griffin_lim(&mel, 1).unwrap();
        assert!(out.errors.last().unwrap() < one.errors.last().unwrap());
    }

    #[test]
    fn pseudo_inverse_reproduces_mel() {
        let mel = extract_mel(&sine(1000.0, 4000)).unwrap();
        let cfg = MelConfig::default();
        let lin = mel_to_linear(&mel, &cfg).unwrap();
        let back = lin.dot(&mel_filterbank(&cfg).t());
        let amp = mel.frames.mapv(|v| (v as f64).exp());
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        let err = (&back - &amp).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 0.05 * peak, "{err} vs {peak}");
    }

    #[test]
    fn voiced_synthesis_keeps_f0() {
        let wf = flat_world(200, 200.0, true);
        let out = world_lite_synthesize(&wf, 0).unwrap();
        let back = extract_world_like(&out).unwrap();
        let inner = 20..180;
        let voiced = inner.clone().filter(|&i| back.vuv[i] > 0.5).count();
        assert!(voiced as f64 >= 0.9 * inner.len() as f64, "{voiced}");
        for i in inner {
            let f = (back.log_f0[i] as f64).exp();
            assert!((f - 200.0).abs() / 200.0 < 0.05, "frame {i}: {f}");
        }
    }

    #[test]
    fn unvoiced_synthesis_is_aperiodic() {
        let out = world_lite_synthesize(&flat_world(200, 100.0, false), 1).unwrap();
        let back = extract_world_like(&out).unwrap();
        let voiced = back.vuv.iter().filter(|&&v| v > 0.5).count();
        assert!(voiced <= 10, "{voiced}");
    }

    #[test]
    fn energy_grows_with_c0() {
        let base = flat_world(100, 150.0, true);
        let energy = |shift: f32| {
            let mut wf = base.clone();
            wf.mgc.column_mut(0).mapv_inplace(|v| v + shift);
            let w = world_lite_synthesize(&wf, 2).unwrap();
            w.samples.iter().map(|v| (*v as f64).powi(2)).sum::<f64>()
        };
        let e: Vec<f64> = [-2.0, -1.0, 0.0, 1.0].iter().map(|&s| energy(s)).collect();
        assert!(e.windows(2).all(|p| p[1] > p[0]), "{e:?}");
    }

    #[test]
    fn analysis_synthesis_round_trip_on_toy_speech() {
        let spec = ToyCorpusSpec::default();
        let wave = synthesize_toy_utterance("the quick brown fox", &spec.voice(), 3).unwrap();
        let a = extract_world_like(&wave).unwrap();
        let out = world_lite_synthesize(&a, 4).unwrap();
        let b = extract_world_like(&out).unwrap();
        let n = a.n_frames().min(b.n_frames());
        let agree = (0..n).filter(|&i| (a.vuv[i] > 0.5) == (b.vuv[i] > 0.5)).count();
        assert!(agree as f64 >= 0.9 * n as f64, "{agree}/{n}");
        let both: Vec<usize> = (0..n).filter(|&i| a.vuv[i] > 0.5 && b.vuv[i] > 0.5).collect();
        let close = both
            .iter()
            .filter(|&&i| ((b.log_f0[i] - a.log_f0[i]) as f64).abs() < (1.05f64).ln())
            .count();
        assert!(close as f64 >= 0.9 * both.len() as f64, "{close}/{}", both.len());
    }
}
