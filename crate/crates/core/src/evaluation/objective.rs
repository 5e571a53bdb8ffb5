//! Objective correlates of Lombard speech: mean F0, spectral tilt and level.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::dsp::{hann, linear_slope, rms, Framing, RealFft};
use crate::features::{envelope_from_mgc, extract_world_like, Waveform, WorldConfig, WorldFeatures, SAMPLE_RATE};

/// Band over which the tilt regression is fitted.
pub const TILT_BAND_HZ: (f64, f64) = (100.0, 5000.0);
const TILT_FFT: usize = 1024;
const TILT_WIN: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LombardProfile {
    /// Mean over voiced frames; `None` when nothing is voiced.
    pub mean_f0_hz: Option<f64>,
    /// Median over voiced frames of the per-frame spectral slope, dB per octave.
    pub tilt_db_per_octave: Option<f64>,
    /// Level of the whole waveform; `None` for feature-only profiles.
    pub rms_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LombardDeltas {
    pub delta_mean_f0_semitones: Option<f64>,
    pub delta_spectral_tilt_db_per_octave: Option<f64>,
    pub delta_rms_db: Option<f64>,
}

/// Slope (dB/octave) of a power spectrum sampled on `n_bins` points from DC to Nyquist.
fn tilt_of_power(power: &[f64]) -> Option<f64> {
    let n_bins = power.len();
    let hz = |k: usize| k as f64 * SAMPLE_RATE as f64 / 2.0 / (n_bins - 1) as f64;
    let (x, y): (Vec<f64>, Vec<f64>) = (0..n_bins)
        .filter(|&k| (TILT_BAND_HZ.0..=TILT_BAND_HZ.1).contains(&hz(k)))
        .map(|k| (hz(k).log2(), 10.0 * power[k].max(1e-20).log10()))
        .unzip();
    linear_slope(&x, &y)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn voiced_frames(wf: &WorldFeatures) -> Vec<usize> {
    (0..wf.n_frames()).filter(|&i| wf.vuv[i] > 0.5).collect()
}

pub fn wave_profile(wave: &Waveform) -> Result<LombardProfile> {
    let wf = extract_world_like(wave)?;
    let voiced = voiced_frames(&wf);
    let framing = Framing { hop: WorldConfig::default().hop, win: TILT_WIN };
    let window = hann(TILT_WIN);
    let fft = RealFft::new(TILT_FFT);
    let slopes = voiced.iter().filter_map(|&i| {
        let power: Vec<f64> = fft.forward(&framing.windowed(&wave.samples, i, &window)).iter().map(|c| c.norm_sqr()).collect();
        tilt_of_power(&power)
    });
    let level = rms(&wave.samples);
    Ok(LombardProfile {
        mean_f0_hz: wf.mean_voiced_f0_hz(),
        tilt_db_per_octave: median(slopes.collect()),
        rms_db: Some(20.0 * level.max(1e-10).log10()),
    })
}

/// Profile of predicted World-style features: F0 from the voiced frames and
/// tilt from the cepstral envelope.
pub fn feature_profile(wf: &WorldFeatures) -> LombardProfile {
    let voiced = voiced_frames(wf);
    let alpha = WorldConfig::default().alpha;
    let bins = TILT_FFT / 2 + 1;
    let slopes = voiced.iter().filter_map(|&i| {
        let env = envelope_from_mgc(&wf.mgc.row(i).to_vec(), bins, alpha);
        tilt_of_power(&env.iter().map(|e| (2.0 * e).exp()).collect::<Vec<_>>())
    });
    LombardProfile {
        mean_f0_hz: wf.mean_voiced_f0_hz(),
        tilt_db_per_octave: median(slopes.collect()),
        rms_db: None,
    }
}

/// Differences `b − a`.
pub fn profile_deltas(a: &LombardProfile, b: &LombardProfile) -> LombardDeltas {
    let both = |x: Option<f64>, y: Option<f64>| x.zip(y);
    LombardDeltas {
        delta_mean_f0_semitones: both(a.mean_f0_hz, b.mean_f0_hz).map(|(x, y)| 12.0 * (y / x).log2()),
        delta_spectral_tilt_db_per_octave: both(a.tilt_db_per_octave, b.tilt_db_per_octave).map(|(x, y)| y - x),
        delta_rms_db: both(a.rms_db, b.rms_db).map(|(x, y)| y - x),
    }
}

pub fn objective_lombard_metrics(a: &Waveform, b: &Waveform) -> Result<LombardDeltas> {
    Ok(profile_deltas(&wave_profile(a)?, &wave_profile(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::toy::{synthesize_toy_utterance, ToyCorpusSpec};
    use crate::corpus::Style;

    fn toy(style: Style, f0_scale: f64, seed: u64) -> Waveform {
        let spec = ToyCorpusSpec { style, ..Default::default() };
        let mut voice = spec.voice();
        voice.f0_hz *= f0_scale;
        synthesize_toy_utterance("jumps over the lazy dog", &voice, seed).unwrap()
    }

    #[test]
    fn identical_waves_have_zero_deltas() {
        let w = toy(Style::Normal, 1.0, 1);
        let d = objective_lombard_metrics(&w, &w).unwrap();
        assert_eq!(d.delta_mean_f0_semitones, Some(0.0));
        assert_eq!(d.delta_spectral_tilt_db_per_octave, Some(0.0));
        assert_eq!(d.delta_rms_db, Some(0.0));
    }

    #[test]
    fn lombard_toy_speech_is_higher_flatter_louder() {
        let d = objective_lombard_metrics(&toy(Style::Normal, 1.0, 2), &toy(Style::Lombard, 1.0, 2)).unwrap();
        // the generator raises F0 by 30 % (4.5 st) and flattens the source by 6 dB/octave
        let f0 = d.delta_mean_f0_semitones.unwrap();
        assert!((f0 - 12.0 * 1.3f64.log2()).abs() < 0.5, "{f0}");
        assert!(d.delta_spectral_tilt_db_per_octave.unwrap() > 2.0, "{d:?}");
        assert!(d.delta_rms_db.unwrap() > 0.0);
    }

    #[test]
    fn two_semitone_shift_is_measured() {
        let up = 2f64.powf(2.0 / 12.0);
        let d = objective_lombard_metrics(&toy(Style::Normal, 1.0, 3), &toy(Style::Normal, up, 3)).unwrap();
        let f0 = d.delta_mean_f0_semitones.unwrap();
        assert!((f0 - 2.0).abs() < 0.2, "{f0}");
    }

    #[test]
    fn silence_has_no_f0() {
        let p = wave_profile(&Waveform::new(vec![0.0; 4000])).unwrap();
        assert_eq!(p.mean_f0_hz, None);
        assert_eq!(p.tilt_db_per_octave, None);
    }

    #[test]
    fn feature_profile_tracks_analyzed_speech() {
        let a = extract_world_like(&toy(Style::Normal, 1.0, 4)).unwrap();
        let b = extract_world_like(&toy(Style::Lombard, 1.0, 4)).unwrap();
        let d = profile_deltas(&feature_profile(&a), &feature_profile(&b));
        assert!(d.delta_mean_f0_semitones.unwrap() > 3.0, "{d:?}");
        assert!(d.delta_spectral_tilt_db_per_octave.unwrap() > 2.0, "{d:?}");
        assert_eq!(d.delta_rms_db, None);
    }
}
