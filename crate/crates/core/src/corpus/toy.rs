//! Synthetic stand-in corpus: a band-limited pulse train with a declining F0
//! contour and a controlled spectral tilt, shaped per phoneme by two formant
//! resonances, with resonator-filtered noise for unvoiced sounds.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CorpusManifest, Style, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{Waveform, SAMPLE_RATE};
use crate::text::{text_to_phonemes, Lexicon, PhonemeInventory};

/// Short pangram fragments; every word is in the bundled lexicon.
pub const TOY_PHRASES: &[&str] = &[
    "the quick brown fox",
    "jumps over the lazy dog",
    "pack my box",
    "with five dozen jugs",
    "how vexingly quick",
    "daft zebras jump",
    "sphinx of black quartz",
    "judge my vow",
    "the five boxing wizards",
    "jump quickly",
    "bright vixens jump",
    "waltz bad nymph",
    "for quick jigs vex",
    "glib jocks quiz nymph",
    "to vex dwarf",
    "big fjords vex",
];

const LOMBARD_F0_SCALE: f64 = 1.3;
const LOMBARD_TILT_DELTA_DB: f64 = 6.0;
const LOMBARD_GAIN: f64 = 1.6;

fn default_speaker() -> String {
    "toy".into()
}

fn default_formant_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusSpec {
    pub n_utterances: usize,
    pub style: Style,
    /// Normal-style F0; lombard style raises it by 30 %.
    pub f0_base_hz: f64,
    /// Normal-style source tilt; lombard style flattens it by 6 dB/octave.
    pub tilt_db_per_octave: f64,
    pub seed: u64,
    #[serde(default = "default_speaker")]
    pub speaker: String,
    /// Vocal-tract scaling of all formant frequencies (speaker identity).
    #[serde(default = "default_formant_scale")]
    pub formant_scale: f64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        ToyCorpusSpec {
            n_utterances: 10,
            style: Style::Normal,
            f0_base_hz: 120.0,
            tilt_db_per_octave: -9.0,
            seed: 0,
            speaker: default_speaker(),
            formant_scale: 1.0,
        }
    }
}

impl ToyCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_utterances == 0 {
            return Err(Error::Config("toy corpus needs at least one utterance".into()));
        }
        if !(60.0..=400.0).contains(&self.f0_base_hz) {
            return Err(Error::Config(format!(
                "f0_base_hz {} outside [60, 400]",
                self.f0_base_hz
            )));
        }
        Ok(())
    }

    /// Effective voice after applying the style.
    pub fn voice(&self) -> ToyVoice {
        let (f0, tilt, gain) = match self.style {
            Style::Normal => (self.f0_base_hz, self.tilt_db_per_octave, 1.0),
            Style::Lombard => (
                self.f0_base_hz * LOMBARD_F0_SCALE,
                self.tilt_db_per_octave + LOMBARD_TILT_DELTA_DB,
                LOMBARD_GAIN,
            ),
        };
        ToyVoice {
            f0_hz: f0,
            tilt_db_per_octave: tilt,
            gain,
            formant_scale: self.formant_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyVoice {
    pub f0_hz: f64,
    pub tilt_db_per_octave: f64,
    pub gain: f64,
    pub formant_scale: f64,
}

#[derive(Clone, Copy)]
enum Class {
    Silence,
    Vowel(f64, f64),
    Voiced(f64, f64),
    Unvoiced(f64),
}

fn classify(sym: &str) -> Class {
    use Class::*;
    match sym {
        "sil" | "wb" | "eos" => Silence,
        "aa" => Vowel(730.0, 1090.0),
        "ae" => Vowel(660.0, 1720.0),
        "ah" => Vowel(520.0, 1190.0),
        "ao" => Vowel(570.0, 840.0),
        "aw" => Vowel(640.0, 1190.0),
        "ax" => Vowel(500.0, 1500.0),
        "ay" => Vowel(660.0, 1600.0),
        "eh" => Vowel(530.0, 1840.0),
        "er" => Vowel(490.0, 1350.0),
        "ey" => Vowel(480.0, 2000.0),
        "ih" => Vowel(390.0, 1990.0),
        "iy" => Vowel(270.0, 2290.0),
        "ow" => Vowel(450.0, 900.0),
        "oy" => Vowel(500.0, 1000.0),
        "uh" => Vowel(440.0, 1020.0),
        "uw" => Vowel(300.0, 870.0),
        "b" => Voiced(250.0, 800.0),
        "d" => Voiced(250.0, 1700.0),
        "g" => Voiced(250.0, 2100.0),
        "dh" => Voiced(300.0, 1400.0),
        "jh" => Voiced(280.0, 2200.0),
        "l" => Voiced(360.0, 1100.0),
        "m" => Voiced(250.0, 1000.0),
        "n" => Voiced(250.0, 1500.0),
        "ng" => Voiced(250.0, 2000.0),
        "r" => Voiced(350.0, 1250.0),
        "v" => Voiced(280.0, 1300.0),
        "w" => Voiced(300.0, 700.0),
        "y" => Voiced(280.0, 2200.0),
        "z" => Voiced(260.0, 1800.0),
        "zh" => Voiced(270.0, 2000.0),
        "s" => Unvoiced(5000.0),
        "sh" => Unvoiced(2600.0),
        "f" => Unvoiced(3800.0),
        "th" => Unvoiced(4200.0),
        "ch" => Unvoiced(3000.0),
        "hh" => Unvoiced(1500.0),
        "p" => Unvoiced(900.0),
        "t" => Unvoiced(3400.0),
        "k" => Unvoiced(2200.0),
        _ => Unvoiced(2500.0),
    }
}

fn nominal_duration_s(sym: &str, class: Class) -> f64 {
    match (sym, class) {
        ("wb", _) => 0.02,
        ("sil", _) => 0.06,
        ("eos", _) => 0.05,
        (_, Class::Vowel(..)) => 0.09,
        _ => 0.06,
    }
}

/// Peak-plus-floor formant resonance; the floor keeps the overall slope set by the source tilt.
fn formant_gain(f: f64, center: f64, bandwidth: f64) -> f64 {
    1.0 + 6.0 * bandwidth * bandwidth / ((f - center).powi(2) + bandwidth * bandwidth)
}

struct Segment {
    len: usize,
    voice_amp: f64,
    noise_amp: f64,
    f1: f64,
    f2: f64,
    noise_center: f64,
}

struct Biquad {
    b0: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Biquad {
    fn resonator(center: f64, bandwidth: f64) -> Self {
        let r = (-PI * bandwidth / SAMPLE_RATE as f64).exp();
        let theta = 2.0 * PI * center / SAMPLE_RATE as f64;
        Biquad {
            b0: 1.0 - r,
            a1: -2.0 * r * theta.cos(),
            a2: r * r,
            z1: 0.0,
            z2: 0.0,
        }
    }

    fn retune(&mut self, center: f64, bandwidth: f64) {
        let fresh = Biquad::resonator(center, bandwidth);
        self.b0 = fresh.b0;
        self.a1 = fresh.a1;
        self.a2 = fresh.a2;
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x - self.a1 * self.z1 - self.a2 * self.z2;
        self.z2 = self.z1;
        self.z1 = y;
        y
    }
}

/// Renders `text` with `voice`; deterministic in `seed`.
pub fn synthesize_toy_utterance(text: &str, voice: &ToyVoice, seed: u64) -> Result<Waveform> {
    let inv = PhonemeInventory::default();
    let seq = text_to_phonemes(text, &Lexicon::toy(), &inv)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;

    let segments: Vec<Segment> = seq
        .symbols
        .iter()
        .map(|sym| {
            let class = classify(sym);
            let jitter = 1.0 + rng.random_range(-0.1..0.1);
            let len = (nominal_duration_s(sym, class) * jitter * fs).round() as usize;
            let fsc = voice.formant_scale;
            match class {
                Class::Silence => Segment { len, voice_amp: 0.0, noise_amp: 0.0, f1: 500.0, f2: 1500.0, noise_center: 2000.0 },
                Class::Vowel(f1, f2) => Segment { len, voice_amp: 1.0, noise_amp: 0.0, f1: f1 * fsc, f2: f2 * fsc, noise_center: 2000.0 },
                Class::Voiced(f1, f2) => Segment { len, voice_amp: 0.35, noise_amp: 0.01, f1: f1 * fsc, f2: f2 * fsc, noise_center: f2 * fsc },
                Class::Unvoiced(fc) => Segment { len, voice_amp: 0.0, noise_amp: 0.08, f1: 500.0, f2: 1500.0, noise_center: (fc * fsc).min(7000.0) },
            }
        })
        .collect();
    let n: usize = segments.iter().map(|s| s.len).sum();
    let utt_offset = 1.0 + rng.random_range(-0.04..0.04);

    // per-sample segment parameters, smoothed over 5 ms to avoid clicks
    let mut voice_amp = Vec::with_capacity(n);
    let mut noise_amp = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    let mut f2 = Vec::with_capacity(n);
    let mut seg_of = Vec::with_capacity(n);
    for (k, s) in segments.iter().enumerate() {
        for _ in 0..s.len {
            voice_amp.push(s.voice_amp);
            noise_amp.push(s.noise_amp);
            f1.push(s.f1);
            f2.push(s.f2);
            seg_of.push(k);
        }
    }
    let smooth = |v: &mut Vec<f64>| {
        let a = 1.0 - (-1.0 / (0.005 * fs / 3.0)).exp();
        let mut state = v.first().copied().unwrap_or(0.0);
        for x in v.iter_mut() {
            state += a * (*x - state);
            *x = state;
        }
    };
    smooth(&mut voice_amp);
    smooth(&mut noise_amp);
    smooth(&mut f1);
    smooth(&mut f2);

    let base_amp = 0.02 * voice.gain;
    let mut out = vec![0.0f64; n];
    let mut phase = 0.0f64;
    let mut amps: Vec<f64> = Vec::new();
    const BLOCK: usize = 40;
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let mid = (start + end) / 2;
        let pos = mid as f64 / n.max(1) as f64;
        let f0 = voice.f0_hz * utt_offset * (1.08 - 0.16 * pos);
        let n_harm = ((7600.0 / f0).floor() as usize).max(1);
        amps.clear();
        for h in 1..=n_harm {
            let f = h as f64 * f0;
            let tilt = 10f64.powf(voice.tilt_db_per_octave * (f / 100.0).log2() / 20.0);
            amps.push(tilt * formant_gain(f, f1[mid], 80.0) * formant_gain(f, f2[mid], 120.0));
        }
        for i in start..end {
            phase += 2.0 * PI * f0 / fs;
            if phase > 2.0 * PI {
                phase -= 2.0 * PI;
            }
            if voice_amp[i] > 1e-4 {
                let v: f64 = amps
                    .iter()
                    .enumerate()
                    .map(|(h, a)| a * ((h + 1) as f64 * phase).cos())
                    .sum();
                out[i] += base_amp * voice_amp[i] * v;
            }
        }
    }

    let mut reso = Biquad::resonator(2000.0, 1200.0);
    let mut current = usize::MAX;
    for i in 0..n {
        if seg_of[i] != current {
            current = seg_of[i];
            reso.retune(segments[current].noise_center, 1200.0);
        }
        let w: f64 = StandardNormal.sample(&mut rng);
        let y = reso.tick(w);
        out[i] += noise_amp[i] * voice.gain * y * 4.0;
    }

    let mut wave = Waveform::new(out.into_iter().map(|v| v as f32).collect());
    wave.limit_peak();
    Ok(wave)
}

fn utterance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(0xD1B5_4A32_D192_ED03)
}

/// Writes `n_utterances` WAV files into `out_dir` and returns their manifest
/// (every record assigned to training; partition afterwards as needed).
/// Texts depend only on the seed, so both styles share transcripts.
pub fn generate_toy_corpus(spec: &ToyCorpusSpec, out_dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let voice = spec.voice();
    let mut text_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n_utterances);
    for i in 0..spec.n_utterances {
        let text = TOY_PHRASES[text_rng.random_range(0..TOY_PHRASES.len())];
        let wave = synthesize_toy_utterance(text, &voice, utterance_seed(spec.seed, i))?;
        let id = format!("{}_{}_{:04}", spec.speaker, spec.style, i);
        let rel = PathBuf::from(format!("{id}.wav"));
        crate::wav::write_wav(&out_dir.join(&rel), &wave)?;
        records.push(UtteranceRecord {
            id,
            audio_path: rel,
            text: text.to_string(),
            speaker: spec.speaker.clone(),
            style: spec.style,
            duration_s: wave.duration_s(),
        });
    }
    CorpusManifest::all_train(records, out_dir.to_path_buf())
}
