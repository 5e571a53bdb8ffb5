//! Acoustic analysis, normalization and µ-law companding.
//!
//! Two parameterizations are produced from 16 kHz audio:
//!
//! * [`MelSpectrogram`]: 80 log-mel bands every 12.5 ms (hop 200 samples).
//! * [`WorldFeatures`]: 60 warped-cepstral coefficients, interpolated log-F0,
//!   band aperiodicity and a voicing flag every 5 ms (hop 80 samples).

pub mod dsp;
pub mod io;
mod mel;
mod mulaw;
mod norm;
mod world;

use crate::error::{Error, Result};

pub use mel::{extract_mel, extract_mel_with, mel_band_centers, mel_filterbank, MelConfig, MelSpectrogram};
pub use mulaw::{MuLawCodec, MU_LAW_LEVELS};
pub use norm::{NormKind, NormalizationStats};
pub use world::{
    envelope_from_mgc, extract_world_like, extract_world_like_with, interpolate_log_f0, select_wavenet_conditioning,
    WorldConfig, WorldFeatures, MGC_DIM, WORLD_DIM, WORLD_COND_DIM,
};

pub const SAMPLE_RATE: u32 = 16_000;
pub const MEL_DIM: usize = 80;
pub const MEL_HOP: usize = 200;
pub const MEL_FRAME_SHIFT_MS: f32 = 12.5;
pub const WORLD_HOP: usize = 80;
pub const WORLD_FRAME_SHIFT_MS: f32 = 5.0;

/// Mono 16 kHz audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>) -> Self {
        Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Scales down (never up) so every sample lies in [-1, 1].
    pub fn limit_peak(&mut self) {
        let peak = self.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        if peak > 1.0 {
            let g = 1.0 / peak;
            self.samples.iter_mut().for_each(|v| *v *= g);
        }
    }

    pub(crate) fn check_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::Empty("waveform has no samples"))
        } else {
            Ok(())
        }
    }
}

/// Which acoustic parameterization a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    World,
    Mel,
}

impl OutputKind {
    pub fn dim(self) -> usize {
        match self {
            OutputKind::World => WORLD_DIM,
            OutputKind::Mel => MEL_DIM,
        }
    }

    pub fn frame_shift_ms(self) -> f32 {
        match self {
            OutputKind::World => WORLD_FRAME_SHIFT_MS,
            OutputKind::Mel => MEL_FRAME_SHIFT_MS,
        }
    }

    pub fn hop(self) -> usize {
        match self {
            OutputKind::World => WORLD_HOP,
            OutputKind::Mel => MEL_HOP,
        }
    }
}

impl std::fmt::Display for OutputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputKind::World => "world",
            OutputKind::Mel => "mel",
        })
    }
}

impl std::str::FromStr for OutputKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "world" => Ok(OutputKind::World),
            "mel" => Ok(OutputKind::Mel),
            other => Err(Error::Config(format!("unknown output kind {other:?}"))),
        }
    }
}
