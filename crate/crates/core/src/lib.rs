//! Speaking-style adaptation for attention-based sequence-to-sequence TTS.
//!
//! The crate covers the whole chain: corpus handling and a synthetic toy
//! corpus, acoustic analysis (mel spectrograms and a World-style
//! parameterization), a text frontend, three trainable models (the
//! sequence-to-sequence acoustic model, a recurrent baseline with a duration
//! model, and a WaveNet vocoder), classic vocoders, the staged fine-tuning
//! pipeline, and listening-test statistics.
//!
//! Learnable components are generic over [`Float`]; the aliases below fix the
//! scalar for everyday use (`f32`) and for gradient verification (`f64`).

pub mod adaptation;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod lstm;
pub mod nn;
pub mod prepare;
pub mod scalar;
pub mod seq2seq;
pub mod text;
pub mod vocoders;
pub mod wavenet;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Float;

pub type Seq2SeqF32 = seq2seq::Seq2Seq<f32>;
pub type Seq2SeqF64 = seq2seq::Seq2Seq<f64>;
pub type LstmF32 = lstm::LstmRegressor<f32>;
pub type LstmF64 = lstm::LstmRegressor<f64>;
pub type WaveNetF32 = wavenet::WaveNet<f32>;
pub type WaveNetF64 = wavenet::WaveNet<f64>;
