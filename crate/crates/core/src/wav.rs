//! RIFF WAV I/O restricted to the corpus format: mono, 16 kHz, 16-bit PCM.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Waveform, SAMPLE_RATE};

fn spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Float sample in [-1, 1] to 16-bit PCM.
pub fn to_pcm16(x: f32) -> i16 {
    let v = (x.clamp(-1.0, 1.0) * 32767.0).round();
    v as i16
}

pub fn from_pcm16(v: i16) -> f32 {
    v as f32 / 32767.0
}

pub fn read_pcm16(path: &Path) -> Result<Vec<i16>> {
    if !path.exists() {
        return Err(Error::MissingAudio(path.to_path_buf()));
    }
    let bad = |reason: String| Error::Wav {
        path: path.to_path_buf(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| bad(e.to_string()))?;
    let s = reader.spec();
    if s.channels != 1 {
        return Err(bad(format!("expected mono, got {} channels", s.channels)));
    }
    if s.sample_rate != SAMPLE_RATE {
        return Err(bad(format!("expected 16000 Hz, got {}", s.sample_rate)));
    }
    if s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(bad("expected 16-bit signed PCM".into()));
    }
    reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(e.to_string()))
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let pcm = read_pcm16(path)?;
    Ok(Waveform::new(pcm.into_iter().map(from_pcm16).collect()))
}

pub fn encode_wav(wave: &Waveform) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::with_capacity(44 + wave.samples.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut buf, spec()).expect("in-memory writer");
        for &s in &wave.samples {
            w.write_sample(to_pcm16(s)).expect("in-memory write");
        }
        w.finalize().expect("in-memory finalize");
    }
    buf.into_inner()
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_wav(wave)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_rate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = hound::WavSpec {
            sample_rate: 22050,
            ..spec()
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav(&p).unwrap_err();
        assert!(err.to_string().contains("16000"), "{err}");
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        std::fs::write(&p, b"not a riff file at all").unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Wav { .. })));
    }

    proptest! {
        #[test]
        fn pcm_roundtrip_is_bit_exact(pcm in proptest::collection::vec(any::<i16>().prop_filter("symmetric range", |v| *v != i16::MIN), 1..400)) {
            let wave = Waveform::new(pcm.iter().map(|&v| from_pcm16(v)).collect());
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            write_wav(&p, &wave).unwrap();
            prop_assert_eq!(read_pcm16(&p).unwrap(), pcm);
        }
    }
}
