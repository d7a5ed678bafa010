//! WAV input and the `LSTF` feature cache.
//!
//! Feature cache layout, little-endian: `b"LSTF"`, `u32` rows, `u32` cols,
//! then `rows * cols` `f64` values in row-major order.

use std::path::Path;

use super::{FeatureMatrix, Waveform};
use crate::corpus::text::{read_bytes, write_bytes};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"LSTF";

/// 16-bit PCM mono RIFF/WAVE, scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::format(
            "wav",
            format!(
                "{}: need 16-bit PCM mono, got {} channel(s) at {} bits",
                path.display(),
                spec.channels,
                spec.bits_per_sample
            ),
        ));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| wav_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format("wav", format!("{}: {other}", path.display())),
    }
}

pub fn write_feature_cache(path: &Path, f: &FeatureMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + f.data().len() * 8);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(f.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(f.dim() as u32).to_le_bytes());
    for v in f.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &bytes)
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureMatrix> {
    let bytes = read_bytes(path)?;
    let bad = |reason: &str| Error::format("feature cache", format!("{}: {reason}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing LSTF header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + rows * cols * 8 {
        return Err(bad("payload size does not match header"));
    }
    let data = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_cache_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lstf");
        let f = FeatureMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -6.5]).unwrap();
        write_feature_cache(&path, &f).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..4], b"LSTF");
        assert_eq!(&raw[4..12], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&raw[12..20], &1.0f64.to_le_bytes());
        assert_eq!(read_feature_cache(&path).unwrap().data(), f.data());

        std::fs::write(&path, &raw[..20]).unwrap();
        assert!(matches!(read_feature_cache(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let wave = Waveform::new(vec![0.0, 0.5, -0.5, 0.25], 16000).unwrap();
        write_wav(&path, &wave).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16000);
        for (a, b) in back.samples.iter().zip(&wave.samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn missing_wav_is_io_error() {
        assert!(matches!(read_wav(Path::new("/nonexistent/x.wav")), Err(Error::Io { .. })));
    }
}
