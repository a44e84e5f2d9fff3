//! WAV ingestion and emission: 16-bit PCM mono at 16 kHz, nothing else.
//! Amplitudes are normalized to [-1, 1] by dividing by 32768; resampling
//! other rates is the caller's responsibility.

use crate::signal::{Waveform, SAMPLE_RATE};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, WavError>;

#[derive(Error, Debug)]
pub enum WavError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: hound::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: hound::Error,
    },
    #[error("{path}: sample rate {got} Hz, expected {expected} Hz")]
    BadRate {
        path: PathBuf,
        got: u32,
        expected: u32,
    },
    #[error("{path}: {got} channels, expected mono")]
    NotMono { path: PathBuf, got: u16 },
    #[error("{path}: {got}-bit {format} samples, expected 16-bit integer PCM")]
    BadFormat {
        path: PathBuf,
        got: u16,
        format: &'static str,
    },
    #[error("{path}: contains no samples")]
    EmptyFile { path: PathBuf },
}

/// Reads a 16-bit PCM mono 16 kHz WAV file into a normalized waveform.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|source| WavError::Read {
        path: path.to_owned(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::NotMono {
            path: path.to_owned(),
            got: spec.channels,
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(WavError::BadRate {
            path: path.to_owned(),
            got: spec.sample_rate,
            expected: SAMPLE_RATE,
        });
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(WavError::BadFormat {
            path: path.to_owned(),
            got: spec.bits_per_sample,
            format: match spec.sample_format {
                hound::SampleFormat::Int => "integer",
                hound::SampleFormat::Float => "float",
            },
        });
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|source| WavError::Read {
        path: path.to_owned(),
        source,
    })?;
    if samples.is_empty() {
        return Err(WavError::EmptyFile {
            path: path.to_owned(),
        });
    }
    let normalized: Vec<f64> = samples.iter().map(|&s| f64::from(s) / 32768.0).collect();
    Ok(Waveform::new(normalized, SAMPLE_RATE).expect("i16 samples are finite"))
}

/// Writes a waveform as 16-bit PCM mono, clipping samples to [-1, 1]
/// before quantization.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|source| WavError::Write {
        path: path.to_owned(),
        source,
    })?;
    for &s in w.samples() {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|source| WavError::Write {
            path: path.to_owned(),
            source,
        })?;
    }
    writer.finalize().map_err(|source| WavError::Write {
        path: path.to_owned(),
        source,
    })
}
