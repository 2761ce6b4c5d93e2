//! 16-bit PCM mono WAV files at 8 or 16 kHz.

use std::path::Path;

use abe_core::signal::AudioBuffer;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, Result};

const FULL_SCALE: f64 = 32768.0;

fn hound_err(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        other => CliError::format(path, other),
    }
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::format(path, format!("{} channels, expected mono", spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / FULL_SCALE))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => return Err(CliError::format(path, format!("unsupported sample format {fmt:?}/{bits} bit"))),
    }
    .map_err(|e| hound_err(path, e))?;
    Ok(AudioBuffer::new(samples, spec.sample_rate)?)
}

fn quantize(x: f64) -> i16 {
    (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// `buf` rounded to the 16-bit grid, i.e. what reading it back would give.
pub fn quantized(buf: &AudioBuffer) -> Result<AudioBuffer> {
    let samples = buf.samples().iter().map(|&x| quantize(x) as f64 / FULL_SCALE).collect();
    Ok(AudioBuffer::new(samples, buf.rate())?)
}

pub fn write_wav(path: &Path, buf: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for &x in buf.samples() {
        writer.write_sample(quantize(x)).map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_on_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f64> = (-5..5).map(|k| k as f64 * 1000.0 / FULL_SCALE).collect();
        write_wav(&path, &AudioBuffer::new(x.clone(), 8000).unwrap()).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.rate(), 8000);
        assert_eq!(back.samples(), &x[..]);
    }

    #[test]
    fn clipping() {
        assert_eq!(quantize(2.0), i16::MAX);
        assert_eq!(quantize(-2.0), i16::MIN);
        assert_eq!(quantize(0.5), 16384);
    }

    #[test]
    fn missing_file_is_a_missing_resource() {
        let err = read_wav(Path::new("/nonexistent/x.wav")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/x.wav"));
    }

    #[test]
    fn rejects_odd_rates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&path).is_err());
    }
}
