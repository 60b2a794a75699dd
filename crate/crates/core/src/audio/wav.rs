use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono 16-bit PCM only, at `expected_rate`.
pub fn read_wav_bytes(bytes: &[u8], expected_rate: u32) -> Result<Vec<f64>> {
    let reader = hound::WavReader::new(Cursor::new(bytes))?;
    decode(reader, expected_rate)
}

pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Vec<f64>> {
    let reader = hound::WavReader::open(path)?;
    decode(reader, expected_rate)
}

fn decode<R: std::io::Read>(reader: hound::WavReader<R>, expected_rate: u32) -> Result<Vec<f64>> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "expected mono audio, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav(format!(
            "expected 16-bit integer PCM, got {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != expected_rate {
        return Err(Error::SampleRate {
            expected: expected_rate,
            actual: spec.sample_rate,
        });
    }
    reader
        .into_samples::<i16>()
        .map(|s| Ok(f64::from(s?) / 32768.0))
        .collect()
}

fn to_i16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Encodes samples in `[-1, 1]` as a mono 16-bit little-endian WAV.
pub fn wav_bytes(samples: &[f64], sample_rate: u32) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for &s in samples {
            writer.write_sample(to_i16(s))?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    std::fs::write(path, wav_bytes(samples, sample_rate)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let samples: Vec<f64> = (0..400).map(|i| (i as f64 * 0.05).sin() * 0.8).collect();
        let bytes = wav_bytes(&samples, 16_000).unwrap();
        assert_eq!(&bytes[..4], b"RIFF");
        let back = read_wav_bytes(&bytes, 16_000).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn empty_wav_is_valid() {
        let bytes = wav_bytes(&[], 16_000).unwrap();
        assert!(read_wav_bytes(&bytes, 16_000).unwrap().is_empty());
    }

    #[test]
    fn rejects_other_encodings() {
        let bytes = wav_bytes(&[0.0; 10], 8_000).unwrap();
        assert!(matches!(
            read_wav_bytes(&bytes, 16_000),
            Err(Error::SampleRate {
                expected: 16_000,
                actual: 8_000
            })
        ));

        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        let err = read_wav_bytes(cursor.get_ref(), 16_000).unwrap_err();
        assert!(err.to_string().contains("mono"), "{err}");

        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(0.0f32).unwrap();
        w.finalize().unwrap();
        let err = read_wav_bytes(cursor.get_ref(), 16_000).unwrap_err();
        assert!(err.to_string().contains("16-bit"), "{err}");

        assert!(read_wav_bytes(b"not a wav", 16_000).is_err());
    }
}
