use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result, WavError};

/// Decode a PCM WAV file (16-bit integer or 32-bit float) into a mono clip.
/// Multi-channel audio is averaged; integer samples are scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, WavError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(WavError::NotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(WavError::Malformed {
            path: path.to_path_buf(),
            message: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (fmt, bits) => {
            return Err(WavError::Unsupported {
                path: path.to_path_buf(),
                message: format!("{bits}-bit {fmt:?} samples (expected 16-bit int or 32-bit float)"),
            })
        }
    };

    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| WavError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn classify(path: &Path, err: hound::Error) -> WavError {
    let path = path.to_path_buf();
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => WavError::NotFound(path),
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => WavError::Malformed {
            path,
            message: "unexpected end of file".into(),
        },
        hound::Error::IoError(e) => WavError::Io {
            path,
            message: e.to_string(),
        },
        hound::Error::Unsupported => WavError::Unsupported {
            path,
            message: "unsupported WAVE format".into(),
        },
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => WavError::Unsupported {
            path,
            message: err.to_string(),
        },
        other => WavError::Malformed {
            path,
            message: other.to_string(),
        },
    }
}

/// Write mono 16-bit PCM. Samples are clamped to `[-1, 1]` and scaled by 32767.
pub fn write_wav_i16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io = |e: hound::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)
            .map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Write 32-bit float PCM with the given channel count (`samples` interleaved).
pub fn write_wav_f32(
    path: impl AsRef<Path>,
    samples: &[f32],
    channels: u16,
    sample_rate: u32,
) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let io = |e: hound::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        w.write_sample(s).map_err(io)?;
    }
    w.finalize().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw_i16(path: &Path, samples: &[i16], channels: u16) {
        let spec = WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn one_second_of_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        write_raw_i16(&p, &vec![0; 16_000], 1);
        let c = load_wav(&p).unwrap();
        assert_eq!(c.len(), 16_000);
        assert_eq!(c.sample_rate(), 16_000);
        assert!(c.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn int16_scale_boundary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        write_raw_i16(&p, &[i16::MIN, 16_384, i16::MAX], 1);
        let c = load_wav(&p).unwrap();
        assert_eq!(c.samples()[0], -1.0);
        assert_eq!(c.samples()[1], 0.5);
        assert_eq!(c.samples()[2], 32767.0 / 32768.0);
    }

    #[test]
    fn symmetric_stereo_averages_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let interleaved: Vec<f32> = (0..2000).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        write_wav_f32(&p, &interleaved, 2, 16_000).unwrap();
        let c = load_wav(&p).unwrap();
        assert_eq!(c.len(), 1000);
        assert!(c.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_wav(dir.path().join("missing.wav")),
            Err(WavError::NotFound(_))
        ));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"this is not a riff file at all").unwrap();
        assert!(matches!(load_wav(&garbage), Err(WavError::Malformed { .. })));

        let pcm8 = dir.path().join("pcm8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&pcm8, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(3i8).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(load_wav(&pcm8), Err(WavError::Unsupported { .. })));
    }

    #[test]
    fn i16_writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.01).sin() * 0.8).collect();
        write_wav_i16(&p, &samples, 16_000).unwrap();
        let c = load_wav(&p).unwrap();
        for (a, b) in c.samples().iter().zip(&samples) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
