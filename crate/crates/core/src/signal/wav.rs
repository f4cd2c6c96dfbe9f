use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

/// Reads a 16-bit PCM mono WAV file, scaling samples by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::format(format!(
            "unsupported channel count {}",
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(format!(
            "unsupported encoding: {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if samples.len() != declared {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("truncated data chunk: {} of {declared} samples", samples.len()),
        )));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a 16-bit PCM mono WAV file.
///
/// Samples outside [-1, 1] are hard-clipped; the number of clipped samples is
/// logged and returned.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<usize> {
    if w.is_empty() {
        return Err(Error::invalid("cannot write an empty waveform"));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    let mut clipped = 0usize;
    for &x in w.samples() {
        if x.abs() > 1.0 {
            clipped += 1;
        }
        let q = (x.clamp(-1.0, 1.0) * FULL_SCALE).round();
        writer.write_sample(q.clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    if clipped > 0 {
        log::warn!(
            "{}: clipped {clipped} samples outside [-1, 1]",
            path.as_ref().display()
        );
    }
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, samples: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: 10_000,
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
    fn scales_by_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 1, &[0, 16384, -32768]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(w.sample_rate_hz(), 10_000);
    }

    #[test]
    fn header_passthrough() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 1, &vec![7i16; 10_000]);
        let w = read_wav(&p).unwrap();
        assert_eq!(w.len(), 10_000);
        assert_eq!(w.sample_rate_hz(), 10_000);
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, 2, &[1, 2, 3, 4]);
        let err = read_wav(&p).unwrap_err();
        assert!(err.to_string().contains("unsupported channel count"), "{err}");
    }

    #[test]
    fn float_encoding_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 10_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_raw(&p, 1, &[100; 64]);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 41]).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Io(_))));
    }

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let w = Waveform::new(vec![0.0, 0.5, -0.25, 0.123456], 10_000).unwrap();
        assert_eq!(write_wav(&w, &p).unwrap(), 0);
        let back = read_wav(&p).unwrap();
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn out_of_range_is_clipped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let w = Waveform::new(vec![0.2, 1.7, -3.0], 10_000).unwrap();
        assert_eq!(write_wav(&w, &p).unwrap(), 2);
        let back = read_wav(&p).unwrap();
        assert!((back.samples()[1] - 1.0).abs() <= 1.0 / 32768.0);
        assert_eq!(back.samples()[2], -1.0);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let w = Waveform::new(vec![0.0], 10_000).unwrap();
        let err = write_wav(&w, "/nonexistent-dir/x/y.wav").unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
    }
}
