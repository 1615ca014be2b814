use std::path::Path;

use crate::error::{Error, Result};

/// Reads 16-bit PCM as per-channel samples scaled to `[-1, 1)`.
pub fn read_wav(path: &Path) -> Result<(u32, Vec<Vec<f64>>)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format(format!("{}: expected 16-bit PCM", path.display())));
    }
    let ch = spec.channels as usize;
    let mut out = vec![Vec::with_capacity(reader.len() as usize / ch.max(1)); ch];
    for (i, s) in reader.samples::<i16>().enumerate() {
        out[i % ch].push(f64::from(s?) / 32768.0);
    }
    Ok((spec.sample_rate, out))
}

/// Writes 16-bit PCM, rounding and clipping each sample.
pub fn write_wav(path: &Path, sample_rate: u32, channels: &[Vec<f64>]) -> Result<()> {
    let n = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
        return Err(Error::Format("channels must be non-empty and equally long".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for t in 0..n {
        for c in channels {
            let v = (c[t] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v)?;
        }
    }
    w.finalize()?;
    Ok(())
}
