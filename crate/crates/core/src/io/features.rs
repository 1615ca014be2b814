use num_complex::Complex64;

use super::Reader;
use crate::error::{Error, Result};
use crate::frontend::MultiChannelSpectrum;

pub const FEATURE_MAGIC: &[u8; 4] = b"FANF";
pub const FEATURE_VERSION: u16 = 1;

/// Header `magic, version, K, M, frames`, then `f32` data ordered
/// frame, channel, bin with real and imaginary parts interleaved.
pub fn write_features(frames: &[MultiChannelSpectrum]) -> Result<Vec<u8>> {
    let (m, k) = frames.first().map_or((0, 0), |f| (f.channels, f.bins));
    if frames.iter().any(|f| f.channels != m || f.bins != k) {
        return Err(Error::Format("frames differ in shape".into()));
    }
    let mut out = Vec::with_capacity(18 + frames.len() * m * k * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    for v in [k, m, frames.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in frames {
        for z in &f.data {
            out.extend_from_slice(&(z.re as f32).to_le_bytes());
            out.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_features(bytes: &[u8]) -> Result<Vec<MultiChannelSpectrum>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != FEATURE_MAGIC {
        return Err(Error::Format("not a feature file".into()));
    }
    let version = r.u16()?;
    if version != FEATURE_VERSION {
        return Err(Error::Format(format!("unsupported feature version {version}")));
    }
    let (k, m, n) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let mut data = Vec::with_capacity(m * k);
        for _ in 0..m * k {
            let re = f64::from(r.f32()?);
            data.push(Complex64::new(re, f64::from(r.f32()?)));
        }
        frames.push(MultiChannelSpectrum::new(i, m, k, data)?);
    }
    if !r.finished() {
        return Err(Error::Format("trailing bytes in feature file".into()));
    }
    Ok(frames)
}
