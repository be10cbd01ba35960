//! Binary feature dump: `"KSFV"`, version, band mode, frames, dim (all u32
//! little-endian), then row-major f64 little-endian values.

use std::io::{Read, Write};

use super::{BandMode, FeatureError, FeatureMatrix, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"KSFV";
pub const FEATURE_VERSION: u32 = 1;

pub fn write_features<W: Write>(mut w: W, features: &FeatureMatrix) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    for v in [
        FEATURE_VERSION,
        features.band_mode().code(),
        features.n_frames() as u32,
        features.dim() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in features.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a dump written by [`write_features`]. Dumps are always normalized.
pub fn read_features<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(FeatureError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FEATURE_VERSION {
        return Err(FeatureError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let band_mode = BandMode::from_code(read_u32(&mut r)?)?;
    let n_frames = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    if dim != band_mode.dim() {
        return Err(FeatureError::Format(format!(
            "dim {dim} does not match {band_mode}"
        )));
    }
    let mut values = Vec::with_capacity(n_frames * dim);
    let mut b = [0u8; 8];
    for _ in 0..n_frames * dim {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    FeatureMatrix::new(band_mode, values, true)
}
