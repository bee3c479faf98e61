//! Binary feature-matrix files: little-endian header
//! `{magic "FEA1", kind u8, T u32, F u32, frame_rate f32}` followed by
//! `T*F` float32 values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DspError, FeatureKind, FeatureMatrix, NormStats, Result};

const MAGIC: &[u8; 4] = b"FEA1";
const STATS_MAGIC: &[u8; 4] = b"NRM1";

pub fn write_feature_file(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&[f.kind.code()])?;
    out.write_all(&(f.n_frames() as u32).to_le_bytes())?;
    out.write_all(&(f.feature_dim() as u32).to_le_bytes())?;
    out.write_all(&(f.frame_rate as f32).to_le_bytes())?;
    for &v in f.data() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DspError::FeatureFile("bad magic".into()));
    }
    let mut kind_b = [0u8; 1];
    r.read_exact(&mut kind_b)?;
    let kind = FeatureKind::from_code(kind_b[0])
        .ok_or_else(|| DspError::FeatureFile(format!("unknown kind {}", kind_b[0])))?;
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let t = u32::from_le_bytes(u32b) as usize;
    r.read_exact(&mut u32b)?;
    let f_dim = u32::from_le_bytes(u32b) as usize;
    r.read_exact(&mut u32b)?;
    let frame_rate = f32::from_le_bytes(u32b) as f64;

    let mut data = Vec::with_capacity(t * f_dim);
    let mut f32b = [0u8; 4];
    for _ in 0..t * f_dim {
        r.read_exact(&mut f32b)?;
        data.push(f32::from_le_bytes(f32b) as f64);
    }
    FeatureMatrix::new(data, t, f_dim, kind, frame_rate)
}

/// Normalization statistics file, float64 payload so reloads are exact.
pub fn write_norm_stats(path: impl AsRef<Path>, s: &NormStats) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(STATS_MAGIC)?;
    out.write_all(&(s.mean.len() as u32).to_le_bytes())?;
    out.write_all(&(s.n_frames as u64).to_le_bytes())?;
    for &v in s.mean.iter().chain(s.std.iter()) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_norm_stats(path: impl AsRef<Path>) -> Result<NormStats> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STATS_MAGIC {
        return Err(DspError::FeatureFile("bad stats magic".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let dim = u32::from_le_bytes(u32b) as usize;
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let n_frames = u64::from_le_bytes(u64b) as usize;
    let mut vals = vec![0.0f64; dim * 2];
    let mut f64b = [0u8; 8];
    for v in vals.iter_mut() {
        r.read_exact(&mut f64b)?;
        *v = f64::from_le_bytes(f64b);
    }
    let std = vals.split_off(dim);
    Ok(NormStats { mean: vals, std, n_frames })
}
