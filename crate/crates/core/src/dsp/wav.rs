//! Minimal 16-bit PCM mono WAV reader/writer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DspError, Result, Waveform};

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tag(r: &mut impl Read) -> Result<[u8; 4]> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(b)
}

struct WavHeader {
    sample_rate: u32,
    n_samples: usize,
}

fn parse_header(r: &mut impl Read) -> Result<(WavHeader, Vec<u8>)> {
    if &read_tag(r)? != b"RIFF" {
        return Err(DspError::Wav("missing RIFF tag".into()));
    }
    let _riff_len = read_u32(r)?;
    if &read_tag(r)? != b"WAVE" {
        return Err(DspError::Wav("missing WAVE tag".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    loop {
        let tag = match read_tag(r) {
            Ok(t) => t,
            Err(_) => return Err(DspError::Wav("no data chunk".into())),
        };
        let len = read_u32(r)? as usize;
        match &tag {
            b"fmt " => {
                let mut body = vec![0u8; len];
                r.read_exact(&mut body)?;
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                let (format, channels, rate, bits) =
                    fmt.ok_or_else(|| DspError::Wav("data chunk before fmt".into()))?;
                if format != 1 || bits != 16 {
                    return Err(DspError::Wav(format!(
                        "only 16-bit PCM supported (format {format}, {bits} bits)"
                    )));
                }
                if channels != 1 {
                    return Err(DspError::Wav(format!("only mono supported ({channels} channels)")));
                }
                let mut body = vec![0u8; len];
                r.read_exact(&mut body)?;
                return Ok((WavHeader { sample_rate: rate, n_samples: len / 2 }, body));
            }
            _ => {
                // Skip unknown chunks (word-aligned).
                let skip = len + (len & 1);
                std::io::copy(&mut r.take(skip as u64), &mut std::io::sink())?;
            }
        }
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path)?);
    let (hdr, body) = parse_header(&mut r)?;
    let mut samples = Vec::with_capacity(hdr.n_samples);
    for pair in body.chunks_exact(2) {
        let v = i16::from_le_bytes([pair[0], pair[1]]);
        samples.push(v as f64 / 32768.0);
    }
    Waveform::new(samples, hdr.sample_rate)
}

/// Duration straight from the header, without decoding samples.
pub fn wav_duration_seconds(path: impl AsRef<Path>) -> Result<f64> {
    let mut r = BufReader::new(File::open(path)?);
    let (hdr, _) = parse_header(&mut r)?;
    Ok(hdr.n_samples as f64 / hdr.sample_rate as f64)
}

/// Samples are clamped to [-1, 1] and quantized to 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let data_len = (w.len() * 2) as u32;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?; // PCM
    out.write_all(&1u16.to_le_bytes())?; // mono
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&(w.sample_rate * 2).to_le_bytes())?; // byte rate
    out.write_all(&2u16.to_le_bytes())?; // block align
    out.write_all(&16u16.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.write_all(&q.to_le_bytes())?;
    }
    Ok(())
}
