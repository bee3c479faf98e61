//! Short-time Fourier transform and weighted overlap-add inverse.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{DspError, Result, StftConfig, Waveform};

/// Complex spectrogram, time-major, `fft_size/2 + 1` bins per frame.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    n_bins: usize,
}

impl Spectrogram {
    pub fn new(data: Vec<Complex64>, n_frames: usize, n_bins: usize) -> Result<Self> {
        if data.len() != n_frames * n_bins {
            return Err(DspError::ShapeMismatch {
                op: "Spectrogram::new",
                detail: format!("data length {} != {n_frames} x {n_bins}", data.len()),
            });
        }
        Ok(Self { data, n_frames, n_bins })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn at(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.n_bins + k]
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    /// Per-bin magnitudes, row-major.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

fn forward_plan(fft_size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(fft_size)
}

fn inverse_plan(fft_size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(fft_size)
}

/// Frame `t` covers samples `[t*hop, t*hop + win)`; each frame is windowed,
/// zero-padded to `fft_size` and transformed. A signal shorter than one
/// window is zero-padded to a single full window.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    if w.is_empty() {
        return Err(DspError::EmptyInput("stft"));
    }
    cfg.validate(w.sample_rate)?;
    let win = cfg.window_samples(w.sample_rate);
    let hop = cfg.hop_samples(w.sample_rate);
    let n_bins = cfg.n_bins();
    let n_frames = if w.len() < win { 1 } else { (w.len() - win) / hop + 1 };

    let window = cfg.window_fn.evaluate(win);
    let fft = forward_plan(cfg.fft_size);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    let mut data = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = if i < win {
                *w.samples.get(start + i).unwrap_or(&0.0)
            } else {
                0.0
            };
            *slot = Complex64::new(x * if i < win { window[i] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..n_bins]);
    }
    Spectrogram::new(data, n_frames, n_bins)
}

/// Weighted overlap-add reconstruction. Samples whose total window energy is
/// (numerically) zero at the signal edges are emitted as silence; a zero in
/// the interior indicates an inconsistent window/hop pairing and is an error.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig, sample_rate: u32) -> Result<Waveform> {
    cfg.validate(sample_rate)?;
    if spec.n_bins() != cfg.n_bins() {
        return Err(DspError::ShapeMismatch {
            op: "istft",
            detail: format!("{} bins vs fft_size {}", spec.n_bins(), cfg.fft_size),
        });
    }
    let win = cfg.window_samples(sample_rate);
    let hop = cfg.hop_samples(sample_rate);
    let out_len = (spec.n_frames() - 1) * hop + win;
    let window = cfg.window_fn.evaluate(win);

    let ifft = inverse_plan(cfg.fft_size);
    let mut acc = vec![0.0; out_len];
    let mut weight = vec![0.0; out_len];
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for t in 0..spec.n_frames() {
        let frame = spec.frame(t);
        buf[..spec.n_bins()].copy_from_slice(frame);
        // Hermitian mirror for the real-signal inverse.
        for k in spec.n_bins()..cfg.fft_size {
            buf[k] = frame[cfg.fft_size - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        let scale = 1.0 / cfg.fft_size as f64;
        for i in 0..win {
            let sample = buf[i].re * scale;
            acc[start + i] += sample * window[i];
            weight[start + i] += window[i] * window[i];
        }
    }

    const EPS: f64 = 1e-10;
    let mut samples = Vec::with_capacity(out_len);
    for (i, (&a, &w_sum)) in acc.iter().zip(weight.iter()).enumerate() {
        if w_sum > EPS {
            samples.push(a / w_sum);
        } else if i >= win && i + win <= out_len {
            return Err(DspError::ZeroOverlap(i));
        } else {
            samples.push(0.0);
        }
    }
    Waveform::new(samples, sample_rate)
}
