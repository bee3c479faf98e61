//! Triangular mel filterbank construction.

use super::{DspError, Result};

/// Mel scale convention. The HTK formula is the default; Slaney's variant is
/// linear below 1 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MelScale {
    #[default]
    Htk,
    Slaney,
}

pub fn hz_to_mel(f: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 2595.0 * (1.0 + f / 700.0).log10(),
        MelScale::Slaney => {
            if f < 1000.0 {
                3.0 * f / 200.0
            } else {
                15.0 + 27.0 * (f / 1000.0).ln() / 6.4f64.ln()
            }
        }
    }
}

pub fn mel_to_hz(m: f64, scale: MelScale) -> f64 {
    match scale {
        MelScale::Htk => 700.0 * (10f64.powf(m / 2595.0) - 1.0),
        MelScale::Slaney => {
            if m < 15.0 {
                200.0 * m / 3.0
            } else {
                1000.0 * (6.4f64.ln() * (m - 15.0) / 27.0).exp()
            }
        }
    }
}

/// Bank of triangular filters over linear FFT bins, peaks strictly ordered.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_mels: usize,
    n_linear: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub mel_scale: MelScale,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_linear(&self) -> usize {
        self.n_linear
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_linear..(m + 1) * self.n_linear]
    }

    /// Index of the strongest linear bin of row `m`.
    pub fn peak_bin(&self, m: usize) -> usize {
        let row = self.row(m);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    }
}

/// Triangular filters spaced uniformly on the mel scale between `f_min` and
/// `f_max`, evaluated at the FFT bin frequencies.
pub fn make_mel_filterbank(
    sample_rate: u32,
    fft_size: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    scale: MelScale,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min < f_max && f_max <= nyquist) {
        return Err(DspError::InvalidConfig(format!(
            "need f_min < f_max <= nyquist, got {f_min}..{f_max} at {sample_rate} Hz"
        )));
    }
    if n_mels == 0 {
        return Err(DspError::InvalidConfig("n_mels must be > 0".into()));
    }
    let n_linear = fft_size / 2 + 1;
    let mel_lo = hz_to_mel(f_min, scale);
    let mel_hi = hz_to_mel(f_max, scale);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64, scale))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;

    let mut weights = vec![0.0; n_mels * n_linear];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..n_linear {
            let f = k as f64 * bin_hz;
            let w = if f <= left || f >= right {
                0.0
            } else if f <= center {
                (f - left) / (center - left)
            } else {
                (right - f) / (right - center)
            };
            if w > 0.0 {
                any = true;
            }
            weights[m * n_linear + k] = w;
        }
        if !any {
            return Err(DspError::EmptyMelRow(m));
        }
    }

    let fb = MelFilterbank { weights, n_mels, n_linear, f_min, f_max, mel_scale: scale };
    for m in 1..n_mels {
        if fb.peak_bin(m) <= fb.peak_bin(m - 1) {
            return Err(DspError::InvalidConfig(format!(
                "mel rows {} and {m} peak at the same bin; reduce n_mels",
                m - 1
            )));
        }
    }
    Ok(fb)
}
