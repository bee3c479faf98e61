//! Deterministic audio feature extraction: preemphasis, STFT/ISTFT, mel
//! filterbank, log-mel, MFCC and corpus-level normalization.
//!
//! All operations are pure; statistics estimation keeps exact sums so
//! partial results computed in parallel can be merged without loss.

mod feat_io;
mod mel;
mod norm;
mod stft;
mod wav;

pub use feat_io::{read_feature_file, read_norm_stats, write_feature_file, write_norm_stats};
pub use mel::{hz_to_mel, make_mel_filterbank, mel_to_hz, MelFilterbank, MelScale};
pub use norm::{apply_norm, estimate_norm_stats, unapply_norm, NormStats, StatsAccumulator};
pub use stft::{istft, stft, Spectrogram};
pub use wav::{read_wav, wav_duration_seconds, write_wav};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("window/hop mismatch: zero overlap energy at sample {0}")]
    ZeroOverlap(usize),
    #[error("mel filter row {0} is empty; reduce n_mels or increase fft_size")]
    EmptyMelRow(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("wav: {0}")]
    Wav(String),
    #[error("feature file: {0}")]
    FeatureFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Mono audio with its sample rate. Samples are nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(DspError::InvalidConfig("sample_rate must be > 0".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis window family for the STFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFn {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl WindowFn {
    pub fn evaluate(self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::Hann => (0..len)
                .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
                .collect(),
            WindowFn::Rectangular => vec![1.0; len],
        }
    }
}

/// STFT framing parameters. Times are in seconds so the same config applies
/// to any sample rate; sample counts are derived per waveform.
#[derive(Debug, Clone)]
pub struct StftConfig {
    pub window_len: f64,
    pub hop: f64,
    pub fft_size: usize,
    pub window_fn: WindowFn,
    pub preemphasis_alpha: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 0.050,
            hop: 0.0125,
            fft_size: 1024,
            window_fn: WindowFn::Hann,
            preemphasis_alpha: 0.97,
        }
    }
}

impl StftConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_len * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop * sample_rate as f64).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_rate(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.hop_samples(sample_rate) as f64
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let win = self.window_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if win == 0 || hop == 0 {
            return Err(DspError::InvalidConfig("window and hop must be > 0".into()));
        }
        if hop > win {
            return Err(DspError::InvalidConfig(format!(
                "hop ({hop} samples) must not exceed window ({win} samples)"
            )));
        }
        if self.fft_size < win {
            return Err(DspError::InvalidConfig(format!(
                "fft_size {} < window length {win}",
                self.fft_size
            )));
        }
        if !(0.0..1.0).contains(&self.preemphasis_alpha) {
            return Err(DspError::InvalidConfig("preemphasis alpha must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// What a [`FeatureMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Linear magnitude spectrogram, DC bin excluded.
    LinearMag,
    LogMel,
    Mfcc,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::LinearMag => 0,
            FeatureKind::LogMel => 1,
            FeatureKind::Mfcc => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureKind::LinearMag),
            1 => Some(FeatureKind::LogMel),
            2 => Some(FeatureKind::Mfcc),
            _ => None,
        }
    }
}

/// Time-major matrix of spectral features (row = frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_frames: usize,
    feature_dim: usize,
    pub kind: FeatureKind,
    pub frame_rate: f64,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        n_frames: usize,
        feature_dim: usize,
        kind: FeatureKind,
        frame_rate: f64,
    ) -> Result<Self> {
        if data.len() != n_frames * feature_dim {
            return Err(DspError::ShapeMismatch {
                op: "FeatureMatrix::new",
                detail: format!(
                    "data length {} != {n_frames} x {feature_dim}",
                    data.len()
                ),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite(i));
        }
        Ok(Self { data, n_frames, feature_dim, kind, frame_rate })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.feature_dim..(t + 1) * self.feature_dim]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.feature_dim..(t + 1) * self.feature_dim]
    }

    pub fn at(&self, t: usize, f: usize) -> f64 {
        self.data[t * self.feature_dim + f]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.feature_dim)
    }
}

/// Per-op feature dimensions and mel bounds for one extraction setup.
#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub stft: StftConfig,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub mel_fmin: f64,
    /// Upper mel bound; `None` means Nyquist.
    pub mel_fmax: Option<f64>,
    pub mel_scale: MelScale,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            n_mels: 80,
            n_mfcc: 40,
            mel_fmin: 60.0,
            mel_fmax: None,
            mel_scale: MelScale::Htk,
        }
    }
}

/// Log floor applied to mel energies before taking the logarithm.
pub const LOG_MEL_FLOOR: f64 = 1e-10;

/// y[0] = x[0], y[t] = x[t] - alpha * x[t-1]. Empty input stays empty.
pub fn preemphasize(w: &Waveform, alpha: f64) -> Waveform {
    let mut out = Vec::with_capacity(w.samples.len());
    let mut prev = 0.0;
    for (t, &x) in w.samples.iter().enumerate() {
        out.push(if t == 0 { x } else { x - alpha * prev });
        prev = x;
    }
    Waveform { samples: out, sample_rate: w.sample_rate }
}

/// 80-dim style log-mel features: preemphasis, power STFT, mel filterbank,
/// floored natural log.
pub fn log_mel(w: &Waveform, cfg: &StftConfig, fb: &MelFilterbank) -> Result<FeatureMatrix> {
    let pre = preemphasize(w, cfg.preemphasis_alpha);
    let spec = stft(&pre, cfg)?;
    if fb.n_linear() != spec.n_bins() {
        return Err(DspError::ShapeMismatch {
            op: "log_mel",
            detail: format!(
                "filterbank expects {} bins, stft produced {}",
                fb.n_linear(),
                spec.n_bins()
            ),
        });
    }
    let n_mels = fb.n_mels();
    let mut data = Vec::with_capacity(spec.n_frames() * n_mels);
    let mut power = vec![0.0; spec.n_bins()];
    for t in 0..spec.n_frames() {
        for (k, p) in power.iter_mut().enumerate() {
            *p = spec.at(t, k).norm_sqr();
        }
        for m in 0..n_mels {
            let e: f64 = fb
                .row(m)
                .iter()
                .zip(power.iter())
                .map(|(w, p)| w * p)
                .sum();
            data.push(e.max(LOG_MEL_FLOOR).ln());
        }
    }
    FeatureMatrix::new(
        data,
        spec.n_frames(),
        n_mels,
        FeatureKind::LogMel,
        cfg.frame_rate(w.sample_rate),
    )
}

/// MFCCs: type-II DCT of the log-mel frames, keeping the first `n_coeffs`.
pub fn mfcc(
    w: &Waveform,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    n_coeffs: usize,
) -> Result<FeatureMatrix> {
    if n_coeffs > fb.n_mels() {
        return Err(DspError::InvalidConfig(format!(
            "n_coeffs {} > n_mels {}",
            n_coeffs,
            fb.n_mels()
        )));
    }
    let lm = log_mel(w, cfg, fb)?;
    let mut data = Vec::with_capacity(lm.n_frames() * n_coeffs);
    for t in 0..lm.n_frames() {
        data.extend(dct_ii(lm.frame(t), n_coeffs));
    }
    FeatureMatrix::new(data, lm.n_frames(), n_coeffs, FeatureKind::Mfcc, lm.frame_rate)
}

/// Orthonormal type-II DCT of one frame, first `n_coeffs` coefficients.
pub fn dct_ii(frame: &[f64], n_coeffs: usize) -> Vec<f64> {
    let n = frame.len();
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    (0..n_coeffs)
        .map(|k| {
            let acc: f64 = frame
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    x * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64)
                        .cos()
                })
                .sum();
            acc * if k == 0 { scale0 } else { scale }
        })
        .collect()
}

/// Linear magnitude spectrogram with the DC bin dropped (bins 1..=fft/2).
pub fn linear_magnitude(w: &Waveform, cfg: &StftConfig) -> Result<FeatureMatrix> {
    let pre = preemphasize(w, cfg.preemphasis_alpha);
    let spec = stft(&pre, cfg)?;
    let dim = spec.n_bins() - 1;
    let mut data = Vec::with_capacity(spec.n_frames() * dim);
    for t in 0..spec.n_frames() {
        for k in 1..spec.n_bins() {
            data.push(spec.at(t, k).norm());
        }
    }
    FeatureMatrix::new(
        data,
        spec.n_frames(),
        dim,
        FeatureKind::LinearMag,
        cfg.frame_rate(w.sample_rate),
    )
}

#[cfg(test)]
mod tests;
