//! Griffin-Lim phase reconstruction from linear magnitude spectrograms.
//!
//! The synthesis path of this project only runs a single iteration: the
//! recognizer consumes MFCCs downstream, so phase fidelity is not needed
//! and one pass keeps batch generation cheap. The full iterative scheme is
//! available for diagnostics and tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::{istft, stft, DspError, Spectrogram, StftConfig, Waveform};

#[derive(Debug, Error)]
pub enum VocoderError {
    #[error("negative magnitude at frame {frame}, bin {bin}")]
    NegativeMagnitude { frame: usize, bin: usize },
    #[error("non-finite magnitude at frame {frame}, bin {bin}")]
    NonFiniteMagnitude { frame: usize, bin: usize },
    #[error("magnitude has {got} bins, stft config implies {expected}")]
    BinMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T> = std::result::Result<T, VocoderError>;

/// Initial phase for the first inverse transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInit {
    Zero,
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct GriffinLimConfig {
    pub n_iters: usize,
    pub init_phase: PhaseInit,
    /// Exponent applied to the magnitudes before reconstruction.
    pub power: f64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self { n_iters: 1, init_phase: PhaseInit::Zero, power: 1.0 }
    }
}

/// Nonnegative magnitude spectrogram, time-major, full bin count
/// (`fft_size/2 + 1`, DC included).
#[derive(Debug, Clone)]
pub struct MagnitudeSpectrogram {
    data: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
}

impl MagnitudeSpectrogram {
    pub fn new(data: Vec<f64>, n_frames: usize, n_bins: usize) -> Result<Self> {
        assert_eq!(data.len(), n_frames * n_bins, "magnitude buffer shape");
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(VocoderError::NonFiniteMagnitude {
                    frame: i / n_bins,
                    bin: i % n_bins,
                });
            }
            if v < 0.0 {
                return Err(VocoderError::NegativeMagnitude { frame: i / n_bins, bin: i % n_bins });
            }
        }
        Ok(Self { data, n_frames, n_bins })
    }

    pub fn from_spectrogram(spec: &Spectrogram) -> Self {
        Self {
            data: spec.magnitudes(),
            n_frames: spec.n_frames(),
            n_bins: spec.n_bins(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn at(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.n_bins + k]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn combine(mag: &MagnitudeSpectrogram, phases: &Spectrogram) -> Spectrogram {
    let mut data = Vec::with_capacity(mag.data.len());
    for t in 0..mag.n_frames {
        for k in 0..mag.n_bins {
            let p = phases.at(t, k);
            let unit = if p.norm() > 0.0 { p / p.norm() } else { Complex64::new(1.0, 0.0) };
            data.push(unit * mag.at(t, k));
        }
    }
    Spectrogram::new(data, mag.n_frames, mag.n_bins).expect("shape fixed above")
}

fn initial_spectrogram(mag: &MagnitudeSpectrogram, init: PhaseInit) -> Spectrogram {
    let data: Vec<Complex64> = match init {
        PhaseInit::Zero => mag.data.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
        PhaseInit::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mag.data
                .iter()
                .map(|&m| {
                    let phi = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
                    Complex64::from_polar(m, phi)
                })
                .collect()
        }
    };
    Spectrogram::new(data, mag.n_frames, mag.n_bins).expect("shape fixed above")
}

/// Iterates `x <- istft(mag * exp(i*angle(stft(x))))` starting from the
/// waveform implied by the initial phase. Deterministic given the seed.
pub fn griffin_lim(
    mag: &MagnitudeSpectrogram,
    cfg: &GriffinLimConfig,
    stft_cfg: &StftConfig,
    sample_rate: u32,
) -> Result<Waveform> {
    assert!(cfg.n_iters >= 1, "n_iters must be >= 1");
    if mag.n_bins != stft_cfg.n_bins() {
        return Err(VocoderError::BinMismatch { got: mag.n_bins, expected: stft_cfg.n_bins() });
    }
    let powered = if (cfg.power - 1.0).abs() > 0.0 {
        MagnitudeSpectrogram::new(
            mag.data.iter().map(|&v| v.powf(cfg.power)).collect(),
            mag.n_frames,
            mag.n_bins,
        )?
    } else {
        mag.clone()
    };

    let mut x = istft(&initial_spectrogram(&powered, cfg.init_phase), stft_cfg, sample_rate)?;
    for _ in 0..cfg.n_iters {
        let phases = stft(&x, stft_cfg)?;
        x = istft(&combine(&powered, &phases), stft_cfg, sample_rate)?;
    }
    Ok(x)
}

/// Frobenius distance between `mag` and `|stft(w)|`.
pub fn consistency_error(
    mag: &MagnitudeSpectrogram,
    w: &Waveform,
    stft_cfg: &StftConfig,
) -> Result<f64> {
    let spec = stft(w, stft_cfg)?;
    if spec.n_frames() != mag.n_frames || spec.n_bins() != mag.n_bins {
        return Err(VocoderError::Dsp(DspError::ShapeMismatch {
            op: "consistency_error",
            detail: format!(
                "mag {}x{} vs stft {}x{}",
                mag.n_frames,
                mag.n_bins,
                spec.n_frames(),
                spec.n_bins()
            ),
        }));
    }
    let mut acc = 0.0;
    for t in 0..mag.n_frames {
        for k in 0..mag.n_bins {
            let d = mag.at(t, k) - spec.at(t, k).norm();
            acc += d * d;
        }
    }
    Ok(acc.sqrt())
}

/// SNR of `rec` against `amp*sin(2*pi*freq*t + phi)` with the phase `phi`
/// chosen by least squares, evaluated away from the window edges. A steady
/// tone's magnitude spectrogram cannot pin the global phase, so this is the
/// right reconstruction metric for sinusoid tests.
pub fn aligned_tone_snr_db(src: &Waveform, rec: &Waveform, freq: f64, amp: f64) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * freq / src.sample_rate as f64;
    let win = 800;
    let n = rec.len().min(src.len());
    let (mut rs, mut rc, mut rr, mut ss) = (0.0, 0.0, 0.0, 0.0);
    for i in win..n.saturating_sub(win) {
        let s = (omega * i as f64).sin();
        let c = (omega * i as f64).cos();
        rs += rec.samples[i] * s;
        rc += rec.samples[i] * c;
        rr += rec.samples[i] * rec.samples[i];
        ss += (amp * s) * (amp * s);
    }
    let best_corr = amp * (rs * rs + rc * rc).sqrt();
    let resid = rr + ss - 2.0 * best_corr;
    10.0 * (ss / resid.max(1e-30)).log10()
}

/// Scale so the waveform peak sits at `peak` (used before PCM quantization).
/// Silence is returned unchanged.
pub fn normalize_peak(w: &Waveform, peak: f64) -> Waveform {
    let max = w.samples.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if max <= 0.0 {
        return w.clone();
    }
    let scale = peak / max;
    Waveform {
        samples: w.samples.iter().map(|&x| x * scale).collect(),
        sample_rate: w.sample_rate,
    }
}
