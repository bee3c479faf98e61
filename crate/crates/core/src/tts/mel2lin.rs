//! Mel-to-linear converter: two residual BLSTM blocks over an input
//! projection, then a linear head onto the 512 non-DC spectrogram bins.
//! Trained once, separately from the synthesis network, on feature pairs
//! extracted from the same audio.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{FeatureKind, FeatureMatrix, NormStats};
use crate::nn::{Blstm, Linear, NnError, ParamStore, Result, Scalar, Tape, Tensor};

#[derive(Debug, Clone)]
pub struct MelToLinearConfig {
    pub n_mels: usize,
    pub n_linear: usize,
    /// Hidden size per BLSTM direction; the block width is twice this.
    pub blstm_hidden: usize,
}

impl Default for MelToLinearConfig {
    fn default() -> Self {
        Self { n_mels: 80, n_linear: 512, blstm_hidden: 128 }
    }
}

pub struct MelToLinearNet {
    pub cfg: MelToLinearConfig,
    pub input_proj: Linear,
    pub blstm1: Blstm,
    pub blstm2: Blstm,
    pub out_proj: Linear,
}

impl MelToLinearNet {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: MelToLinearConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = 2 * cfg.blstm_hidden;
        let input_proj = Linear::new(store, "m2l.input", cfg.n_mels, width, true, &mut rng);
        let blstm1 = Blstm::new(store, "m2l.blstm1", width, cfg.blstm_hidden, &mut rng);
        let blstm2 = Blstm::new(store, "m2l.blstm2", width, cfg.blstm_hidden, &mut rng);
        let out_proj = Linear::new(store, "m2l.out", width, cfg.n_linear, true, &mut rng);
        Self { cfg, input_proj, blstm1, blstm2, out_proj }
    }

    /// Normalized mel `[T, n_mels]` to normalized linear `[T, n_linear]`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        mel: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if mel.shape().len() != 2 || mel.shape()[1] != self.cfg.n_mels {
            return Err(NnError::ShapeMismatch {
                op: "mel_to_linear",
                detail: format!("input {:?}, expected [T, {}]", mel.shape(), self.cfg.n_mels),
            });
        }
        let h0 = self.input_proj.forward(tape, store, mel)?;
        let h1 = self.blstm1.forward(tape, store, &h0)?.add(&h0)?;
        let h2 = self.blstm2.forward(tape, store, &h1)?.add(&h1)?;
        self.out_proj.forward(tape, store, &h2)
    }

    /// Inference from a normalized mel matrix to denormalized, nonnegative
    /// linear magnitudes (DC excluded).
    pub fn convert<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        mel_norm: &FeatureMatrix,
        linear_stats: &NormStats,
    ) -> Result<FeatureMatrix> {
        let tape: Tape<T> = Tape::new();
        let x = tape.constant_from_f64(
            mel_norm.data(),
            vec![mel_norm.n_frames(), mel_norm.feature_dim()],
        );
        let y = self.forward(&tape, store, &x)?;
        let mut vals = y.to_f64_vec();
        let dim = self.cfg.n_linear;
        for (i, v) in vals.iter_mut().enumerate() {
            let d = i % dim;
            *v = (*v * linear_stats.std[d] + linear_stats.mean[d]).max(0.0);
        }
        FeatureMatrix::new(vals, mel_norm.n_frames(), dim, FeatureKind::LinearMag, mel_norm.frame_rate)
            .map_err(|e| NnError::ShapeMismatch { op: "mel_to_linear.convert", detail: e.to_string() })
    }
}

/// Prepend a zero DC column so the 512 predicted bins line up with the
/// `fft/2 + 1` bins Griffin-Lim expects.
pub fn linear_with_dc(linear: &FeatureMatrix) -> Vec<f64> {
    let t = linear.n_frames();
    let d = linear.feature_dim();
    let mut out = Vec::with_capacity(t * (d + 1));
    for frame in linear.rows() {
        out.push(0.0);
        out.extend_from_slice(frame);
    }
    out
}
