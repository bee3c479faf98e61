//! MLP attention with convolutional weight feedback and a sinusoidal
//! positional encoding of the encoder positions.
//!
//! Energies follow
//! `e_ij = v^T tanh(W_s s_i + W_h h_j + W_p posenc(j) + W_g gamma_ij)`
//! where `gamma_i` is a 1-D convolution over the accumulated alignments.
//! Positions before the first encoder state are padded with ones so the
//! start of the sequence already counts as attended; positions after the
//! last state are padded with zeros.

use rand_chacha::ChaCha8Rng;

use crate::nn::{
    Conv1d, Linear, PadMode, ParamStore, Result, Scalar, Tape, Tensor,
};

#[derive(Debug, Clone)]
pub struct AttentionConfig {
    /// Width of the shared tanh projection.
    pub dim: usize,
    /// 0 disables the positional-encoding term entirely.
    pub posenc_dim: usize,
    pub feedback_filters: usize,
    pub feedback_width: usize,
    /// Pad value for positions before the first encoder state.
    pub feedback_left_pad: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            posenc_dim: 64,
            feedback_filters: 32,
            feedback_width: 31,
            feedback_left_pad: 1.0,
        }
    }
}

/// Fixed interleaved sin/cos encoding with base 10000; `posenc(0)` is
/// `[0, 1, 0, 1, ...]` and every component lies in `[-1, 1]`.
pub fn posenc(j: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    for pair in 0..dim.div_ceil(2) {
        let rate = 10000f64.powf(-(2.0 * pair as f64) / dim as f64);
        let angle = j as f64 * rate;
        out.push(angle.sin());
        if out.len() < dim {
            out.push(angle.cos());
        }
    }
    out
}

pub struct AttentionModule {
    pub w_s: Linear,
    pub w_h: Linear,
    pub w_p: Option<Linear>,
    pub w_g: Linear,
    pub v: Linear,
    pub feedback: Conv1d,
    pub cfg: AttentionConfig,
}

/// Per-utterance terms that do not change across decoder steps.
pub struct AttentionPrepared<T: Scalar> {
    pub enc: Tensor<T>,
    /// `W_h h_j + W_p posenc(j)` for every position.
    static_energy: Tensor<T>,
    pub positions: usize,
}

impl AttentionModule {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        dec_dim: usize,
        enc_dim: usize,
        cfg: AttentionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dim = cfg.dim;
        Self {
            w_s: Linear::new(store, &format!("{name}.w_s"), dec_dim, dim, false, rng),
            w_h: Linear::new(store, &format!("{name}.w_h"), enc_dim, dim, false, rng),
            w_p: (cfg.posenc_dim > 0)
                .then(|| Linear::new(store, &format!("{name}.w_p"), cfg.posenc_dim, dim, false, rng)),
            w_g: Linear::new(store, &format!("{name}.w_g"), cfg.feedback_filters, dim, false, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, 1, false, rng),
            feedback: Conv1d::new(
                store,
                &format!("{name}.feedback"),
                1,
                cfg.feedback_filters,
                cfg.feedback_width,
                rng,
            ),
            cfg,
        }
    }

    pub fn prepare<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        enc: &Tensor<T>,
    ) -> Result<AttentionPrepared<T>> {
        let j = enc.shape()[0];
        let mut static_energy = self.w_h.forward(tape, store, enc)?;
        if let Some(w_p) = &self.w_p {
            let pos: Vec<f64> = (0..j).flat_map(|p| posenc(p, self.cfg.posenc_dim)).collect();
            let pos_t = tape.constant_from_f64(&pos, vec![j, self.cfg.posenc_dim]);
            static_energy = static_energy.add(&w_p.forward(tape, store, &pos_t)?)?;
        }
        Ok(AttentionPrepared { enc: enc.clone(), static_energy, positions: j })
    }

    /// One attention read: returns the context vector and the weights.
    pub fn step<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        prep: &AttentionPrepared<T>,
        decoder_state: &Tensor<T>,
        accum: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let j = prep.positions;
        let gamma = self.feedback.forward(
            tape,
            store,
            &accum.reshape(vec![j, 1]),
            PadMode::Const { left: self.cfg.feedback_left_pad, right: 0.0 },
        )?; // [J, filters]
        let state_term = self.w_s.forward(tape, store, decoder_state)?; // [dim]
        let energies = prep
            .static_energy
            .add(&self.w_g.forward(tape, store, &gamma)?)?
            .add_row_broadcast(&state_term)?
            .tanh();
        let e = self.v.forward(tape, store, &energies)?.reshape(vec![j]);
        let alpha = e.softmax_rows();
        let context = alpha.vecmat(&prep.enc)?;
        Ok((context, alpha))
    }
}
