//! Global style tokens: a strided 2-D conv stack and a forward LSTM squeeze
//! a reference utterance into one vector, which selects a softmax mixture
//! from a learned token bank. The mixture (a convex combination of token
//! rows) is the speaker embedding.

use rand_chacha::ChaCha8Rng;

use crate::dsp::FeatureMatrix;
use crate::nn::{
    glorot_uniform, Conv2d, Linear, LstmCell, NnError, ParamId, ParamStore, Result, Scalar, Tape,
    Tensor,
};

#[derive(Debug, Clone)]
pub struct GstConfig {
    pub n_tokens: usize,
    pub token_dim: usize,
    /// Output channels of the six stride-2 reference-encoder convolutions.
    pub conv_channels: [usize; 6],
    pub conv_kernel: usize,
    pub ref_lstm_hidden: usize,
    pub attn_dim: usize,
    pub n_mels: usize,
}

impl Default for GstConfig {
    fn default() -> Self {
        Self {
            n_tokens: 100,
            token_dim: 128,
            conv_channels: [8, 8, 16, 16, 32, 32],
            conv_kernel: 3,
            ref_lstm_hidden: 128,
            attn_dim: 64,
            n_mels: 80,
        }
    }
}

/// Six stride-2 halvings; shorter references are zero-padded to this.
pub const MIN_REFERENCE_FRAMES: usize = 64;

pub struct StyleTokenBank {
    pub tokens: ParamId,
    convs: Vec<Conv2d>,
    ref_lstm: LstmCell,
    query: Linear,
    keys: Linear,
    pub cfg: GstConfig,
}

impl StyleTokenBank {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: GstConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let tokens = store.add(
            format!("{name}.tokens"),
            vec![cfg.n_tokens, cfg.token_dim],
            glorot_uniform(rng, cfg.token_dim, cfg.token_dim, cfg.n_tokens * cfg.token_dim),
        );
        let mut convs = Vec::with_capacity(6);
        let mut in_ch = 1;
        for (i, &out_ch) in cfg.conv_channels.iter().enumerate() {
            convs.push(Conv2d::new(
                store,
                &format!("{name}.conv{i}"),
                in_ch,
                out_ch,
                cfg.conv_kernel,
                2,
                rng,
            ));
            in_ch = out_ch;
        }
        // Frequency axis after six halvings.
        let freq_out = (0..6).fold(cfg.n_mels, |f, _| f.div_ceil(2));
        let lstm_in = freq_out * cfg.conv_channels[5];
        let ref_lstm =
            LstmCell::new(store, &format!("{name}.ref_lstm"), lstm_in, cfg.ref_lstm_hidden, rng);
        let query = Linear::new(store, &format!("{name}.query"), cfg.ref_lstm_hidden, cfg.attn_dim, false, rng);
        let keys = Linear::new(store, &format!("{name}.keys"), cfg.token_dim, cfg.attn_dim, false, rng);
        Self { tokens, convs, ref_lstm, query, keys, cfg }
    }

    /// Embed a reference, returning the mixture and the attention weights.
    pub fn embed_with_weights<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        reference: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        if reference.shape().len() != 2 || reference.shape()[1] != self.cfg.n_mels {
            return Err(NnError::ShapeMismatch {
                op: "gst_embed",
                detail: format!("reference {:?}, expected [T, {}]", reference.shape(), self.cfg.n_mels),
            });
        }
        let t_in = reference.shape()[0];
        if t_in == 0 {
            return Err(NnError::ShapeMismatch {
                op: "gst_embed",
                detail: "empty reference".into(),
            });
        }
        // Zero-pad short references so six halvings leave at least one frame.
        let padded = if t_in < MIN_REFERENCE_FRAMES {
            let mut vals = reference.values().to_vec();
            vals.resize(MIN_REFERENCE_FRAMES * self.cfg.n_mels, T::zero());
            tape.constant(vals, vec![MIN_REFERENCE_FRAMES, self.cfg.n_mels])
        } else {
            reference.clone()
        };

        let t_len = padded.shape()[0];
        let mut x = padded.reshape(vec![t_len, self.cfg.n_mels, 1]);
        for conv in &self.convs {
            x = conv.forward(tape, store, &x)?.relu();
        }
        let (t_out, f_out, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let seq = x.reshape(vec![t_out, f_out * ch]);
        let hs = self.ref_lstm.run_seq(tape, store, &seq)?;
        let last = hs.row(t_out - 1);

        let q = self.query.forward(tape, store, &last)?; // [attn_dim]
        let tokens = tape.param(store, self.tokens);
        let keys = self.keys.forward(tape, store, &tokens)?.tanh(); // [n_tokens, attn_dim]
        let scores = q.linear(&keys, None)?; // [n_tokens]
        let alpha = scores.softmax_rows();
        let mixture = alpha.vecmat(&tokens)?;
        Ok((mixture, alpha))
    }

    pub fn embed<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        reference: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        Ok(self.embed_with_weights(tape, store, reference)?.0)
    }

    /// Convenience entry point from a (normalized) log-mel matrix.
    pub fn embed_features<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        reference: &FeatureMatrix,
    ) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let r = tape.constant_from_f64(
            reference.data(),
            vec![reference.n_frames(), reference.feature_dim()],
        );
        let (mixture, _) = self.embed_with_weights(&tape, store, &r)?;
        Ok(mixture.to_f64_vec())
    }
}
