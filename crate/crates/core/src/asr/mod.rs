//! Toy-scale attention encoder-decoder ASR with a CTC auxiliary head,
//! beam-search decoding with log-linear language-model fusion, and WER
//! scoring.

mod beam;
mod lm;
mod train;
mod vocab;
mod wer;

pub use beam::{beam_search, BeamConfig};
pub use lm::{LmScorer, NgramLm, UniformLm};
pub use train::{asr_utterance_loss, train_asr, AsrExample, AsrTrainConfig, AsrTrainLog};
pub use vocab::AsrVocab;
pub use wer::{wer, wer_strings, WerResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    concat_vecs, ctc_loss, ctc_min_frames, Blstm, Embedding, Linear, LstmCell, LstmState, NnError,
    ParamStore, Result, Scalar, Tape, Tensor,
};
use crate::tts::{AttentionConfig, AttentionModule, AttentionPrepared};

#[derive(Debug, Clone)]
pub struct AsrConfig {
    pub input_dim: usize,
    pub enc_layers: usize,
    /// Hidden units per BLSTM direction (paper scale: 512 per direction for
    /// a layer dimension of 1024; desk scale defaults to 64).
    pub enc_hidden: usize,
    /// Time max-pooling by 2 after each of the first `pool_layers` layers.
    pub pool_layers: usize,
    pub dec_hidden: usize,
    pub emb_dim: usize,
    pub vocab_size: usize,
    pub attention: AttentionConfig,
    pub ctc_weight: f64,
}

impl AsrConfig {
    /// Desk-scale defaults; the paper-scale widths (1024 encoder dimension,
    /// 1000 decoder units, 1024 attention MLP) remain config choices.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            input_dim: 40,
            enc_layers: 6,
            enc_hidden: 64,
            pool_layers: 3,
            dec_hidden: 128,
            emb_dim: 64,
            vocab_size,
            attention: AttentionConfig {
                dim: 128,
                posenc_dim: 0,
                feedback_filters: 32,
                feedback_width: 31,
                feedback_left_pad: 0.0,
            },
            ctc_weight: 0.5,
        }
    }

    pub fn enc_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn time_reduction(&self) -> usize {
        1 << self.pool_layers
    }
}

pub struct AsrModel {
    pub cfg: AsrConfig,
    enc_layers: Vec<Blstm>,
    ctc_head: Linear,
    token_emb: Embedding,
    dec_lstm: LstmCell,
    pub attention: AttentionModule,
    out_head: Linear,
}

/// Decoder recurrence carried between steps (and cloned per beam
/// hypothesis).
#[derive(Clone)]
pub struct DecoderState<T: Scalar> {
    pub lstm: LstmState<T>,
    pub accum: Tensor<T>,
    pub context: Tensor<T>,
}

impl AsrModel {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: AsrConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc_layers = Vec::with_capacity(cfg.enc_layers);
        let mut in_dim = cfg.input_dim;
        for i in 0..cfg.enc_layers {
            enc_layers.push(Blstm::new(store, &format!("asr.enc{i}"), in_dim, cfg.enc_hidden, &mut rng));
            in_dim = cfg.enc_dim();
        }
        let ctc_head = Linear::new(store, "asr.ctc_head", cfg.enc_dim(), cfg.vocab_size + 1, true, &mut rng);
        let token_emb = Embedding::new(store, "asr.token_emb", cfg.vocab_size, cfg.emb_dim, &mut rng);
        let attention = AttentionModule::new(
            store,
            "asr.attn",
            cfg.dec_hidden,
            cfg.enc_dim(),
            cfg.attention.clone(),
            &mut rng,
        );
        let dec_lstm = LstmCell::new(
            store,
            "asr.dec_lstm",
            cfg.emb_dim + cfg.enc_dim(),
            cfg.dec_hidden,
            &mut rng,
        );
        let out_head =
            Linear::new(store, "asr.out_head", cfg.dec_hidden + cfg.enc_dim(), cfg.vocab_size, true, &mut rng);
        Self { cfg, enc_layers, ctc_head, token_emb, dec_lstm, attention, out_head }
    }

    /// Six BLSTM layers with time pooling after the first three: `[T, 40]`
    /// to `[ceil(T/8), 2H]`.
    pub fn encode<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        features: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if features.shape().len() != 2 || features.shape()[0] == 0 {
            return Err(NnError::ShapeMismatch {
                op: "asr.encode",
                detail: format!("features {:?}", features.shape()),
            });
        }
        if features.shape()[1] != self.cfg.input_dim {
            return Err(NnError::ShapeMismatch {
                op: "asr.encode",
                detail: format!("dim {} != {}", features.shape()[1], self.cfg.input_dim),
            });
        }
        let mut x = features.clone();
        for (i, layer) in self.enc_layers.iter().enumerate() {
            x = layer.forward(tape, store, &x)?;
            if i < self.cfg.pool_layers {
                x = x.maxpool_time(2);
            }
        }
        Ok(x)
    }

    /// Per-frame label log-probabilities of the CTC head, `[T', V+1]`.
    pub fn ctc_log_probs<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        enc: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        Ok(self.ctc_head.forward(tape, store, enc)?.log_softmax_rows())
    }

    pub fn zero_decoder_state<T: Scalar>(&self, tape: &Tape<T>, positions: usize) -> DecoderState<T> {
        DecoderState {
            lstm: self.dec_lstm.zero_state(tape),
            accum: tape.constant(vec![T::zero(); positions], vec![positions]),
            context: tape.constant(vec![T::zero(); self.cfg.enc_dim()], vec![self.cfg.enc_dim()]),
        }
    }

    /// One decoder step conditioned on the previous token; returns the
    /// next-token logits and the updated state.
    pub fn decoder_step<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        prep: &AttentionPrepared<T>,
        prev_token: usize,
        state: &DecoderState<T>,
    ) -> Result<(Tensor<T>, DecoderState<T>)> {
        let emb = self.token_emb.forward(tape, store, &[prev_token])?.reshape(vec![self.cfg.emb_dim]);
        let input = concat_vecs(tape, &[&emb, &state.context]);
        let lstm = self.dec_lstm.step(tape, store, &input, &state.lstm)?;
        let (context, alpha) = self.attention.step(tape, store, prep, &lstm.h, &state.accum)?;
        let accum = state.accum.add(&alpha)?;
        let logits = self.out_head.forward(tape, store, &concat_vecs(tape, &[&lstm.h, &context]))?;
        Ok((logits, DecoderState { lstm, accum, context }))
    }

    /// Teacher-forced decoder logits over `labels + [eos]`, fed with
    /// `eos, labels...` as inputs.
    pub fn teacher_logits<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        enc: &Tensor<T>,
        labels: &[usize],
        eos: usize,
    ) -> Result<Tensor<T>> {
        let prep = self.attention.prepare(tape, store, enc)?;
        let mut state = self.zero_decoder_state(tape, enc.shape()[0]);
        let mut inputs = Vec::with_capacity(labels.len() + 1);
        inputs.push(eos);
        inputs.extend_from_slice(labels);
        let mut rows = Vec::with_capacity(inputs.len());
        for &tok in &inputs {
            let (logits, next) = self.decoder_step(tape, store, &prep, tok, &state)?;
            rows.push(logits);
            state = next;
        }
        Ok(crate::nn::stack_rows(tape, &rows))
    }
}

/// Combined training loss: teacher-forced cross-entropy plus weighted CTC.
/// Fails with `CtcInfeasible` when the encoder is too short for the labels.
pub fn asr_loss<T: Scalar>(
    model: &AsrModel,
    tape: &Tape<T>,
    store: &ParamStore<T>,
    features: &Tensor<T>,
    labels: &[usize],
    eos: usize,
) -> Result<Tensor<T>> {
    let enc = model.encode(tape, store, features)?;
    if model.cfg.ctc_weight > 0.0 && ctc_min_frames(labels) > enc.shape()[0] {
        return Err(NnError::CtcInfeasible {
            frames: enc.shape()[0],
            labels: labels.len(),
            min_frames: ctc_min_frames(labels),
        });
    }
    let logits = model.teacher_logits(tape, store, &enc, labels, eos)?;
    let mut targets = labels.to_vec();
    targets.push(eos);
    let ce = crate::nn::ce_loss(&logits, &targets)?;
    if model.cfg.ctc_weight > 0.0 {
        let ctc = ctc_loss(&model.ctc_log_probs(tape, store, &enc)?, labels)?;
        ce.add(&ctc.scale(T::from_f64(model.cfg.ctc_weight)))
    } else {
        Ok(ce)
    }
}

#[cfg(test)]
mod tests;
