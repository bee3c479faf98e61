//! Tacotron-style synthesis network: character encoder with a style-token
//! speaker embedding, an attention decoder emitting three stacked mel frames
//! per step with a stop-token head, and a separately trained mel-to-linear
//! converter feeding single-iteration Griffin-Lim synthesis.

mod attention;
mod gst;
mod mel2lin;
mod train;

pub use attention::{posenc, AttentionConfig, AttentionModule, AttentionPrepared};
pub use gst::{GstConfig, StyleTokenBank, MIN_REFERENCE_FRAMES};
pub use mel2lin::{linear_with_dc, MelToLinearConfig, MelToLinearNet};
pub use train::{
    eval_mel_to_linear, train_mel_to_linear, train_tts, Mel2LinExample, TrainLog, TtsExample,
    TtsTrainConfig,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{FeatureKind, FeatureMatrix};
use crate::nn::{
    bce_loss, concat_vecs, l1_loss, stack_rows, Blstm, Conv1d, Embedding, Linear, LstmCell,
    NnError, PadMode, ParamStore, Result, Scalar, Tape, Tensor,
};

#[derive(Debug, Clone)]
pub struct TtsConfig {
    pub vocab_size: usize,
    pub char_emb_dim: usize,
    pub enc_filters: usize,
    pub enc_conv_width: usize,
    pub enc_conv_layers: usize,
    pub enc_blstm_hidden: usize,
    pub speaker_dim: usize,
    pub dec_hidden: usize,
    pub n_mels: usize,
    pub frames_per_step: usize,
    pub stop_threshold: f64,
    /// Decoder steps executed after the stop value first crosses the
    /// threshold.
    pub post_stop_steps: usize,
    pub attention: AttentionConfig,
    pub gst: GstConfig,
}

impl TtsConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            char_emb_dim: 128,
            enc_filters: 128,
            enc_conv_width: 5,
            enc_conv_layers: 3,
            enc_blstm_hidden: 128,
            speaker_dim: 128,
            dec_hidden: 256,
            n_mels: 80,
            frames_per_step: 3,
            stop_threshold: 0.4,
            post_stop_steps: 5,
            attention: AttentionConfig::default(),
            gst: GstConfig::default(),
        }
    }

    /// Encoder state width after speaker concatenation.
    pub fn enc_dim(&self) -> usize {
        2 * self.enc_blstm_hidden + self.speaker_dim
    }

    pub fn frames_out(&self) -> usize {
        self.n_mels * self.frames_per_step
    }
}

pub struct TtsModel {
    pub cfg: TtsConfig,
    pub char_emb: Embedding,
    pub enc_convs: Vec<Conv1d>,
    pub enc_blstm: Blstm,
    pub gst: StyleTokenBank,
    pub attention: AttentionModule,
    pub lstm1: LstmCell,
    pub lstm2: LstmCell,
    pub out_proj: Linear,
    pub stop_proj: Linear,
}

/// Teacher-forced forward outputs.
pub struct TeacherForwardOut<T: Scalar> {
    pub pred_mels: Tensor<T>,
    pub pred_stops: Tensor<T>,
    pub alignments: Vec<Vec<f64>>,
}

/// Free-running synthesis outputs (normalized log-mel domain).
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub mel: FeatureMatrix,
    pub steps: usize,
    /// 0-based decoder step where the stop value first exceeded the
    /// threshold.
    pub first_cross: Option<usize>,
    pub truncated: bool,
    pub alignments: Vec<Vec<f64>>,
}

impl TtsModel {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: TtsConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let char_emb = Embedding::new(store, "tts.char_emb", cfg.vocab_size, cfg.char_emb_dim, &mut rng);
        let mut enc_convs = Vec::with_capacity(cfg.enc_conv_layers);
        let mut in_ch = cfg.char_emb_dim;
        for i in 0..cfg.enc_conv_layers {
            enc_convs.push(Conv1d::new(
                store,
                &format!("tts.enc_conv{i}"),
                in_ch,
                cfg.enc_filters,
                cfg.enc_conv_width,
                &mut rng,
            ));
            in_ch = cfg.enc_filters;
        }
        let enc_blstm = Blstm::new(store, "tts.enc_blstm", in_ch, cfg.enc_blstm_hidden, &mut rng);
        let gst = StyleTokenBank::new(store, "tts.gst", cfg.gst.clone(), &mut rng);
        let attention = AttentionModule::new(
            store,
            "tts.attn",
            cfg.dec_hidden,
            cfg.enc_dim(),
            cfg.attention.clone(),
            &mut rng,
        );
        let dec_in = cfg.n_mels + cfg.enc_dim();
        let lstm1 = LstmCell::new(store, "tts.dec_lstm1", dec_in, cfg.dec_hidden, &mut rng);
        let lstm2 = LstmCell::new(store, "tts.dec_lstm2", cfg.dec_hidden, cfg.dec_hidden, &mut rng);
        let proj_in = cfg.dec_hidden + cfg.enc_dim();
        let out_proj = Linear::new(store, "tts.out_proj", proj_in, cfg.frames_out(), true, &mut rng);
        let stop_proj = Linear::new(store, "tts.stop_proj", proj_in, 1, true, &mut rng);
        Self { cfg, char_emb, enc_convs, enc_blstm, gst, attention, lstm1, lstm2, out_proj, stop_proj }
    }

    /// Character ids (ending in the end token) to encoder states
    /// `[J, 2H + speaker_dim]`; the speaker vector is concatenated to every
    /// position.
    pub fn encode<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        char_ids: &[usize],
        speaker: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if char_ids.is_empty() {
            return Err(NnError::ShapeMismatch { op: "tts.encode", detail: "empty text".into() });
        }
        if speaker.shape() != [self.cfg.speaker_dim] {
            return Err(NnError::ShapeMismatch {
                op: "tts.encode",
                detail: format!("speaker {:?}, expected [{}]", speaker.shape(), self.cfg.speaker_dim),
            });
        }
        let mut x = self.char_emb.forward(tape, store, char_ids)?;
        for conv in &self.enc_convs {
            x = conv.forward(tape, store, &x, PadMode::Zero)?.relu();
        }
        let states = self.enc_blstm.forward(tape, store, &x)?; // [J, 2H]
        let tiled: Vec<Tensor<T>> = (0..char_ids.len()).map(|_| speaker.clone()).collect();
        let speaker_rows = stack_rows(tape, &tiled);
        Ok(crate::nn::concat_cols(tape, &[&states, &speaker_rows]))
    }

    /// Teacher-forced pass over stacked target rows `[S, 3*n_mels]`.
    pub fn forward_teacher<T: Scalar>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        enc: &Tensor<T>,
        targets_stacked: &Tensor<T>,
    ) -> Result<TeacherForwardOut<T>> {
        let steps = targets_stacked.shape()[0];
        if targets_stacked.shape()[1] != self.cfg.frames_out() {
            return Err(NnError::ShapeMismatch {
                op: "tts.forward_teacher",
                detail: format!(
                    "targets {:?}, expected [S, {}]",
                    targets_stacked.shape(),
                    self.cfg.frames_out()
                ),
            });
        }
        let j = enc.shape()[0];
        let prep = self.attention.prepare(tape, store, enc)?;
        let mut state1 = self.lstm1.zero_state(tape);
        let mut state2 = self.lstm2.zero_state(tape);
        let mut accum = tape.constant(vec![T::zero(); j], vec![j]);
        let mut prev_context = tape.constant(vec![T::zero(); self.cfg.enc_dim()], vec![self.cfg.enc_dim()]);
        let mut prev_frame = tape.constant(vec![T::zero(); self.cfg.n_mels], vec![self.cfg.n_mels]);

        let mut mel_rows = Vec::with_capacity(steps);
        let mut stop_vals = Vec::with_capacity(steps);
        let mut alignments = Vec::with_capacity(steps);
        for i in 0..steps {
            let input = concat_vecs(tape, &[&prev_frame, &prev_context]);
            state1 = self.lstm1.step(tape, store, &input, &state1)?;
            state2 = self.lstm2.step(tape, store, &state1.h, &state2)?;
            let (context, alpha) = self.attention.step(tape, store, &prep, &state2.h, &accum)?;
            accum = accum.add(&alpha)?;
            alignments.push(alpha.to_f64_vec());

            let proj_in = concat_vecs(tape, &[&state2.h, &context]);
            let mel = self.out_proj.forward(tape, store, &proj_in)?;
            let stop = self.stop_proj.forward(tape, store, &proj_in)?.sigmoid();
            mel_rows.push(mel);
            stop_vals.push(stop);

            // Teacher forcing: the last ground-truth frame of this step's
            // stack is the next step's input frame.
            let row = targets_stacked.row(i);
            prev_frame =
                row.slice(self.cfg.frames_out() - self.cfg.n_mels, self.cfg.frames_out());
            prev_context = context;
        }
        Ok(TeacherForwardOut {
            pred_mels: stack_rows(tape, &mel_rows),
            pred_stops: concat_vecs(tape, &stop_vals.iter().collect::<Vec<_>>()),
            alignments,
        })
    }

    /// Greedy synthesis loop: no search; predicted frames feed back. Stops
    /// `post_stop_steps` after the stop value first exceeds the threshold,
    /// or at `max_steps` with the truncation flag set.
    pub fn synthesize<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        char_ids: &[usize],
        speaker: &[f64],
        max_steps: usize,
    ) -> Result<SynthesisResult> {
        assert!(max_steps >= 1);
        let tape: Tape<T> = Tape::new();
        let speaker_t = tape.constant_from_f64(speaker, vec![self.cfg.speaker_dim]);
        let enc = self.encode(&tape, store, char_ids, &speaker_t)?;
        let j = enc.shape()[0];
        let prep = self.attention.prepare(&tape, store, &enc)?;
        let mut state1 = self.lstm1.zero_state(&tape);
        let mut state2 = self.lstm2.zero_state(&tape);
        let mut accum = tape.constant(vec![T::zero(); j], vec![j]);
        let mut prev_context =
            tape.constant(vec![T::zero(); self.cfg.enc_dim()], vec![self.cfg.enc_dim()]);
        let mut prev_frame = tape.constant(vec![T::zero(); self.cfg.n_mels], vec![self.cfg.n_mels]);

        let mut frames: Vec<f64> = Vec::new();
        let mut alignments = Vec::new();
        let mut first_cross: Option<usize> = None;
        let mut steps = 0;
        let mut truncated = true;
        for i in 0..max_steps {
            let input = concat_vecs(&tape, &[&prev_frame, &prev_context]);
            state1 = self.lstm1.step(&tape, store, &input, &state1)?;
            state2 = self.lstm2.step(&tape, store, &state1.h, &state2)?;
            let (context, alpha) = self.attention.step(&tape, store, &prep, &state2.h, &accum)?;
            accum = accum.add(&alpha)?;
            alignments.push(alpha.to_f64_vec());

            let proj_in = concat_vecs(&tape, &[&state2.h, &context]);
            let mel = self.out_proj.forward(&tape, store, &proj_in)?;
            let stop = self.stop_proj.forward(&tape, store, &proj_in)?.sigmoid().item();
            frames.extend(mel.values().iter().map(|v| v.into_f64()));
            steps = i + 1;

            if first_cross.is_none() && stop.into_f64() > self.cfg.stop_threshold {
                first_cross = Some(i);
            }
            if let Some(k) = first_cross {
                if steps == k + 1 + self.cfg.post_stop_steps {
                    truncated = false;
                    break;
                }
            }

            prev_frame = mel.slice(self.cfg.frames_out() - self.cfg.n_mels, self.cfg.frames_out());
            prev_context = context;
        }

        let n_frames = steps * self.cfg.frames_per_step;
        let mel = FeatureMatrix::new(frames, n_frames, self.cfg.n_mels, FeatureKind::LogMel, 80.0)
            .map_err(|e| NnError::ShapeMismatch { op: "tts.synthesize", detail: e.to_string() })?;
        Ok(SynthesisResult { mel, steps, first_cross, truncated, alignments })
    }
}

/// Stop-token targets per decoder step: zeros followed by the five-value
/// ramp ending at 1.0 on the final step. Fewer than five steps keep the
/// ramp tail so the last step always targets 1.0.
pub fn stop_targets(n_steps: usize) -> Vec<f64> {
    let ramp = [0.2, 0.4, 0.6, 0.8, 1.0];
    if n_steps >= 5 {
        let mut out = vec![0.0; n_steps - 5];
        out.extend(ramp);
        out
    } else {
        ramp[5 - n_steps..].to_vec()
    }
}

/// Combined synthesis loss: L1 on the stacked spectral frames plus binary
/// cross-entropy on the stop trace, unit weights.
pub fn tts_loss<T: Scalar>(
    pred_mels: &Tensor<T>,
    pred_stops: &Tensor<T>,
    target_mels: &Tensor<T>,
    target_stops: &Tensor<T>,
) -> Result<Tensor<T>> {
    let l1 = l1_loss(pred_mels, target_mels)?;
    let bce = bce_loss(pred_stops, target_stops)?;
    l1.add(&bce)
}

/// Group unstacked `[T, n_mels]` frames into `[S, k*n_mels]` rows, repeating
/// the final frame to fill the last group.
pub fn stack_target_frames(mel: &FeatureMatrix, k: usize) -> (Vec<f64>, usize) {
    let t = mel.n_frames();
    let d = mel.feature_dim();
    let steps = t.div_ceil(k);
    let mut out = Vec::with_capacity(steps * k * d);
    for s in 0..steps {
        for i in 0..k {
            let src = (s * k + i).min(t - 1);
            out.extend_from_slice(mel.frame(src));
        }
    }
    (out, steps)
}
