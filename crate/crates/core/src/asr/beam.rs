//! Beam search over BPE tokens with log-linear fusion of an external
//! sequence scorer: hypothesis score = asr_log_p + lm_weight * lm_log_p.

use crate::nn::{NnError, ParamStore, Result, Scalar, Tensor};
use crate::tts::AttentionPrepared;

use super::lm::LmScorer;
use super::{AsrModel, DecoderState};

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_len: usize,
    pub lm_weight: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_size: 8, max_len: 200, lm_weight: 0.0 }
    }
}

struct Hypothesis<T: Scalar> {
    tokens: Vec<usize>,
    asr_score: f64,
    lm_score: f64,
    state: Option<DecoderState<T>>,
    prev_token: usize,
    finished: bool,
}

impl<T: Scalar> Hypothesis<T> {
    fn fused(&self, lm_weight: f64) -> f64 {
        self.asr_score + lm_weight * self.lm_score
    }
}

/// No length normalization: finished hypotheses compete by raw fused score.
/// Ties break deterministically toward the lexicographically smaller token
/// sequence.
pub fn beam_search<T: Scalar>(
    model: &AsrModel,
    store: &ParamStore<T>,
    features: &Tensor<T>,
    eos: usize,
    lm: Option<&dyn LmScorer>,
    cfg: &BeamConfig,
) -> Result<Vec<usize>> {
    if cfg.beam_size < 1 {
        return Err(NnError::ShapeMismatch { op: "beam_search", detail: "beam_size < 1".into() });
    }
    let tape = features.tape().clone();
    let enc = model.encode(&tape, store, features)?;
    let prep: AttentionPrepared<T> = model.attention.prepare(&tape, store, &enc)?;
    // The LM is consulted only when its weight is live, so a zero-weight
    // fusion is bitwise identical to decoding without an LM.
    let use_lm = lm.is_some() && cfg.lm_weight != 0.0;

    let mut beam: Vec<Hypothesis<T>> = vec![Hypothesis {
        tokens: Vec::new(),
        asr_score: 0.0,
        lm_score: 0.0,
        state: Some(model.zero_decoder_state(&tape, enc.shape()[0])),
        prev_token: eos,
        finished: false,
    }];

    for _ in 0..cfg.max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates: Vec<Hypothesis<T>> = Vec::new();
        for hyp in beam {
            if hyp.finished {
                candidates.push(hyp);
                continue;
            }
            let state = hyp.state.as_ref().expect("live hypothesis has state");
            let (logits, next_state) =
                model.decoder_step(&tape, store, &prep, hyp.prev_token, state)?;
            let log_probs = logits.log_softmax_rows();
            let lm_row = if use_lm {
                lm.map(|l| l.next_log_probs(&hyp.tokens))
            } else {
                None
            };
            for (tok, &lp) in log_probs.values().iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                let finished = tok == eos;
                if !finished {
                    tokens.push(tok);
                }
                candidates.push(Hypothesis {
                    tokens,
                    asr_score: hyp.asr_score + lp.into_f64(),
                    lm_score: hyp.lm_score + lm_row.as_ref().map_or(0.0, |r| r[tok]),
                    state: (!finished).then(|| next_state.clone()),
                    prev_token: tok,
                    finished,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.fused(cfg.lm_weight)
                .partial_cmp(&a.fused(cfg.lm_weight))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(cfg.beam_size);
        beam = candidates;
    }

    let best = beam
        .into_iter()
        .max_by(|a, b| {
            a.fused(cfg.lm_weight)
                .partial_cmp(&b.fused(cfg.lm_weight))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| b.tokens.cmp(&a.tokens))
        })
        .expect("beam never empty");
    Ok(best.tokens)
}
