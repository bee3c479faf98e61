//! Teacher-forced training loops for the synthesis network and the
//! mel-to-linear converter.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::FeatureMatrix;
use crate::nn::{l1_loss, Gradients, ParamStore, Result, Scalar, Sgd, Tape};

use super::{stack_target_frames, stop_targets, tts_loss, MelToLinearNet, TtsModel};

/// One training utterance: synthesis input characters and the normalized
/// log-mel target (also the style reference).
#[derive(Debug, Clone)]
pub struct TtsExample {
    pub char_ids: Vec<usize>,
    pub mel_norm: FeatureMatrix,
}

/// Feature pair for the converter, both globally normalized.
#[derive(Debug, Clone)]
pub struct Mel2LinExample {
    pub mel_norm: FeatureMatrix,
    pub linear_norm: FeatureMatrix,
}

#[derive(Debug, Clone)]
pub struct TtsTrainConfig {
    pub epochs: usize,
    /// First epoch index; a resumed run continues the same shuffle stream.
    pub start_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TtsTrainConfig {
    fn default() -> Self {
        Self { epochs: 30, start_epoch: 0, batch_size: 4, seed: 0, workers: 4 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    /// Mean corpus loss under the initial parameters, before any update.
    pub initial_loss: f64,
    /// Mean per-utterance loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

use crate::parallel::parallel_map;

fn tts_eval_corpus<T: Scalar>(
    model: &TtsModel,
    store: &ParamStore<T>,
    corpus: &[TtsExample],
    workers: usize,
) -> Result<f64> {
    let losses = parallel_map(corpus, workers, |ex| -> Result<f64> {
        let tape: Tape<T> = Tape::new();
        let mel = tape.constant_from_f64(
            ex.mel_norm.data(),
            vec![ex.mel_norm.n_frames(), ex.mel_norm.feature_dim()],
        );
        let speaker = model.gst.embed(&tape, store, &mel)?;
        let enc = model.encode(&tape, store, &ex.char_ids, &speaker)?;
        let (stacked, steps) = stack_target_frames(&ex.mel_norm, model.cfg.frames_per_step);
        let targets = tape.constant_from_f64(&stacked, vec![steps, model.cfg.frames_out()]);
        let stop_t = tape.constant_from_f64(&stop_targets(steps), vec![steps]);
        let out = model.forward_teacher(&tape, store, &enc, &targets)?;
        Ok(tts_loss(&out.pred_mels, &out.pred_stops, &targets, &stop_t)?.item().into_f64())
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / corpus.len() as f64)
}

fn tts_utterance_pass<T: Scalar>(
    model: &TtsModel,
    store: &ParamStore<T>,
    ex: &TtsExample,
) -> Result<(f64, Gradients<T>)> {
    let tape: Tape<T> = Tape::new();
    let mel = tape.constant_from_f64(
        ex.mel_norm.data(),
        vec![ex.mel_norm.n_frames(), ex.mel_norm.feature_dim()],
    );
    let speaker = model.gst.embed(&tape, store, &mel)?;
    let enc = model.encode(&tape, store, &ex.char_ids, &speaker)?;

    let (stacked, steps) = stack_target_frames(&ex.mel_norm, model.cfg.frames_per_step);
    let targets = tape.constant_from_f64(&stacked, vec![steps, model.cfg.frames_out()]);
    let stop_t = tape.constant_from_f64(&stop_targets(steps), vec![steps]);

    let out = model.forward_teacher(&tape, store, &enc, &targets)?;
    let loss = tts_loss(&out.pred_mels, &out.pred_stops, &targets, &stop_t)?;
    let grads = tape.backward(&loss)?;
    Ok((loss.item().into_f64(), grads))
}

/// Teacher-forced training; loss is logged per epoch and checkpoints are the
/// caller's concern (the store can be saved after any epoch).
pub fn train_tts<T: Scalar>(
    model: &TtsModel,
    store: &mut ParamStore<T>,
    opt: &mut Sgd,
    corpus: &[TtsExample],
    cfg: &TtsTrainConfig,
) -> Result<TrainLog> {
    if corpus.is_empty() {
        return Err(crate::nn::NnError::ShapeMismatch {
            op: "train_tts",
            detail: "empty corpus".into(),
        });
    }
    let mut log = TrainLog::default();
    log.initial_loss = tts_eval_corpus(model, store, corpus, cfg.workers)?;
    log::info!("tts initial loss {:.5}", log.initial_loss);
    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let examples: Vec<&TtsExample> = batch.iter().map(|&i| &corpus[i]).collect();
            let results = parallel_map(&examples, cfg.workers, |ex| {
                tts_utterance_pass(model, store, ex)
            });
            let mut batch_grads: Option<Gradients<T>> = None;
            let mut n = 0usize;
            for r in results {
                let (loss, grads) = r?;
                epoch_loss += loss;
                match &mut batch_grads {
                    Some(acc) => acc.add_assign(&grads),
                    None => batch_grads = Some(grads),
                }
                n += 1;
            }
            if let Some(mut grads) = batch_grads {
                grads.scale(T::from_f64(1.0 / n as f64));
                opt.step(store, &grads);
            }
        }
        let mean = epoch_loss / corpus.len() as f64;
        log.epoch_losses.push(mean);
        log::info!("tts epoch {epoch}: mean loss {mean:.5}");
    }
    Ok(log)
}

fn m2l_utterance_pass<T: Scalar>(
    net: &MelToLinearNet,
    store: &ParamStore<T>,
    ex: &Mel2LinExample,
) -> Result<(f64, Gradients<T>)> {
    let tape: Tape<T> = Tape::new();
    let mel = tape.constant_from_f64(
        ex.mel_norm.data(),
        vec![ex.mel_norm.n_frames(), ex.mel_norm.feature_dim()],
    );
    let target = tape.constant_from_f64(
        ex.linear_norm.data(),
        vec![ex.linear_norm.n_frames(), ex.linear_norm.feature_dim()],
    );
    let pred = net.forward(&tape, store, &mel)?;
    let loss = l1_loss(&pred, &target)?;
    let grads = tape.backward(&loss)?;
    Ok((loss.item().into_f64(), grads))
}

pub fn train_mel_to_linear<T: Scalar>(
    net: &MelToLinearNet,
    store: &mut ParamStore<T>,
    opt: &mut Sgd,
    corpus: &[Mel2LinExample],
    cfg: &TtsTrainConfig,
) -> Result<TrainLog> {
    if corpus.is_empty() {
        return Err(crate::nn::NnError::ShapeMismatch {
            op: "train_mel_to_linear",
            detail: "empty corpus".into(),
        });
    }
    let mut log = TrainLog::default();
    log.initial_loss = eval_mel_to_linear(net, store, corpus)?;
    log::info!("mel2lin initial loss {:.5}", log.initial_loss);
    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let examples: Vec<&Mel2LinExample> = batch.iter().map(|&i| &corpus[i]).collect();
            let results =
                parallel_map(&examples, cfg.workers, |ex| m2l_utterance_pass(net, store, ex));
            let mut batch_grads: Option<Gradients<T>> = None;
            let mut n = 0usize;
            for r in results {
                let (loss, grads) = r?;
                epoch_loss += loss;
                match &mut batch_grads {
                    Some(acc) => acc.add_assign(&grads),
                    None => batch_grads = Some(grads),
                }
                n += 1;
            }
            if let Some(mut grads) = batch_grads {
                grads.scale(T::from_f64(1.0 / n as f64));
                opt.step(store, &grads);
            }
        }
        let mean = epoch_loss / corpus.len() as f64;
        log.epoch_losses.push(mean);
        log::info!("mel2lin epoch {epoch}: mean loss {mean:.5}");
    }
    Ok(log)
}

/// Mean L1 of the converter on held-out pairs (normalized domain).
pub fn eval_mel_to_linear<T: Scalar>(
    net: &MelToLinearNet,
    store: &ParamStore<T>,
    corpus: &[Mel2LinExample],
) -> Result<f64> {
    let mut total = 0.0;
    for ex in corpus {
        let tape: Tape<T> = Tape::new();
        let mel = tape.constant_from_f64(
            ex.mel_norm.data(),
            vec![ex.mel_norm.n_frames(), ex.mel_norm.feature_dim()],
        );
        let target = tape.constant_from_f64(
            ex.linear_norm.data(),
            vec![ex.linear_norm.n_frames(), ex.linear_norm.feature_dim()],
        );
        let pred = net.forward(&tape, store, &mel)?;
        total += l1_loss(&pred, &target)?.item().into_f64();
    }
    Ok(total / corpus.len() as f64)
}
