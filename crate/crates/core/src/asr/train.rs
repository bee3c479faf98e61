//! Batched teacher-forced training for the recognizer. Utterances whose
//! labels cannot fit the pooled encoder length are skipped with a warning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::FeatureMatrix;
use crate::nn::{Gradients, NnError, ParamStore, Result, Scalar, Sgd, Tape};

use super::{asr_loss, AsrModel};

/// One training utterance: normalized MFCC features and BPE label ids.
#[derive(Debug, Clone)]
pub struct AsrExample {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct AsrTrainConfig {
    pub epochs: usize,
    pub start_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for AsrTrainConfig {
    fn default() -> Self {
        Self { epochs: 20, start_epoch: 0, batch_size: 4, seed: 0, workers: 4 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AsrTrainLog {
    pub epoch_losses: Vec<f64>,
    pub skipped_utterances: usize,
}

/// Loss and gradients for one utterance.
pub fn asr_utterance_loss<T: Scalar>(
    model: &AsrModel,
    store: &ParamStore<T>,
    ex: &AsrExample,
    eos: usize,
) -> Result<(f64, Gradients<T>)> {
    let tape: Tape<T> = Tape::new();
    let feats = tape.constant_from_f64(
        ex.features.data(),
        vec![ex.features.n_frames(), ex.features.feature_dim()],
    );
    let loss = asr_loss(model, &tape, store, &feats, &ex.labels, eos)?;
    let grads = tape.backward(&loss)?;
    Ok((loss.item().into_f64(), grads))
}

pub fn train_asr<T: Scalar>(
    model: &AsrModel,
    store: &mut ParamStore<T>,
    opt: &mut Sgd,
    corpus: &[AsrExample],
    eos: usize,
    cfg: &AsrTrainConfig,
) -> Result<AsrTrainLog> {
    if corpus.is_empty() {
        return Err(NnError::ShapeMismatch { op: "train_asr", detail: "empty corpus".into() });
    }
    let mut log = AsrTrainLog::default();
    for epoch in cfg.start_epoch..cfg.start_epoch + cfg.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e3779b97f4a7c15));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut counted = 0usize;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let examples: Vec<&AsrExample> = batch.iter().map(|&i| &corpus[i]).collect();
            let results = crate::parallel::parallel_map(&examples, cfg.workers, |ex| {
                asr_utterance_loss(model, store, ex, eos)
            });
            let mut batch_grads: Option<Gradients<T>> = None;
            let mut n = 0usize;
            for r in results {
                match r {
                    Ok((loss, grads)) => {
                        epoch_loss += loss;
                        counted += 1;
                        match &mut batch_grads {
                            Some(acc) => acc.add_assign(&grads),
                            None => batch_grads = Some(grads),
                        }
                        n += 1;
                    }
                    Err(NnError::CtcInfeasible { frames, labels, min_frames }) => {
                        log::warn!(
                            "skipping utterance: {frames} encoder frames < {min_frames} needed for {labels} labels"
                        );
                        log.skipped_utterances += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            if let Some(mut grads) = batch_grads {
                grads.scale(T::from_f64(1.0 / n as f64));
                opt.step(store, &grads);
            }
        }
        let mean = epoch_loss / counted.max(1) as f64;
        log.epoch_losses.push(mean);
        log::info!("asr epoch {epoch}: mean loss {mean:.5}");
    }
    Ok(log)
}
