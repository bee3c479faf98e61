//! Hyperparameter probe for the toy-corpus TTS training loss trajectory.

use std::collections::HashMap;
use synthasr_core::nn::{ParamStore, Sgd, SgdConfig};
use synthasr_core::text::CharVocab;
use synthasr_core::tts::{train_tts, TtsConfig, TtsExample, TtsModel, TtsTrainConfig};
use synthasr_pipeline::features::{extract_corpus, normalize_all, stats_over, FeaturePipeline};
use synthasr_pipeline::manifest::ingest;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let manifest = &args[1];
    let lr: f64 = args[2].parse().unwrap();
    let batch: usize = args[3].parse().unwrap();
    let epochs: usize = args[4].parse().unwrap();
    let decay: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let dec_hidden: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(256);

    let (train, _) = ingest(manifest).unwrap();
    let pipeline = FeaturePipeline::new(&Default::default()).unwrap();
    let feats = extract_corpus(&train, &pipeline, &Default::default(), true).unwrap();
    let ids: Vec<&str> = train.records.iter().map(|r| r.utterance_id.as_str()).collect();
    let mel_stats = stats_over(&feats.mel, ids.into_iter()).unwrap();
    let mut mel: HashMap<String, _> = feats.mel;
    normalize_all(&mut mel, &mel_stats).unwrap();

    let char_vocab = CharVocab::new();
    let mut tts_cfg = TtsConfig::new(char_vocab.len());
    tts_cfg.dec_hidden = dec_hidden;
    let mut store: ParamStore<f32> = ParamStore::new();
    let model = TtsModel::new(&mut store, tts_cfg, 1);
    let examples: Vec<TtsExample> = train
        .records
        .iter()
        .map(|r| TtsExample {
            char_ids: char_vocab.encode(&char_vocab.normalize_text(&r.transcript)),
            mel_norm: mel[&r.utterance_id].clone(),
        })
        .collect();
    let mut opt = Sgd::new(SgdConfig {
        learning_rate: lr,
        decay_factor: decay,
        decay_every: 200,
        clip_global_norm: Some(5.0),
    });
    let cfg = TtsTrainConfig { epochs, start_epoch: 0, batch_size: batch, seed: 1, workers: 4 };
    let t0 = std::time::Instant::now();
    let log = train_tts(&model, &mut store, &mut opt, &examples, &cfg).unwrap();
    let last = log.epoch_losses.last().unwrap();
    println!(
        "lr={lr} batch={batch} epochs={epochs} decay={decay} dec={dec_hidden}: initial {:.4} last {last:.4} ratio {:.3} ({:.0} s)",
        log.initial_loss,
        last / log.initial_loss,
        t0.elapsed().as_secs_f64()
    );
    for (i, l) in log.epoch_losses.iter().enumerate() {
        if i % 5 == 0 || i + 1 == log.epoch_losses.len() {
            println!("  epoch {i}: {l:.4}");
        }
    }
}
