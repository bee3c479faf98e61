//! Recognizer probe on the toy corpus: loss trajectory plus dev WER after
//! a configurable number of passes.

use std::collections::HashMap;
use synthasr_core::asr::{
    beam_search, train_asr, AsrConfig, AsrExample, AsrModel, AsrTrainConfig, AsrVocab, BeamConfig,
};
use synthasr_core::nn::{ParamStore, Sgd, SgdConfig, Tape};
use synthasr_core::text::bpe_learn;
use synthasr_core::tts::AttentionConfig;
use synthasr_pipeline::features::{extract_corpus, normalize_all, stats_over, FeaturePipeline};
use synthasr_pipeline::manifest::ingest;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = &args[1];
    let lr: f64 = args[2].parse().unwrap();
    let epochs: usize = args[3].parse().unwrap();
    let batch: usize = args[4].parse().unwrap();
    let enc_hidden: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(64);
    let merges: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(40);

    let (train, _) = ingest(format!("{dir}/train.jsonl")).unwrap();
    let (dev, _) = ingest(format!("{dir}/dev.jsonl")).unwrap();
    let pipeline = FeaturePipeline::new(&Default::default()).unwrap();
    let tf = extract_corpus(&train, &pipeline, &Default::default(), false).unwrap();
    let df = extract_corpus(&dev, &pipeline, &Default::default(), false).unwrap();
    let ids: Vec<&str> = train.records.iter().map(|r| r.utterance_id.as_str()).collect();
    let stats = stats_over(&tf.mfcc, ids.into_iter()).unwrap();
    let mut train_mfcc = tf.mfcc;
    let mut dev_mfcc = df.mfcc;
    normalize_all(&mut train_mfcc, &stats).unwrap();
    normalize_all(&mut dev_mfcc, &stats).unwrap();

    let mut word_freq: HashMap<String, usize> = HashMap::new();
    for r in &train.records {
        for w in r.transcript.split_whitespace() {
            *word_freq.entry(w.to_string()).or_default() += 1;
        }
    }
    let bpe = bpe_learn(&word_freq, merges).unwrap();
    let vocab = AsrVocab::build(&bpe, word_freq.keys().map(String::as_str));
    println!("vocab {} tokens", vocab.len());

    let mut cfg = AsrConfig::new(vocab.len());
    cfg.enc_hidden = enc_hidden;
    cfg.attention = AttentionConfig {
        dim: 128,
        posenc_dim: 0,
        feedback_filters: 32,
        feedback_width: 31,
        feedback_left_pad: 0.0,
    };
    let mut store: ParamStore<f32> = ParamStore::new();
    let model = AsrModel::new(&mut store, cfg, 2);
    let corpus: Vec<AsrExample> = train
        .records
        .iter()
        .map(|r| AsrExample {
            features: train_mfcc[&r.utterance_id].clone(),
            labels: vocab.encode(&bpe, &r.transcript),
        })
        .collect();
    let mut opt = Sgd::new(SgdConfig {
        learning_rate: lr,
        decay_factor: 0.9,
        decay_every: 400,
        clip_global_norm: Some(5.0),
    });
    let t0 = std::time::Instant::now();
    let cfg_t = AsrTrainConfig { epochs, start_epoch: 0, batch_size: batch, seed: 5, workers: 4 };
    let log = train_asr(&model, &mut store, &mut opt, &corpus, vocab.eos(), &cfg_t).unwrap();
    for (i, l) in log.epoch_losses.iter().enumerate() {
        if i % 5 == 0 || i + 1 == log.epoch_losses.len() {
            println!("  epoch {i}: {l:.4}");
        }
    }

    // Greedy dev WER.
    let beam = BeamConfig { beam_size: 4, max_len: 30, lm_weight: 0.0 };
    let mut errs = 0usize;
    let mut words = 0usize;
    for r in &dev.records {
        let tape: Tape<f32> = Tape::new();
        let feats = &dev_mfcc[&r.utterance_id];
        let f = tape.constant_from_f64(feats.data(), vec![feats.n_frames(), feats.feature_dim()]);
        let tokens = beam_search(&model, &store, &f, vocab.eos(), None, &beam).unwrap();
        let hyp = vocab.decode_words(&tokens);
        let w = synthasr_core::asr::wer_strings(&hyp, &r.transcript);
        errs += w.errors;
        words += w.ref_len;
    }
    println!(
        "lr={lr} epochs={epochs} batch={batch} enc={enc_hidden}: dev WER {:.1}% ({:.0} s)",
        100.0 * errs as f64 / words as f64,
        t0.elapsed().as_secs_f64()
    );
}
