//! The full experiment: featurize, train the synthesis stack, generate
//! synthetic audio, train the recognizer in two phases (real-only, then a
//! real/synthetic mix with a learning-rate reset), decode with an LM-weight
//! sweep selected on dev, and emit the result table.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use synthasr_core::asr::{
    asr_utterance_loss, beam_search, AsrConfig, AsrExample, AsrModel, AsrVocab, BeamConfig,
    LmScorer, NgramLm,
};
use synthasr_core::augment::{spec_augment, SpecAugmentParams};
use synthasr_core::dsp::{write_norm_stats, FeatureMatrix};
use synthasr_core::nn::{Gradients, ParamStore, Sgd, SgdConfig};
use synthasr_core::text::{bpe_learn, CharVocab};
use synthasr_core::tts::{
    train_mel_to_linear, train_tts, AttentionConfig, Mel2LinExample, MelToLinearConfig,
    MelToLinearNet, TrainLog, TtsConfig, TtsExample, TtsModel, TtsTrainConfig,
};

use crate::config::ExperimentConfig;
use crate::features::{extract_corpus, normalize_all, stats_over, FeaturePipeline};
use crate::manifest::{ingest, CorpusManifest};
use crate::mix::{build_training_mix, MixPolicy, TrainingMix};
use crate::report::{ConditionResult, Report, SweepPoint};
use crate::synth::{generate_synthetic, SpeakerPolicy, SynthesisJob};
use crate::{PipelineError, Result};

pub struct ExperimentOutput {
    pub report: Report,
    pub tts_log: TrainLog,
    pub mel2lin_log: TrainLog,
    pub phase1: PhaseLog,
    /// One log per configured condition.
    pub phase2: Vec<PhaseLog>,
    pub synthetic_manifest: CorpusManifest,
    pub out_dir: PathBuf,
}

/// Loss trajectory of one training phase.
#[derive(Debug, Clone)]
pub struct PhaseLog {
    /// Mean loss over the first checkpoint plan before any update.
    pub initial_loss: f64,
    pub checkpoint_losses: Vec<f64>,
}

fn mix_seed(base: u64, tag: u64) -> u64 {
    base ^ tag.wrapping_mul(0x9e3779b97f4a7c15)
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let workers = cfg.workers();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Stage(e.to_string()))?;
    pool.install(|| run_inner(cfg, &out_dir, workers))
}

fn run_inner(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<ExperimentOutput> {
    // --- ingest ---
    let (train, train_report) = ingest(&cfg.corpora.train)?;
    let (dev, _) = ingest(&cfg.corpora.dev)?;
    let (test, _) = ingest(&cfg.corpora.test)?;
    log::info!(
        "ingested {} train ({} rejected), {} dev, {} test utterances",
        train.len(),
        train_report.rejected.len(),
        dev.len(),
        test.len()
    );
    let synthesis_lines: Vec<String> = std::fs::read_to_string(&cfg.corpora.synthesis_text)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if synthesis_lines.is_empty() {
        return Err(PipelineError::Config("synthesis text file is empty".into()));
    }

    // --- featurize ---
    let pipeline = FeaturePipeline::new(&cfg.dsp)?;
    let train_feats = extract_corpus(&train, &pipeline, &cfg.augment, true)?;
    let dev_feats = extract_corpus(&dev, &pipeline, &cfg.augment, false)?;
    let test_feats = extract_corpus(&test, &pipeline, &cfg.augment, false)?;

    let train_ids: Vec<&str> = train.records.iter().map(|r| r.utterance_id.as_str()).collect();
    let mfcc_stats = stats_over(&train_feats.mfcc, train_ids.iter().copied())?;
    let mel_stats = stats_over(&train_feats.mel, train_ids.iter().copied())?;
    let lin_stats = stats_over(&train_feats.linear, train_ids.iter().copied())?;
    write_norm_stats(out_dir.join("mfcc_stats.nrm"), &mfcc_stats)?;
    write_norm_stats(out_dir.join("mel_stats.nrm"), &mel_stats)?;
    write_norm_stats(out_dir.join("linear_stats.nrm"), &lin_stats)?;

    let mut train_mfcc = train_feats.mfcc;
    let mut train_mel = train_feats.mel;
    let mut train_lin = train_feats.linear;
    normalize_all(&mut train_mfcc, &mfcc_stats)?;
    normalize_all(&mut train_mel, &mel_stats)?;
    normalize_all(&mut train_lin, &lin_stats)?;
    let mut dev_mfcc = dev_feats.mfcc;
    let mut test_mfcc = test_feats.mfcc;
    normalize_all(&mut dev_mfcc, &mfcc_stats)?;
    normalize_all(&mut test_mfcc, &mfcc_stats)?;

    // --- text frontends ---
    let char_vocab = CharVocab::new();
    let mut word_freq: HashMap<String, usize> = HashMap::new();
    for r in &train.records {
        for w in r.transcript.to_lowercase().split_whitespace() {
            *word_freq.entry(w.to_string()).or_default() += 1;
        }
    }
    let bpe = bpe_learn(&word_freq, cfg.asr.bpe_merges)?;
    bpe.save(out_dir.join("bpe.merges"))?;
    let vocab_words: Vec<String> = {
        let mut words: Vec<String> = word_freq.keys().cloned().collect();
        for line in &synthesis_lines {
            for w in line.to_lowercase().split_whitespace() {
                words.push(w.to_string());
            }
        }
        words.sort();
        words.dedup();
        words
    };
    let vocab = AsrVocab::build(&bpe, vocab_words.iter().map(String::as_str));
    vocab.save(out_dir.join("vocab.txt"))?;
    log::info!("bpe: {} merges, vocabulary of {} tokens", bpe.n_merges(), vocab.len());

    // --- synthesis stack ---
    let mut tts_cfg = TtsConfig::new(char_vocab.len());
    tts_cfg.dec_hidden = cfg.tts.dec_hidden;
    tts_cfg.n_mels = cfg.dsp.n_mels;
    tts_cfg.gst.n_mels = cfg.dsp.n_mels;
    tts_cfg.gst.conv_channels = cfg.tts.gst_conv_channels;
    let mut tts_store: ParamStore<f32> = ParamStore::new();
    let tts_model = TtsModel::new(&mut tts_store, tts_cfg, cfg.tts.seed);

    let tts_examples: Vec<TtsExample> = train
        .records
        .iter()
        .map(|r| TtsExample {
            char_ids: char_vocab.encode(&char_vocab.normalize_text(&r.transcript)),
            mel_norm: train_mel[&r.utterance_id].clone(),
        })
        .collect();
    let mut tts_opt = Sgd::new(SgdConfig {
        learning_rate: cfg.tts.learning_rate,
        decay_factor: 0.9,
        decay_every: 200,
        clip_global_norm: Some(5.0),
    });
    let tts_train_cfg = TtsTrainConfig {
        epochs: cfg.tts.epochs,
        start_epoch: 0,
        batch_size: cfg.tts.batch_size,
        seed: cfg.tts.seed,
        workers,
    };
    log::info!("training synthesis network ({} epochs)", cfg.tts.epochs);
    let tts_log = train_tts(&tts_model, &mut tts_store, &mut tts_opt, &tts_examples, &tts_train_cfg)?;
    tts_store.save(out_dir.join("tts.ckpt"))?;

    let m2l_cfg = MelToLinearConfig {
        n_mels: cfg.dsp.n_mels,
        n_linear: pipeline.stft.fft_size / 2,
        blstm_hidden: cfg.mel2lin.blstm_hidden,
    };
    let mut m2l_store: ParamStore<f32> = ParamStore::new();
    let m2l = MelToLinearNet::new(&mut m2l_store, m2l_cfg, cfg.mel2lin.seed);
    let m2l_examples: Vec<Mel2LinExample> = train
        .records
        .iter()
        .map(|r| Mel2LinExample {
            mel_norm: train_mel[&r.utterance_id].clone(),
            linear_norm: train_lin[&r.utterance_id].clone(),
        })
        .collect();
    let mut m2l_opt = Sgd::new(SgdConfig {
        learning_rate: cfg.mel2lin.learning_rate,
        decay_factor: 0.9,
        decay_every: 200,
        clip_global_norm: Some(5.0),
    });
    let m2l_train_cfg = TtsTrainConfig {
        epochs: cfg.mel2lin.epochs,
        start_epoch: 0,
        batch_size: cfg.mel2lin.batch_size,
        seed: cfg.mel2lin.seed,
        workers,
    };
    log::info!("training mel-to-linear converter ({} epochs)", cfg.mel2lin.epochs);
    let mel2lin_log =
        train_mel_to_linear(&m2l, &mut m2l_store, &mut m2l_opt, &m2l_examples, &m2l_train_cfg)?;
    m2l_store.save(out_dir.join("mel2lin.ckpt"))?;

    // --- synthetic data ---
    let donors: Vec<(String, FeatureMatrix)> = train
        .records
        .iter()
        .map(|r| (r.speaker_id.clone(), train_mel[&r.utterance_id].clone()))
        .collect();
    let job = SynthesisJob {
        tts: &tts_model,
        tts_store: &tts_store,
        mel2lin: &m2l,
        mel2lin_store: &m2l_store,
        linear_stats: &lin_stats,
        char_vocab: &char_vocab,
        stft: &pipeline.stft,
        sample_rate: cfg.dsp.sample_rate,
        max_steps: cfg.tts.max_synth_steps,
        seed: mix_seed(cfg.run.seed, 1),
    };
    log::info!("synthesizing {} utterances", synthesis_lines.len());
    let synthetic = generate_synthetic(
        &job,
        &synthesis_lines,
        &SpeakerPolicy::RoundRobinDonors(&donors),
        &out_dir.join("syn"),
    )?;
    synthetic.save(out_dir.join("syn.jsonl"))?;

    let syn_feats = extract_corpus(&synthetic, &pipeline, &cfg.augment, false)?;
    let mut syn_mfcc = syn_feats.mfcc;
    normalize_all(&mut syn_mfcc, &mfcc_stats)?;

    // --- language model on the synthesis text ---
    let lm_sequences: Vec<Vec<usize>> = synthesis_lines
        .iter()
        .map(|l| {
            let mut ids = vocab.encode(&bpe, &l.to_lowercase());
            ids.push(vocab.eos());
            ids
        })
        .collect();
    let lm = NgramLm::train(&lm_sequences, vocab.len(), cfg.lm.order, cfg.lm.alpha);
    lm.save(out_dir.join("lm.txt"))?;

    // --- recognizer examples ---
    let make_examples = |manifest: &CorpusManifest,
                         feats: &HashMap<String, FeatureMatrix>|
     -> HashMap<String, AsrExample> {
        manifest
            .records
            .iter()
            .map(|r| {
                (
                    r.utterance_id.clone(),
                    AsrExample {
                        features: feats[&r.utterance_id].clone(),
                        labels: vocab.encode(&bpe, &r.transcript.to_lowercase()),
                    },
                )
            })
            .collect()
    };
    let train_examples = make_examples(&train, &train_mfcc);
    let syn_examples = make_examples(&synthetic, &syn_mfcc);

    let mut asr_cfg = AsrConfig::new(vocab.len());
    asr_cfg.input_dim = cfg.dsp.n_mfcc;
    asr_cfg.enc_hidden = cfg.asr.enc_hidden;
    asr_cfg.dec_hidden = cfg.asr.dec_hidden;
    asr_cfg.ctc_weight = cfg.asr.ctc_weight;
    asr_cfg.attention = AttentionConfig {
        dim: cfg.asr.attention_dim,
        posenc_dim: 0,
        feedback_filters: 32,
        feedback_width: 31,
        feedback_left_pad: 0.0,
    };
    let mut asr_store: ParamStore<f32> = ParamStore::new();
    let asr_model = AsrModel::new(&mut asr_store, asr_cfg.clone(), cfg.asr.seed);
    let sgd_cfg = SgdConfig {
        learning_rate: cfg.asr.learning_rate,
        decay_factor: cfg.asr.lr_decay_factor,
        decay_every: cfg.asr.lr_decay_every,
        clip_global_norm: Some(5.0),
    };

    // --- phase 1: real data only ---
    let budget = train.total_hours() * cfg.schedule.phase1_epochs
        / cfg.schedule.phase1_checkpoints as f64;
    let phase1_policy =
        MixPolicy { real_parts: 1, synthetic_parts: 0, checkpoint_budget_hours: budget };
    let phase1_mix = build_training_mix(
        &train,
        &CorpusManifest::default(),
        &phase1_policy,
        cfg.schedule.phase1_checkpoints,
        mix_seed(cfg.run.seed, 2),
    )?;
    phase1_mix.save(out_dir.join("phase1_mix.json"))?;

    let mut opt = Sgd::new(sgd_cfg.clone());
    log::info!("asr phase 1: {} checkpoints, {budget:.4} h each", cfg.schedule.phase1_checkpoints);
    let phase1 = train_phase(
        &asr_model,
        &mut asr_store,
        &mut opt,
        &train_examples,
        &phase1_mix,
        false,
        mix_seed(cfg.run.seed, 3),
        cfg.asr.batch_size,
        workers,
        vocab.eos(),
    )?;
    let phase1_ckpt = out_dir.join("asr_phase1.ckpt");
    asr_store.save(&phase1_ckpt)?;

    // --- phase 2 per condition ---
    let beam_cfg = BeamConfig {
        beam_size: cfg.asr.beam_size,
        max_len: cfg.asr.max_decode_len,
        lm_weight: 0.0,
    };
    let dev_refs: Vec<(String, FeatureMatrix)> = dev
        .records
        .iter()
        .map(|r| (r.transcript.to_lowercase(), dev_mfcc[&r.utterance_id].clone()))
        .collect();
    let test_refs: Vec<(String, FeatureMatrix)> = test
        .records
        .iter()
        .map(|r| (r.transcript.to_lowercase(), test_mfcc[&r.utterance_id].clone()))
        .collect();

    let mut report = Report::default();
    let mut phase2_losses = Vec::new();
    for (ci, condition) in cfg.run.conditions.iter().enumerate() {
        log::info!(
            "condition {ci}: spec_augment={} synthetic={} lm={}",
            condition.spec_augment,
            condition.synthetic,
            condition.lm
        );
        let mut store: ParamStore<f32> = ParamStore::new();
        let model = AsrModel::new(&mut store, asr_cfg.clone(), cfg.asr.seed);
        store.load(&phase1_ckpt)?;
        let mut opt = Sgd::new(sgd_cfg.clone());
        if !cfg.schedule.lr_reset {
            // Continue the schedule where phase 1 left it.
            for _ in 0..phase1.checkpoint_losses.len() {
                opt.step(&mut store, &Gradients::empty());
            }
        }

        let (real_parts, synthetic_parts) = if condition.synthetic {
            (cfg.mix.real_parts, cfg.mix.synthetic_parts)
        } else {
            (1, 0)
        };
        let policy = MixPolicy { real_parts, synthetic_parts, checkpoint_budget_hours: budget };
        let mix = build_training_mix(
            &train,
            &synthetic,
            &policy,
            cfg.schedule.phase2_checkpoints,
            mix_seed(cfg.run.seed, 100 + ci as u64),
        )?;
        mix.save(out_dir.join(format!("phase2_mix_{ci}.json")))?;

        let mut examples = train_examples.clone();
        if condition.synthetic {
            examples.extend(syn_examples.clone().into_iter());
        }
        let phase_log = train_phase(
            &model,
            &mut store,
            &mut opt,
            &examples,
            &mix,
            condition.spec_augment,
            mix_seed(cfg.run.seed, 200 + ci as u64),
            cfg.asr.batch_size,
            workers,
            vocab.eos(),
        )?;
        store.save(out_dir.join(format!("asr_cond{ci}.ckpt")))?;
        phase2_losses.push(phase_log);

        // --- decode: sweep on dev, select, score test ---
        let sweep: Vec<f64> = if condition.lm { cfg.lm.sweep.clone() } else { vec![0.0] };
        let mut dev_sweep = Vec::new();
        for &weight in &sweep {
            let lm_opt: Option<&dyn LmScorer> =
                if condition.lm && weight != 0.0 { Some(&lm) } else { None };
            let wer = decode_wer(&model, &store, &vocab, &dev_refs, lm_opt, weight, &beam_cfg)?;
            log::info!("condition {ci}: dev WER {:.2}% at lambda {weight}", 100.0 * wer);
            dev_sweep.push(SweepPoint { lm_weight: weight, dev_wer: wer });
        }
        let best = dev_sweep
            .iter()
            .min_by(|a, b| a.dev_wer.partial_cmp(&b.dev_wer).unwrap())
            .expect("sweep not empty")
            .clone();
        let lm_opt: Option<&dyn LmScorer> =
            if condition.lm && best.lm_weight != 0.0 { Some(&lm) } else { None };
        let test_wer =
            decode_wer(&model, &store, &vocab, &test_refs, lm_opt, best.lm_weight, &beam_cfg)?;
        log::info!("condition {ci}: test WER {:.2}% at lambda {}", 100.0 * test_wer, best.lm_weight);

        report.conditions.push(ConditionResult {
            spec_augment: condition.spec_augment,
            synthetic_data: condition.synthetic,
            lm: condition.lm,
            lm_weight: best.lm_weight,
            dev_wer: best.dev_wer,
            test_wer,
            dev_sweep,
        });
        // Keep the partial report on disk after every condition.
        report.save(out_dir)?;
    }

    report.save(out_dir)?;
    Ok(ExperimentOutput {
        report,
        tts_log,
        mel2lin_log,
        phase1,
        phase2: phase2_losses,
        synthetic_manifest: synthetic,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Run the per-checkpoint plans of one phase, optionally masking features.
/// The initial loss is measured on the first checkpoint plan before any
/// parameter update.
#[allow(clippy::too_many_arguments)]
fn train_phase(
    model: &AsrModel,
    store: &mut ParamStore<f32>,
    opt: &mut Sgd,
    examples: &HashMap<String, AsrExample>,
    mix: &TrainingMix,
    use_spec_augment: bool,
    seed: u64,
    batch_size: usize,
    workers: usize,
    eos: usize,
) -> Result<PhaseLog> {
    let sa_params = SpecAugmentParams::default();

    let initial_loss = {
        let plan = &mix.checkpoints[0];
        let prepared: Vec<AsrExample> = plan
            .utterances
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let ex = examples
                    .get(id)
                    .ok_or_else(|| PipelineError::Stage(format!("no features for {id}")))?;
                if use_spec_augment {
                    let mask_seed = mix_seed(seed, (k * 64) as u64);
                    let (masked, _) = spec_augment(&ex.features, &sa_params, mask_seed)?;
                    Ok(AsrExample { features: masked, labels: ex.labels.clone() })
                } else {
                    Ok(ex.clone())
                }
            })
            .collect::<Result<_>>()?;
        let results: Vec<_> =
            prepared.par_iter().map(|ex| asr_utterance_loss(model, store, ex, eos)).collect();
        let mut total = 0.0;
        let mut counted = 0usize;
        for r in results {
            match r {
                Ok((loss, _)) => {
                    total += loss;
                    counted += 1;
                }
                Err(synthasr_core::nn::NnError::CtcInfeasible { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        total / counted.max(1) as f64
    };
    log::info!("phase initial loss {initial_loss:.4}");

    let mut losses = Vec::with_capacity(mix.checkpoints.len());
    for (c, plan) in mix.checkpoints.iter().enumerate() {
        let mut total = 0.0;
        let mut counted = 0usize;
        for (b, batch) in plan.utterances.chunks(batch_size.max(1)).enumerate() {
            let prepared: Vec<AsrExample> = batch
                .iter()
                .enumerate()
                .map(|(k, id)| {
                    let ex = examples
                        .get(id)
                        .ok_or_else(|| PipelineError::Stage(format!("no features for {id}")))?;
                    if use_spec_augment {
                        let mask_seed = mix_seed(seed, ((c * 1_000_003 + b) * 64 + k) as u64);
                        let (masked, _) = spec_augment(&ex.features, &sa_params, mask_seed)?;
                        Ok(AsrExample { features: masked, labels: ex.labels.clone() })
                    } else {
                        Ok(ex.clone())
                    }
                })
                .collect::<Result<_>>()?;

            let results: Vec<_> = if workers > 1 && prepared.len() > 1 {
                prepared.par_iter().map(|ex| asr_utterance_loss(model, store, ex, eos)).collect()
            } else {
                prepared.iter().map(|ex| asr_utterance_loss(model, store, ex, eos)).collect()
            };
            let mut grads: Option<Gradients<f32>> = None;
            let mut n = 0usize;
            for r in results {
                match r {
                    Ok((loss, g)) => {
                        total += loss;
                        counted += 1;
                        n += 1;
                        match &mut grads {
                            Some(acc) => acc.add_assign(&g),
                            None => grads = Some(g),
                        }
                    }
                    Err(synthasr_core::nn::NnError::CtcInfeasible { .. }) => {
                        log::warn!("skipping ctc-infeasible utterance in checkpoint {c}");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if let Some(mut g) = grads {
                g.scale(1.0 / n as f32);
                opt.step(store, &g);
            }
        }
        let mean = total / counted.max(1) as f64;
        log::info!("checkpoint {c}: mean loss {mean:.4} over {counted} utterances");
        losses.push(mean);
    }
    Ok(PhaseLog { initial_loss, checkpoint_losses: losses })
}

/// Corpus-level WER: total errors over total reference words.
pub fn decode_wer(
    model: &AsrModel,
    store: &ParamStore<f32>,
    vocab: &AsrVocab,
    refs: &[(String, FeatureMatrix)],
    lm: Option<&dyn LmScorer>,
    lm_weight: f64,
    beam: &BeamConfig,
) -> Result<f64> {
    let cfg = BeamConfig { lm_weight, ..beam.clone() };
    let results: Vec<Result<(usize, usize)>> = refs
        .par_iter()
        .map(|(transcript, feats)| {
            let tape = synthasr_core::nn::Tape::<f32>::new();
            let f = tape.constant_from_f64(
                feats.data(),
                vec![feats.n_frames(), feats.feature_dim()],
            );
            let tokens = beam_search(model, store, &f, vocab.eos(), lm, &cfg)?;
            let hyp = vocab.decode_words(&tokens);
            let r = synthasr_core::asr::wer_strings(&hyp, transcript);
            Ok((r.errors, r.ref_len.max(1)))
        })
        .collect();
    let mut errors = 0usize;
    let mut words = 0usize;
    for r in results {
        let (e, w) = r?;
        errors += e;
        words += w;
    }
    Ok(errors as f64 / words.max(1) as f64)
}
