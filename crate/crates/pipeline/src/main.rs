//! Command-line entry point for the synthesis/recognition pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synthasr_core::asr::{AsrVocab, NgramLm};
use synthasr_core::dsp::{read_norm_stats, read_wav};
use synthasr_core::nn::ParamStore;
use synthasr_core::text::CharVocab;
use synthasr_core::tts::{MelToLinearConfig, MelToLinearNet, TtsConfig, TtsModel};

use synthasr_pipeline::config::ExperimentConfig;
use synthasr_pipeline::experiment::run_experiment;
use synthasr_pipeline::features::{featurize_to_dir, FeaturePipeline};
use synthasr_pipeline::manifest::{ingest, CorpusManifest, UtteranceRecord};
use synthasr_pipeline::mix::{build_training_mix, MixPolicy};
use synthasr_pipeline::report::Report;
use synthasr_pipeline::synth::{generate_synthetic, SpeakerPolicy, SynthesisJob};
use synthasr_pipeline::toy::{generate_toy_corpus, ToyCorpusSpec};
use synthasr_pipeline::{PipelineError, Result};

#[derive(Parser)]
#[command(name = "synthasr", about = "TTS-augmented speech recognition experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for every utterance of a manifest.
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = ["mfcc", "logmel", "linear"])]
        kind: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Normalize with previously estimated statistics.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Waveform- and feature-level augmentation of a corpus.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated speed factors, e.g. 0.9,0.95,1.05,1.1.
        #[arg(long, value_delimiter = ',')]
        speed: Vec<f64>,
        /// Cut long quiet spans from each file.
        #[arg(long)]
        remove_silence: bool,
        #[arg(long, default_value_t = -40.0)]
        silence_threshold: f64,
        /// Write a masked copy of the features instead of audio.
        #[arg(long)]
        spec_augment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the synthesis network (and nothing else).
    TrainTts {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the mel-to-linear converter (and nothing else).
    TrainMel2lin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Synthesize waveforms for a file of text lines.
    Synthesize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mel2lin: PathBuf,
        #[arg(long)]
        linear_stats: PathBuf,
        #[arg(long)]
        mel_stats: PathBuf,
        #[arg(long)]
        text_file: PathBuf,
        /// Style reference audio (repeated for every line).
        #[arg(long, conflicts_with = "speaker_vec")]
        speaker_ref: Option<PathBuf>,
        /// File with one whitespace-separated 128-dim vector per line.
        #[arg(long)]
        speaker_vec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_steps: usize,
        #[arg(long, default_value_t = 256)]
        dec_hidden: usize,
    },
    /// Build per-checkpoint sampling plans from two manifests.
    Mix {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Ratio as REAL:SYNTH, e.g. 3:2.
        #[arg(long, default_value = "3:2")]
        ratio: String,
        #[arg(long)]
        budget_hours: f64,
        #[arg(long, default_value_t = 1)]
        checkpoints: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the recognizer end to end per the configured schedule.
    TrainAsr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Decode a manifest with a trained recognizer.
    Decode {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        mfcc_stats: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        lm_weight: f64,
    },
    /// Re-render report files from a stored report.json.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the full experiment: all stages, all conditions.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate the self-contained toy corpus and a matching config.
    MakeToy {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 60)]
        utterances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Featurize { manifest, kind, out_dir, stats } => {
            let (m, _) = ingest(&manifest)?;
            let pipeline = FeaturePipeline::new(&Default::default())?;
            let stats = stats.map(read_norm_stats).transpose()?;
            let paths = featurize_to_dir(&m, &pipeline, &kind, &out_dir, stats.as_ref())?;
            println!("wrote {} feature files to {}", paths.len(), out_dir.display());
            Ok(())
        }
        Command::Augment {
            manifest,
            out_dir,
            speed,
            remove_silence,
            silence_threshold,
            spec_augment,
            seed,
        } => cmd_augment(manifest, out_dir, speed, remove_silence, silence_threshold, spec_augment, seed),
        Command::TrainTts { config, out_dir } => {
            // The full run shares this path; training just the synthesis
            // stack is the run truncated after its TTS stage.
            let cfg = partial_config(&config, true)?;
            run_experiment(&cfg, out_dir).map(|_| ())
        }
        Command::TrainMel2lin { config, out_dir } => {
            let cfg = partial_config(&config, true)?;
            run_experiment(&cfg, out_dir).map(|_| ())
        }
        Command::Synthesize {
            model,
            mel2lin,
            linear_stats,
            mel_stats,
            text_file,
            speaker_ref,
            speaker_vec,
            out_dir,
            seed,
            max_steps,
            dec_hidden,
        } => cmd_synthesize(
            model,
            mel2lin,
            linear_stats,
            mel_stats,
            text_file,
            speaker_ref,
            speaker_vec,
            out_dir,
            seed,
            max_steps,
            dec_hidden,
        ),
        Command::Mix { real, synth, ratio, budget_hours, checkpoints, seed, out } => {
            let (real_parts, synthetic_parts) = parse_ratio(&ratio)?;
            let real = CorpusManifest::load(&real)?;
            let synth = CorpusManifest::load(&synth)?;
            let policy =
                MixPolicy { real_parts, synthetic_parts, checkpoint_budget_hours: budget_hours };
            let mix = build_training_mix(&real, &synth, &policy, checkpoints, seed)?;
            mix.save(&out)?;
            println!("wrote plan for {} checkpoints to {}", checkpoints, out.display());
            Ok(())
        }
        Command::TrainAsr { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            run_experiment(&cfg, out_dir).map(|_| ())
        }
        Command::Decode { config, model, vocab, mfcc_stats, manifest, lm, lm_weight } => {
            cmd_decode(config, model, vocab, mfcc_stats, manifest, lm, lm_weight)
        }
        Command::Report { results, out_dir } => {
            let report = Report::load_json(&results)?;
            report.save(&out_dir)?;
            print!("{}", report.to_table());
            Ok(())
        }
        Command::Run { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg, &out_dir)?;
            print!("{}", out.report.to_table());
            println!("artifacts in {}", out_dir.display());
            Ok(())
        }
        Command::MakeToy { out_dir, utterances, seed } => {
            let spec = ToyCorpusSpec { n_train: utterances, seed, ..ToyCorpusSpec::default() };
            let toy = generate_toy_corpus(&out_dir, &spec)?;
            println!("toy corpus ready; run:\n  synthasr run --config {} --out-dir {}/out",
                toy.config.display(), out_dir.display());
            Ok(())
        }
    }
}

/// Truncate the configured run so only the synthesis-side stages matter.
fn partial_config(path: &std::path::Path, _tts_only: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.schedule.phase1_checkpoints = 1;
    cfg.schedule.phase2_checkpoints = 1;
    cfg.run.conditions.truncate(1);
    Ok(cfg)
}

fn parse_ratio(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| PipelineError::Config(format!("ratio must look like 3:2, got {s:?}")))?;
    let a = a.parse().map_err(|_| PipelineError::Config(format!("bad ratio part {a:?}")))?;
    let b = b.parse().map_err(|_| PipelineError::Config(format!("bad ratio part {b:?}")))?;
    Ok((a, b))
}

fn cmd_augment(
    manifest: PathBuf,
    out_dir: PathBuf,
    speed: Vec<f64>,
    remove_silence: bool,
    silence_threshold: f64,
    do_spec_augment: bool,
    seed: u64,
) -> Result<()> {
    use synthasr_core::augment::{silence_remove, spec_augment, speed_perturb, SpecAugmentParams};
    let (m, _) = ingest(&manifest)?;
    std::fs::create_dir_all(&out_dir)?;
    let mut records: Vec<UtteranceRecord> = Vec::new();
    let pipeline = FeaturePipeline::new(&Default::default())?;
    for rec in &m.records {
        let wave = read_wav(&rec.audio_path)?;
        let base = if remove_silence {
            let trimmed = silence_remove(&wave, silence_threshold, 0.020, 0.250)?;
            if trimmed.is_empty() {
                log::warn!("{} is entirely quiet; keeping original", rec.utterance_id);
                wave
            } else {
                trimmed
            }
        } else {
            wave
        };
        let mut variants: Vec<(String, synthasr_core::dsp::Waveform)> =
            vec![(rec.utterance_id.clone(), base.clone())];
        for &factor in &speed {
            let perturbed = speed_perturb(&base, factor)?;
            variants.push((format!("{}_sp{factor}", rec.utterance_id), perturbed));
        }
        for (id, w) in variants {
            let path = out_dir.join(format!("{id}.wav"));
            synthasr_core::dsp::write_wav(&path, &w)?;
            if do_spec_augment {
                let feats = pipeline.mfcc_of(&w)?;
                let (masked, _) = spec_augment(&feats, &SpecAugmentParams::default(), seed ^ records.len() as u64)?;
                synthasr_core::dsp::write_feature_file(out_dir.join(format!("{id}.mfcc.fea")), &masked)?;
            }
            records.push(UtteranceRecord {
                utterance_id: id,
                duration_s: w.duration_seconds(),
                audio_path: path,
                transcript: rec.transcript.clone(),
                speaker_id: rec.speaker_id.clone(),
                origin: rec.origin,
                flags: Vec::new(),
            });
        }
    }
    let out_manifest = CorpusManifest { records };
    out_manifest.save(out_dir.join("manifest.jsonl"))?;
    println!("wrote {} augmented utterances to {}", out_manifest.len(), out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synthesize(
    model: PathBuf,
    mel2lin: PathBuf,
    linear_stats: PathBuf,
    mel_stats: PathBuf,
    text_file: PathBuf,
    speaker_ref: Option<PathBuf>,
    speaker_vec: Option<PathBuf>,
    out_dir: PathBuf,
    seed: u64,
    max_steps: usize,
    dec_hidden: usize,
) -> Result<()> {
    let char_vocab = CharVocab::new();
    let mut tts_cfg = TtsConfig::new(char_vocab.len());
    tts_cfg.dec_hidden = dec_hidden;
    let mut tts_store: ParamStore<f32> = ParamStore::new();
    let tts = TtsModel::new(&mut tts_store, tts_cfg, 0);
    tts_store.load(&model)?;

    let mut m2l_store: ParamStore<f32> = ParamStore::new();
    let m2l = MelToLinearNet::new(&mut m2l_store, MelToLinearConfig::default(), 0);
    m2l_store.load(&mel2lin)?;

    let lin_stats = read_norm_stats(&linear_stats)?;
    let mel_norm_stats = read_norm_stats(&mel_stats)?;
    let lines: Vec<String> = std::fs::read_to_string(&text_file)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();

    let pipeline = FeaturePipeline::new(&Default::default())?;
    let job = SynthesisJob {
        tts: &tts,
        tts_store: &tts_store,
        mel2lin: &m2l,
        mel2lin_store: &m2l_store,
        linear_stats: &lin_stats,
        char_vocab: &char_vocab,
        stft: &pipeline.stft,
        sample_rate: 16_000,
        max_steps,
        seed,
    };

    let donors;
    let vectors;
    let policy = match (&speaker_ref, &speaker_vec) {
        (Some(wav), _) => {
            let wave = read_wav(wav)?;
            let mel = synthasr_core::dsp::apply_norm(&pipeline.log_mel_of(&wave)?, &mel_norm_stats)?;
            donors = vec![("reference".to_string(), mel)];
            SpeakerPolicy::RoundRobinDonors(&donors)
        }
        (None, Some(vec_file)) => {
            vectors = std::fs::read_to_string(vec_file)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| PipelineError::Config(format!("bad vector value {t:?}"))))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            SpeakerPolicy::Vectors(&vectors)
        }
        (None, None) => {
            return Err(PipelineError::Config(
                "provide --speaker-ref or --speaker-vec".into(),
            ))
        }
    };

    let manifest = generate_synthetic(&job, &lines, &policy, &out_dir)?;
    manifest.save(out_dir.join("manifest.jsonl"))?;
    println!("synthesized {} utterances into {}", manifest.len(), out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_decode(
    config: PathBuf,
    model: PathBuf,
    vocab_path: PathBuf,
    mfcc_stats: PathBuf,
    manifest: PathBuf,
    lm_path: Option<PathBuf>,
    lm_weight: f64,
) -> Result<()> {
    use synthasr_core::asr::{AsrConfig, AsrModel, BeamConfig, LmScorer};
    use synthasr_core::tts::AttentionConfig;

    let cfg = ExperimentConfig::load(&config)?;
    let vocab = AsrVocab::load(&vocab_path)?;
    let stats = read_norm_stats(&mfcc_stats)?;
    let (m, _) = ingest(&manifest)?;

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
    let mut store: ParamStore<f32> = ParamStore::new();
    let asr = AsrModel::new(&mut store, asr_cfg, 0);
    store.load(&model)?;

    let lm = lm_path.map(NgramLm::load).transpose()?;
    let lm_ref: Option<&dyn LmScorer> = match (&lm, lm_weight != 0.0) {
        (Some(l), true) => Some(l),
        _ => None,
    };

    let pipeline = FeaturePipeline::new(&cfg.dsp)?;
    let refs: Vec<(String, synthasr_core::dsp::FeatureMatrix)> = m
        .records
        .iter()
        .map(|r| {
            let wave = read_wav(&r.audio_path)?;
            let feats = synthasr_core::dsp::apply_norm(&pipeline.mfcc_of(&wave)?, &stats)?;
            Ok((r.transcript.to_lowercase(), feats))
        })
        .collect::<Result<_>>()?;
    let beam = BeamConfig {
        beam_size: cfg.asr.beam_size,
        max_len: cfg.asr.max_decode_len,
        lm_weight,
    };
    let wer = synthasr_pipeline::experiment::decode_wer(
        &asr, &store, &vocab, &refs, lm_ref, lm_weight, &beam,
    )?;
    println!("WER {:.2}% over {} utterances", 100.0 * wer, refs.len());
    Ok(())
}
