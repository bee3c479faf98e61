//! Synthetic-data generation: text lines through the synthesis network, the
//! mel-to-linear converter and single-iteration Griffin-Lim into WAV files
//! plus a manifest.

use std::path::Path;

use rayon::prelude::*;
use synthasr_core::dsp::{write_wav, FeatureMatrix, NormStats, StftConfig};
use synthasr_core::nn::ParamStore;
use synthasr_core::text::CharVocab;
use synthasr_core::tts::{linear_with_dc, MelToLinearNet, TtsModel};
use synthasr_core::vocoder::{
    griffin_lim, normalize_peak, GriffinLimConfig, MagnitudeSpectrogram, PhaseInit,
};

use crate::manifest::{CorpusManifest, Origin, UtteranceRecord};
use crate::{PipelineError, Result};

/// How the speaker embedding of each generated utterance is chosen.
pub enum SpeakerPolicy<'a> {
    /// Cycle style references (normalized log-mel of donor utterances);
    /// each entry carries the donor's speaker id.
    RoundRobinDonors(&'a [(String, FeatureMatrix)]),
    /// Externally supplied embedding vectors (an i-vector stand-in).
    Vectors(&'a [Vec<f64>]),
}

pub struct SynthesisJob<'a> {
    pub tts: &'a TtsModel,
    pub tts_store: &'a ParamStore<f32>,
    pub mel2lin: &'a MelToLinearNet,
    pub mel2lin_store: &'a ParamStore<f32>,
    pub linear_stats: &'a NormStats,
    pub char_vocab: &'a CharVocab,
    pub stft: &'a StftConfig,
    pub sample_rate: u32,
    pub max_steps: usize,
    pub seed: u64,
}

/// Generate one waveform from a text line. Deterministic given the inputs
/// and seed.
pub fn synthesize_line(
    job: &SynthesisJob,
    line: &str,
    speaker_embedding: &[f64],
    seed: u64,
) -> Result<(synthasr_core::dsp::Waveform, bool)> {
    let normalized = job.char_vocab.normalize_text(line);
    let char_ids = job.char_vocab.encode(&normalized);
    if char_ids.is_empty() {
        return Err(PipelineError::Stage(format!("line {line:?} normalizes to nothing")));
    }
    let synth = job.tts.synthesize(job.tts_store, &char_ids, speaker_embedding, job.max_steps)?;
    let linear = job.mel2lin.convert(job.mel2lin_store, &synth.mel, job.linear_stats)?;
    let with_dc = linear_with_dc(&linear);
    let mag = MagnitudeSpectrogram::new(with_dc, linear.n_frames(), linear.feature_dim() + 1)?;
    let glc = GriffinLimConfig { n_iters: 1, init_phase: PhaseInit::Zero, power: 1.0 };
    let _ = seed; // zero-phase init is already deterministic
    let wave = griffin_lim(&mag, &glc, job.stft, job.sample_rate)?;
    Ok((normalize_peak(&wave, 0.95), synth.truncated))
}

/// Run every line through the synthesis stack in parallel; flagged
/// (truncated) utterances stay in the manifest with a `truncated` flag.
pub fn generate_synthetic(
    job: &SynthesisJob,
    lines: &[String],
    policy: &SpeakerPolicy,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(out_dir)?;
    let results: Vec<Result<UtteranceRecord>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, line)| {
            let (speaker_id, embedding): (String, Vec<f64>) = match policy {
                SpeakerPolicy::RoundRobinDonors(donors) => {
                    let (id, mel) = &donors[i % donors.len()];
                    (id.clone(), job.tts.gst.embed_features(job.tts_store, mel)?)
                }
                SpeakerPolicy::Vectors(vecs) => {
                    (format!("vec_{}", i % vecs.len()), vecs[i % vecs.len()].clone())
                }
            };
            let (wave, truncated) = synthesize_line(job, line, &embedding, job.seed ^ i as u64)?;
            let id = format!("syn_{i:05}");
            let path = out_dir.join(format!("{id}.wav"));
            write_wav(&path, &wave)?;
            Ok(UtteranceRecord {
                utterance_id: id,
                audio_path: path,
                transcript: line.trim().to_lowercase(),
                speaker_id,
                duration_s: wave.duration_seconds(),
                origin: Origin::Synthetic,
                flags: if truncated { vec!["truncated".into()] } else { Vec::new() },
            })
        })
        .collect();

    let mut records = Vec::with_capacity(lines.len());
    for r in results {
        records.push(r?);
    }
    Ok(CorpusManifest { records })
}
