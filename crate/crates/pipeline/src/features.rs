//! Feature-extraction stage: waveforms to MFCC / log-mel / linear matrices
//! with corpus statistics, parallel over utterances.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use synthasr_core::augment::silence_remove;
use synthasr_core::dsp::{
    apply_norm, estimate_norm_stats, linear_magnitude, log_mel, make_mel_filterbank, mfcc,
    read_wav, FeatureMatrix, MelFilterbank, MelScale, NormStats, StftConfig,
};

use crate::config::{AugmentConfig, DspConfig};
use crate::manifest::CorpusManifest;
use crate::{PipelineError, Result};

/// Shared extraction setup: framing, filterbank, dimensions.
pub struct FeaturePipeline {
    pub stft: StftConfig,
    pub filterbank: MelFilterbank,
    pub n_mfcc: usize,
    pub sample_rate: u32,
}

impl FeaturePipeline {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        let stft = StftConfig::default();
        let filterbank = make_mel_filterbank(
            cfg.sample_rate,
            stft.fft_size,
            cfg.n_mels,
            cfg.mel_fmin,
            cfg.sample_rate as f64 / 2.0,
            MelScale::Htk,
        )?;
        Ok(Self { stft, filterbank, n_mfcc: cfg.n_mfcc, sample_rate: cfg.sample_rate })
    }

    pub fn mfcc_of(&self, w: &synthasr_core::dsp::Waveform) -> Result<FeatureMatrix> {
        Ok(mfcc(w, &self.stft, &self.filterbank, self.n_mfcc)?)
    }

    pub fn log_mel_of(&self, w: &synthasr_core::dsp::Waveform) -> Result<FeatureMatrix> {
        Ok(log_mel(w, &self.stft, &self.filterbank)?)
    }

    pub fn linear_of(&self, w: &synthasr_core::dsp::Waveform) -> Result<FeatureMatrix> {
        Ok(linear_magnitude(w, &self.stft)?)
    }
}

/// Per-utterance features for one corpus, keyed by utterance id.
pub struct CorpusFeatures {
    pub mfcc: HashMap<String, FeatureMatrix>,
    pub mel: HashMap<String, FeatureMatrix>,
    pub linear: HashMap<String, FeatureMatrix>,
}

/// Extract raw (unnormalized) features for every record. Silence removal,
/// when enabled, applies to the synthesis-side features (mel/linear) only;
/// recognizer features see the original audio.
pub fn extract_corpus(
    manifest: &CorpusManifest,
    pipeline: &FeaturePipeline,
    augment: &AugmentConfig,
    with_tts_features: bool,
) -> Result<CorpusFeatures> {
    let results: Vec<Result<(String, FeatureMatrix, Option<(FeatureMatrix, FeatureMatrix)>)>> =
        manifest
            .records
            .par_iter()
            .map(|rec| {
                let wave = read_wav(&rec.audio_path)?;
                let mfcc = pipeline.mfcc_of(&wave)?;
                let tts = if with_tts_features {
                    let tts_wave = if augment.remove_silence {
                        let trimmed = silence_remove(
                            &wave,
                            augment.silence_threshold_db,
                            augment.silence_window_s,
                            augment.min_silence_s,
                        )?;
                        if trimmed.is_empty() {
                            wave.clone()
                        } else {
                            trimmed
                        }
                    } else {
                        wave.clone()
                    };
                    Some((pipeline.log_mel_of(&tts_wave)?, pipeline.linear_of(&tts_wave)?))
                } else {
                    None
                };
                Ok((rec.utterance_id.clone(), mfcc, tts))
            })
            .collect();

    let mut out = CorpusFeatures {
        mfcc: HashMap::new(),
        mel: HashMap::new(),
        linear: HashMap::new(),
    };
    for r in results {
        let (id, mfcc, tts) = r?;
        out.mfcc.insert(id.clone(), mfcc);
        if let Some((mel, lin)) = tts {
            out.mel.insert(id.clone(), mel);
            out.linear.insert(id, lin);
        }
    }
    Ok(out)
}

/// Pooled statistics over the features of the given ids.
pub fn stats_over<'a>(
    features: &HashMap<String, FeatureMatrix>,
    ids: impl Iterator<Item = &'a str>,
) -> Result<NormStats> {
    let mats: Vec<FeatureMatrix> = ids
        .map(|id| {
            features
                .get(id)
                .cloned()
                .ok_or_else(|| PipelineError::Stage(format!("missing features for {id}")))
        })
        .collect::<Result<_>>()?;
    Ok(estimate_norm_stats(&mats)?)
}

/// Normalize a feature map in place with the given statistics.
pub fn normalize_all(
    features: &mut HashMap<String, FeatureMatrix>,
    stats: &NormStats,
) -> Result<()> {
    for m in features.values_mut() {
        *m = apply_norm(m, stats)?;
    }
    Ok(())
}

/// CLI featurize stage: write one feature file per utterance.
pub fn featurize_to_dir(
    manifest: &CorpusManifest,
    pipeline: &FeaturePipeline,
    kind: &str,
    out_dir: &Path,
    stats: Option<&NormStats>,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let paths: Vec<Result<std::path::PathBuf>> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let wave = read_wav(&rec.audio_path)?;
            let mut feat = match kind {
                "mfcc" => pipeline.mfcc_of(&wave)?,
                "logmel" => pipeline.log_mel_of(&wave)?,
                "linear" => pipeline.linear_of(&wave)?,
                other => return Err(PipelineError::Config(format!("unknown feature kind {other}"))),
            };
            if let Some(s) = stats {
                feat = apply_norm(&feat, s)?;
            }
            let path = out_dir.join(format!("{}.{kind}.fea", rec.utterance_id));
            synthasr_core::dsp::write_feature_file(&path, &feat)?;
            Ok(path)
        })
        .collect();
    paths.into_iter().collect()
}
