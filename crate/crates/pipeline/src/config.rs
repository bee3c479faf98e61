//! Experiment configuration: one TOML document with sections for corpora,
//! dsp, augmentation, the two models, the training schedule, data mixing
//! and the LM sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{PipelineError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpora: CorporaConfig,
    #[serde(default)]
    pub dsp: DspConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub tts: TtsSection,
    #[serde(default)]
    pub mel2lin: Mel2LinSection,
    #[serde(default)]
    pub asr: AsrSection,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub mix: MixSection,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaConfig {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    /// Text-only lines used to synthesize additional audio.
    pub synthesis_text: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub mel_fmin: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self { sample_rate: 16_000, n_mels: 80, n_mfcc: 40, mel_fmin: 60.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Apply silence removal to training audio before feature extraction.
    pub remove_silence: bool,
    pub silence_threshold_db: f64,
    pub silence_window_s: f64,
    pub min_silence_s: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            remove_silence: false,
            silence_threshold_db: -40.0,
            silence_window_s: 0.020,
            min_silence_s: 0.250,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsSection {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dec_hidden: usize,
    pub max_synth_steps: usize,
    /// GST reference-encoder channels (unstated upstream; desk default).
    pub gst_conv_channels: [usize; 6],
}

impl Default for TtsSection {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 30,
            batch_size: 4,
            learning_rate: 0.05,
            dec_hidden: 256,
            max_synth_steps: 200,
            gst_conv_channels: [8, 8, 16, 16, 32, 32],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mel2LinSection {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub blstm_hidden: usize,
}

impl Default for Mel2LinSection {
    fn default() -> Self {
        Self { seed: 3, epochs: 15, batch_size: 4, learning_rate: 0.05, blstm_hidden: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsrSection {
    pub seed: u64,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub attention_dim: usize,
    pub bpe_merges: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub ctc_weight: f64,
    pub beam_size: usize,
    pub max_decode_len: usize,
}

impl Default for AsrSection {
    fn default() -> Self {
        Self {
            seed: 2,
            enc_hidden: 64,
            dec_hidden: 128,
            attention_dim: 128,
            bpe_merges: 60,
            batch_size: 4,
            learning_rate: 0.08,
            lr_decay_factor: 0.85,
            lr_decay_every: 200,
            ctc_weight: 0.5,
            beam_size: 4,
            max_decode_len: 40,
        }
    }
}

/// Two-phase schedule, a tenth of the reference setup's 80/170 checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub phase1_checkpoints: usize,
    pub phase1_epochs: f64,
    pub phase2_checkpoints: usize,
    pub lr_reset: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { phase1_checkpoints: 8, phase1_epochs: 4.0, phase2_checkpoints: 17, lr_reset: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSection {
    pub real_parts: u32,
    pub synthetic_parts: u32,
}

impl Default for MixSection {
    fn default() -> Self {
        Self { real_parts: 3, synthetic_parts: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub order: usize,
    pub alpha: f64,
    /// Fusion weights swept on the dev set.
    pub sweep: Vec<f64>,
}

impl Default for LmSection {
    fn default() -> Self {
        Self { order: 3, alpha: 0.1, sweep: vec![0.0, 0.2, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Condition {
    pub spec_augment: bool,
    pub synthetic: bool,
    pub lm: bool,
}

impl Default for Condition {
    fn default() -> Self {
        Self { spec_augment: true, synthetic: true, lm: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub workers: usize,
    pub conditions: Vec<Condition>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 42, workers: 4, conditions: vec![Condition::default()] }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.phase1_checkpoints == 0 || self.schedule.phase2_checkpoints == 0 {
            return Err(PipelineError::Config("schedule checkpoint counts must be positive".into()));
        }
        if self.mix.real_parts == 0 && self.mix.synthetic_parts == 0 {
            return Err(PipelineError::Config("mix ratio parts must not both be zero".into()));
        }
        if self.run.conditions.is_empty() {
            return Err(PipelineError::Config("at least one run condition required".into()));
        }
        if self.lm.sweep.is_empty() {
            return Err(PipelineError::Config("lm sweep must not be empty".into()));
        }
        Ok(())
    }

    /// Worker count, overridable through the environment.
    pub fn workers(&self) -> usize {
        std::env::var(crate::WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(self.run.workers)
            .max(1)
    }
}
