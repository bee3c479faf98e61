//! End-to-end orchestration: corpus ingestion, feature extraction, the
//! two-phase training schedule, synthetic-data generation, real/synthetic
//! mixing, decoding with an LM-weight sweep, and report emission.

pub mod config;
pub mod experiment;
pub mod features;
pub mod manifest;
pub mod mix;
pub mod report;
pub mod synth;
pub mod toy;

use thiserror::Error;

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "SYNTHASR_WORKERS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage failure: {0}")]
    Stage(String),
    #[error(transparent)]
    Dsp(#[from] synthasr_core::dsp::DspError),
    #[error(transparent)]
    Nn(#[from] synthasr_core::nn::NnError),
    #[error(transparent)]
    Vocoder(#[from] synthasr_core::vocoder::VocoderError),
    #[error(transparent)]
    Augment(#[from] synthasr_core::augment::AugmentError),
    #[error(transparent)]
    Text(#[from] synthasr_core::text::TextError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    /// CLI exit code: 1 for configuration problems, 2 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }
}
