//! Building blocks for a desk-scale speech synthesis / recognition pipeline:
//! deterministic audio feature extraction, Griffin-Lim phase reconstruction,
//! data augmentation, a minimal reverse-mode autodiff engine with the layer
//! set shared by both models, text frontends (character vocabulary and BPE),
//! a Tacotron-style synthesis network and a toy attention ASR system.

pub mod asr;
pub mod augment;
pub mod dsp;
pub mod nn;
pub(crate) mod parallel;
pub mod text;
pub mod tts;
pub mod vocoder;
