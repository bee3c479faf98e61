//! Real/synthetic data mixing: per-checkpoint utterance plans that hold the
//! configured origin ratio and audio-hour budget, repeating utterances when
//! a pool is too small.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::CorpusManifest;
use crate::{PipelineError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixPolicy {
    pub real_parts: u32,
    pub synthetic_parts: u32,
    /// Audio hours presented per checkpoint.
    pub checkpoint_budget_hours: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckpointPlan {
    /// Utterance ids in presentation order; repeats allowed.
    pub utterances: Vec<String>,
    pub real_hours: f64,
    pub synthetic_hours: f64,
    pub repeated_utterances: usize,
}

impl CheckpointPlan {
    pub fn total_hours(&self) -> f64 {
        self.real_hours + self.synthetic_hours
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingMix {
    pub checkpoints: Vec<CheckpointPlan>,
}

impl TrainingMix {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Fill one origin bucket up to `target_hours` by cycling a seeded shuffle
/// of the pool.
fn fill_bucket(
    pool: &CorpusManifest,
    target_hours: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, f64, usize) {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    let mut picked = Vec::new();
    let mut hours = 0.0;
    let mut cursor = 0usize;
    let mut repeats = 0usize;
    while hours < target_hours {
        if cursor == order.len() {
            cursor = 0;
            repeats += 1;
        }
        let rec = &pool.records[order[cursor]];
        picked.push(rec.utterance_id.clone());
        hours += rec.duration_s / 3600.0;
        cursor += 1;
    }
    (picked, hours, repeats)
}

/// Deterministic per-checkpoint sampling plans. Each checkpoint's real and
/// synthetic hour shares follow the policy ratio; exhausted pools repeat
/// (logged in the plan).
pub fn build_training_mix(
    real: &CorpusManifest,
    synthetic: &CorpusManifest,
    policy: &MixPolicy,
    n_checkpoints: usize,
    seed: u64,
) -> Result<TrainingMix> {
    let parts = (policy.real_parts + policy.synthetic_parts) as f64;
    if parts == 0.0 {
        return Err(PipelineError::Config("mix ratio must have positive parts".into()));
    }
    if policy.real_parts > 0 && real.is_empty() {
        return Err(PipelineError::Stage("mix requires real data but the manifest is empty".into()));
    }
    if policy.synthetic_parts > 0 && synthetic.is_empty() {
        return Err(PipelineError::Stage(
            "mix requires synthetic data but the manifest is empty".into(),
        ));
    }
    let real_target = policy.checkpoint_budget_hours * policy.real_parts as f64 / parts;
    let synth_target = policy.checkpoint_budget_hours * policy.synthetic_parts as f64 / parts;

    let mut mix = TrainingMix::default();
    for c in 0..n_checkpoints {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (c as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15));
        let mut plan = CheckpointPlan::default();
        if policy.real_parts > 0 {
            let (ids, hours, repeats) = fill_bucket(real, real_target, &mut rng);
            plan.utterances.extend(ids);
            plan.real_hours = hours;
            plan.repeated_utterances += repeats;
        }
        if policy.synthetic_parts > 0 {
            let (ids, hours, repeats) = fill_bucket(synthetic, synth_target, &mut rng);
            plan.utterances.extend(ids);
            plan.synthetic_hours = hours;
            plan.repeated_utterances += repeats;
        }
        // Interleave origins deterministically.
        plan.utterances.shuffle(&mut rng);
        if plan.repeated_utterances > 0 {
            log::info!(
                "checkpoint {c}: pools cycled {} time(s) to meet the budget",
                plan.repeated_utterances
            );
        }
        mix.checkpoints.push(plan);
    }
    Ok(mix)
}
