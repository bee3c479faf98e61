//! Synthetic micro-corpus generator: a small pseudo-word vocabulary where
//! every character maps to a fixed tone, so audio is exactly predictable
//! from text, durations scale with character counts, and three "speakers"
//! differ by a pitch factor. Useful for demos and end-to-end checks
//! without any external data.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthasr_core::dsp::{write_wav, Waveform};

use crate::manifest::{CorpusManifest, Origin, UtteranceRecord};
use crate::Result;

pub const WORDS: [&str; 24] = [
    "ba", "do", "ki", "lu", "mo", "ne", "pa", "ri", "su", "ta", "vo", "we", "za", "chi", "fer",
    "gon", "hap", "jil", "kem", "lor", "mun", "nop", "qur", "sed",
];

const SPEAKER_PITCH: [(&str, f64); 3] = [("spk_a", 0.85), ("spk_b", 1.0), ("spk_c", 1.2)];
const SAMPLE_RATE: u32 = 16_000;
const TONE_SECONDS: f64 = 0.15;
const GAP_SECONDS: f64 = 0.07;
/// Faint noise floor so quiet regions stay above the log-mel floor.
const NOISE_AMP: f64 = 0.002;

#[derive(Debug, Clone)]
pub struct ToyCorpusSpec {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    /// Text-only lines for synthesis and language modeling.
    pub n_text_lines: usize,
    pub words_per_utterance: (usize, usize),
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            n_train: 60,
            n_dev: 8,
            n_test: 8,
            n_text_lines: 120,
            words_per_utterance: (5, 9),
            seed: 7,
        }
    }
}

/// Paths of everything the generator wrote.
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub train_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub synthesis_text: PathBuf,
    pub config: PathBuf,
}

fn char_freq(c: char) -> f64 {
    // 'a'..'z' onto 220..1720 Hz.
    220.0 + 60.0 * (c as u8 - b'a') as f64
}

/// Deterministic audio for a transcript: one tone per character with a
/// short attack/decay envelope, gaps between words, leading and trailing
/// padding.
pub fn render_transcript(text: &str, pitch: f64) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let tone_len = (TONE_SECONDS * sr) as usize;
    let gap_len = (GAP_SECONDS * sr) as usize;
    let edge = (0.1 * sr) as usize;
    let ramp = (0.01 * sr) as usize;

    let mut samples = vec![0.0; edge];
    for (w, word) in text.split_whitespace().enumerate() {
        if w > 0 {
            samples.extend(std::iter::repeat(0.0).take(gap_len));
        }
        for c in word.chars() {
            let freq = char_freq(c) * pitch;
            for i in 0..tone_len {
                let env = if i < ramp {
                    i as f64 / ramp as f64
                } else if i + ramp > tone_len {
                    (tone_len - i) as f64 / ramp as f64
                } else {
                    1.0
                };
                let phase = 2.0 * std::f64::consts::PI * freq * i as f64 / sr;
                samples.push(0.35 * env * phase.sin());
            }
        }
    }
    samples.extend(std::iter::repeat(0.0).take(edge));
    // Deterministic dither derived from the text keeps mel energies off the
    // log floor in the gaps.
    let mut h = 0x9e3779b97f4a7c15u64 ^ (text.len() as u64) ^ ((pitch * 1000.0) as u64);
    for s in samples.iter_mut() {
        h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = ((h >> 11) as f64) / ((1u64 << 53) as f64); // [0, 1)
        *s += NOISE_AMP * (2.0 * u - 1.0);
    }
    Waveform::new(samples, SAMPLE_RATE).expect("toy audio is finite")
}

fn random_line(rng: &mut ChaCha8Rng, spec: &ToyCorpusSpec) -> String {
    let n = rng.gen_range(spec.words_per_utterance.0..=spec.words_per_utterance.1);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn write_split(
    dir: &Path,
    split: &str,
    count: usize,
    rng: &mut ChaCha8Rng,
    spec: &ToyCorpusSpec,
) -> Result<CorpusManifest> {
    let audio_dir = dir.join(split);
    std::fs::create_dir_all(&audio_dir)?;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let text = random_line(rng, spec);
        let (speaker, pitch) = SPEAKER_PITCH[i % SPEAKER_PITCH.len()];
        let wave = render_transcript(&text, pitch);
        let id = format!("{split}_{i:04}");
        let path = audio_dir.join(format!("{id}.wav"));
        write_wav(&path, &wave)?;
        records.push(UtteranceRecord {
            utterance_id: id.clone(),
            // Relative to the manifest file, which sits next to the split
            // directories.
            audio_path: PathBuf::from(format!("{split}/{id}.wav")),
            transcript: text,
            speaker_id: speaker.to_string(),
            duration_s: wave.duration_seconds(),
            origin: Origin::Real,
            flags: Vec::new(),
        });
    }
    Ok(CorpusManifest { records })
}

/// Generate the corpus, the text-only lines, and a ready-to-run config.
pub fn generate_toy_corpus(dir: impl AsRef<Path>, spec: &ToyCorpusSpec) -> Result<ToyCorpus> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let train = write_split(dir, "train", spec.n_train, &mut rng, spec)?;
    let dev = write_split(dir, "dev", spec.n_dev, &mut rng, spec)?;
    let test = write_split(dir, "test", spec.n_test, &mut rng, spec)?;

    let train_manifest = dir.join("train.jsonl");
    let dev_manifest = dir.join("dev.jsonl");
    let test_manifest = dir.join("test.jsonl");
    train.save(&train_manifest)?;
    dev.save(&dev_manifest)?;
    test.save(&test_manifest)?;

    let synthesis_text = dir.join("synthesis_text.txt");
    let mut text_file = File::create(&synthesis_text)?;
    for _ in 0..spec.n_text_lines {
        writeln!(text_file, "{}", random_line(&mut rng, spec))?;
    }

    let config = dir.join("config.toml");
    std::fs::write(&config, toy_config_toml(dir))?;
    log::info!(
        "toy corpus: {} train / {} dev / {} test utterances, {:.1} min audio",
        spec.n_train,
        spec.n_dev,
        spec.n_test,
        (train.total_hours() + dev.total_hours() + test.total_hours()) * 60.0
    );
    Ok(ToyCorpus { train_manifest, dev_manifest, test_manifest, synthesis_text, config })
}

fn toy_config_toml(dir: &Path) -> String {
    let d = dir.display();
    format!(
        r#"[corpora]
train = "{d}/train.jsonl"
dev = "{d}/dev.jsonl"
test = "{d}/test.jsonl"
synthesis_text = "{d}/synthesis_text.txt"

[tts]
epochs = 30
batch_size = 4
learning_rate = 0.05

[mel2lin]
epochs = 12

[asr]
bpe_merges = 40
beam_size = 4

[schedule]
phase1_checkpoints = 8
phase1_epochs = 4.0
phase2_checkpoints = 17

[mix]
real_parts = 3
synthetic_parts = 2

[lm]
sweep = [0.0, 0.2, 0.5]

[run]
seed = 42
workers = 4
conditions = [{{ spec_augment = true, synthetic = true, lm = true }}]
"#
    )
}
