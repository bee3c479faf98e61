//! Corpus manifests: one JSON object per line with the utterance fields,
//! plus directory ingestion with header validation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthasr_core::dsp::wav_duration_seconds;

use crate::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub audio_path: PathBuf,
    pub transcript: String,
    pub speaker_id: String,
    pub duration_s: f64,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
}

/// What ingestion accepted and why records were dropped.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<(String, String)>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_hours(&self) -> f64 {
        self.records.iter().map(|r| r.duration_s).sum::<f64>() / 3600.0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(&path)?);
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line)?);
        }
        Ok(Self { records })
    }
}

/// Validate records against the filesystem: audio must exist and parse, ids
/// must be unique, durations are taken from the WAV headers.
fn validate(
    records: Vec<UtteranceRecord>,
    base: Option<&Path>,
) -> Result<(CorpusManifest, IngestReport)> {
    let mut report = IngestReport::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for mut rec in records {
        if !seen.insert(rec.utterance_id.clone()) {
            report
                .rejected
                .push((rec.utterance_id.clone(), "duplicate utterance id".into()));
            continue;
        }
        let full = match base {
            Some(b) if rec.audio_path.is_relative() => b.join(&rec.audio_path),
            _ => rec.audio_path.clone(),
        };
        match wav_duration_seconds(&full) {
            Ok(d) if d > 0.0 => {
                rec.duration_s = d;
                rec.audio_path = full;
                report.accepted += 1;
                out.push(rec);
            }
            Ok(_) => {
                report.rejected.push((rec.utterance_id.clone(), "zero-length audio".into()));
            }
            Err(e) => {
                report.rejected.push((rec.utterance_id.clone(), e.to_string()));
            }
        }
    }
    for (id, why) in &report.rejected {
        log::warn!("rejected {id}: {why}");
    }
    if out.is_empty() {
        return Err(PipelineError::Stage("ingest produced zero valid records".into()));
    }
    Ok((CorpusManifest { records: out }, report))
}

/// Ingest a manifest file (JSONL) or a directory with `metadata.tsv` lines
/// `utt_id<TAB>speaker_id<TAB>transcript` and `<utt_id>.wav` audio files.
pub fn ingest(path: impl AsRef<Path>) -> Result<(CorpusManifest, IngestReport)> {
    let path = path.as_ref();
    if path.is_dir() {
        let meta = path.join("metadata.tsv");
        if !meta.exists() {
            return Err(PipelineError::Config(format!(
                "directory {} has no metadata.tsv",
                path.display()
            )));
        }
        let r = BufReader::new(File::open(&meta)?);
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(speaker), Some(text)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(PipelineError::Config(format!("bad metadata line {line:?}")));
            };
            records.push(UtteranceRecord {
                utterance_id: id.to_string(),
                audio_path: PathBuf::from(format!("{id}.wav")),
                transcript: text.to_string(),
                speaker_id: speaker.to_string(),
                duration_s: 0.0,
                origin: Origin::Real,
                flags: Vec::new(),
            });
        }
        validate(records, Some(path))
    } else {
        let manifest = CorpusManifest::load(path)?;
        let base = path.parent().map(Path::to_path_buf);
        validate(manifest.records, base.as_deref())
    }
}
