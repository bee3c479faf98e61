//! Result tables: per-condition WERs as CSV and a human-readable layout
//! mirroring the usual SpecAug / synthetic-data / LM comparison grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lm_weight: f64,
    pub dev_wer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub spec_augment: bool,
    pub synthetic_data: bool,
    pub lm: bool,
    /// Fusion weight selected on the dev set.
    pub lm_weight: f64,
    pub dev_wer: f64,
    pub test_wer: f64,
    #[serde(default)]
    pub dev_sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub conditions: Vec<ConditionResult>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("spec_aug,syn_data,lm,lm_weight,dev_wer,test_wer\n");
        for c in &self.conditions {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.spec_augment, c.synthetic_data, c.lm, c.lm_weight, c.dev_wer, c.test_wer
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Report> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "spec_aug,syn_data,lm,lm_weight,dev_wer,test_wer" {
            return Err(PipelineError::Stage(format!("unexpected csv header {header:?}")));
        }
        let mut conditions = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(PipelineError::Stage(format!("bad csv row {line:?}")));
            }
            let parse_bool = |s: &str| {
                s.parse::<bool>().map_err(|_| PipelineError::Stage(format!("bad bool {s:?}")))
            };
            let parse_f64 = |s: &str| {
                s.parse::<f64>().map_err(|_| PipelineError::Stage(format!("bad number {s:?}")))
            };
            conditions.push(ConditionResult {
                spec_augment: parse_bool(fields[0])?,
                synthetic_data: parse_bool(fields[1])?,
                lm: parse_bool(fields[2])?,
                lm_weight: parse_f64(fields[3])?,
                dev_wer: parse_f64(fields[4])?,
                test_wer: parse_f64(fields[5])?,
                dev_sweep: Vec::new(),
            });
        }
        Ok(Report { conditions })
    }

    /// Fixed-width table in the familiar comparison layout.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("+----------+-----------+-----+----------+-----------+-----------+\n");
        out.push_str("| SpecAug  | Syn. Data | LM  | lambda   | dev WER%  | test WER% |\n");
        out.push_str("+----------+-----------+-----+----------+-----------+-----------+\n");
        for c in &self.conditions {
            let yn = |b: bool| if b { "Yes" } else { "No" };
            out.push_str(&format!(
                "| {:<8} | {:<9} | {:<3} | {:<8.3} | {:>9.2} | {:>9.2} |\n",
                yn(c.spec_augment),
                yn(c.synthetic_data),
                yn(c.lm),
                c.lm_weight,
                100.0 * c.dev_wer,
                100.0 * c.test_wer,
            ));
        }
        out.push_str("+----------+-----------+-----+----------+-----------+-----------+\n");
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv())?;
        std::fs::write(dir.join("report.txt"), self.to_table())?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Report> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
