//! Corpus-level feature normalization (population statistics).

use super::{DspError, FeatureMatrix, Result};

/// Floor applied to the standard deviation of degenerate dimensions.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation pooled over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_frames: usize,
}

/// Exact running sums so partial statistics merge without loss.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n_frames: usize,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { sum: vec![0.0; dim], sum_sq: vec![0.0; dim], n_frames: 0 }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn add(&mut self, f: &FeatureMatrix) -> Result<()> {
        if f.feature_dim() != self.dim() {
            return Err(DspError::ShapeMismatch {
                op: "StatsAccumulator::add",
                detail: format!("dim {} vs accumulator {}", f.feature_dim(), self.dim()),
            });
        }
        for frame in f.rows() {
            for (d, &x) in frame.iter().enumerate() {
                self.sum[d] += x;
                self.sum_sq[d] += x * x;
            }
            self.n_frames += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(DspError::ShapeMismatch {
                op: "StatsAccumulator::merge",
                detail: format!("dim {} vs {}", other.dim(), self.dim()),
            });
        }
        for d in 0..self.dim() {
            self.sum[d] += other.sum[d];
            self.sum_sq[d] += other.sum_sq[d];
        }
        self.n_frames += other.n_frames;
        Ok(())
    }

    /// Population mean/std; degenerate dimensions get the std floor.
    pub fn finalize(&self) -> Result<NormStats> {
        if self.n_frames < 2 {
            return Err(DspError::InvalidConfig(format!(
                "need at least 2 frames to estimate statistics, got {}",
                self.n_frames
            )));
        }
        let n = self.n_frames as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = self
            .sum_sq
            .iter()
            .zip(mean.iter())
            .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Ok(NormStats { mean, std, n_frames: self.n_frames })
    }
}

/// Pool per-dimension statistics over every frame of every matrix.
pub fn estimate_norm_stats(corpus: &[FeatureMatrix]) -> Result<NormStats> {
    let dim = corpus
        .first()
        .map(FeatureMatrix::feature_dim)
        .ok_or(DspError::EmptyInput("estimate_norm_stats"))?;
    let mut acc = StatsAccumulator::new(dim);
    for f in corpus {
        acc.add(f)?;
    }
    acc.finalize()
}

/// (x - mean) / std, elementwise per dimension.
pub fn apply_norm(f: &FeatureMatrix, s: &NormStats) -> Result<FeatureMatrix> {
    if f.feature_dim() != s.mean.len() {
        return Err(DspError::ShapeMismatch {
            op: "apply_norm",
            detail: format!("feature dim {} vs stats dim {}", f.feature_dim(), s.mean.len()),
        });
    }
    let mut out = f.clone();
    let dim = f.feature_dim();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let d = i % dim;
        *v = (*v - s.mean[d]) / s.std[d];
    }
    Ok(out)
}

/// Inverse of [`apply_norm`]: x * std + mean.
pub fn unapply_norm(f: &FeatureMatrix, s: &NormStats) -> Result<FeatureMatrix> {
    if f.feature_dim() != s.mean.len() {
        return Err(DspError::ShapeMismatch {
            op: "unapply_norm",
            detail: format!("feature dim {} vs stats dim {}", f.feature_dim(), s.mean.len()),
        });
    }
    let mut out = f.clone();
    let dim = f.feature_dim();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let d = i % dim;
        *v = *v * s.std[d] + s.mean[d];
    }
    Ok(out)
}
