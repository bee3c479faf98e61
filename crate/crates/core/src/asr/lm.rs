//! External sequence-scorer contract for shallow fusion, and the
//! file-backed n-gram table that ships as the reference scorer.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Anything that scores the next token given a prefix plugs into beam
/// search. Implementations must be reentrant.
pub trait LmScorer: Sync {
    /// `log P(next = v | prefix)` for every `v` in the BPE vocabulary
    /// (including the end-of-sequence token).
    fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64>;

    fn vocab_size(&self) -> usize;
}

/// Constant scorer; fusing it at any weight never changes the argmax.
pub struct UniformLm {
    pub vocab: usize,
}

impl LmScorer for UniformLm {
    fn next_log_probs(&self, _prefix: &[usize]) -> Vec<f64> {
        vec![-(self.vocab as f64).ln(); self.vocab]
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }
}

/// Add-alpha smoothed n-gram counts over token ids. Contexts shorter than
/// `order - 1` (near the sequence start) are stored as-is, so scoring uses
/// exactly the available history.
pub struct NgramLm {
    order: usize,
    vocab: usize,
    alpha: f64,
    counts: HashMap<Vec<usize>, Vec<f64>>,
}

impl NgramLm {
    /// `sequences` should already carry the end-of-sequence token so the LM
    /// learns to close sentences.
    pub fn train(sequences: &[Vec<usize>], vocab: usize, order: usize, alpha: f64) -> Self {
        assert!(order >= 1 && vocab >= 1 && alpha > 0.0);
        let mut counts: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
        for seq in sequences {
            for (i, &tok) in seq.iter().enumerate() {
                let ctx_start = i.saturating_sub(order - 1);
                let ctx = seq[ctx_start..i].to_vec();
                counts.entry(ctx).or_insert_with(|| vec![0.0; vocab])[tok] += 1.0;
            }
        }
        Self { order, vocab, alpha, counts }
    }

    fn context<'a>(&self, prefix: &'a [usize]) -> &'a [usize] {
        let start = prefix.len().saturating_sub(self.order - 1);
        &prefix[start..]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "NGLM1 {} {} {}", self.order, self.vocab, self.alpha)?;
        let mut contexts: Vec<&Vec<usize>> = self.counts.keys().collect();
        contexts.sort();
        for ctx in contexts {
            let row = &self.counts[ctx];
            let ctx_str: Vec<String> = ctx.iter().map(|t| t.to_string()).collect();
            let row_str: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(out, "{}|{}", ctx_str.join(","), row_str.join(","))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty lm file"))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("NGLM1") {
            return Err(bad("bad lm magic"));
        }
        let order: usize = parse(parts.next())?;
        let vocab: usize = parse(parts.next())?;
        let alpha: f64 = parse(parts.next())?;
        let mut counts = HashMap::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (ctx_str, row_str) = line.split_once('|').ok_or_else(|| bad("bad lm line"))?;
            let ctx: Vec<usize> = if ctx_str.is_empty() {
                Vec::new()
            } else {
                ctx_str.split(',').map(|t| t.parse().map_err(|_| bad("bad id"))).collect::<std::io::Result<_>>()?
            };
            let row: Vec<f64> = row_str
                .split(',')
                .map(|t| t.parse().map_err(|_| bad("bad count")))
                .collect::<std::io::Result<_>>()?;
            if row.len() != vocab {
                return Err(bad("row width mismatch"));
            }
            counts.insert(ctx, row);
        }
        Ok(Self { order, vocab, alpha, counts })
    }
}

fn bad(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn parse<T: std::str::FromStr>(s: Option<&str>) -> std::io::Result<T> {
    s.and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad lm header"))
}

impl LmScorer for NgramLm {
    fn next_log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let ctx = self.context(prefix);
        let empty;
        let row = match self.counts.get(ctx) {
            Some(row) => row,
            None => {
                empty = vec![0.0; self.vocab];
                &empty
            }
        };
        let total: f64 = row.iter().sum::<f64>() + self.alpha * self.vocab as f64;
        row.iter().map(|&c| ((c + self.alpha) / total).ln()).collect()
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }
}
