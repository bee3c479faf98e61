//! Subword label vocabulary derived from a BPE model: every piece observed
//! on the training words plus single-character fallbacks, and the
//! end-of-sequence token.

use std::collections::HashMap;

use crate::text::{bpe_apply, BpeModel, CONTINUATION};

pub const EOS: &str = "<eos>";

#[derive(Debug, Clone)]
pub struct AsrVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    eos: usize,
}

impl AsrVocab {
    /// Collect the pieces the model produces on `words`, plus every single
    /// character in both final and continuation form so unseen words always
    /// segment.
    pub fn build<'a>(model: &BpeModel, words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        let mut seen = HashMap::new();
        let mut push = |t: String, tokens: &mut Vec<String>| {
            if !seen.contains_key(&t) {
                seen.insert(t.clone(), ());
                tokens.push(t);
            }
        };
        let mut chars: Vec<char> = Vec::new();
        for word in words {
            for piece in bpe_apply(model, word) {
                push(piece, &mut tokens);
            }
            chars.extend(word.chars());
        }
        chars.sort_unstable();
        chars.dedup();
        for c in chars {
            push(c.to_string(), &mut tokens);
            push(format!("{c}{CONTINUATION}"), &mut tokens);
        }
        tokens.sort_unstable();
        tokens.push(EOS.to_string());
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let eos = tokens.len() - 1;
        Self { tokens, index, eos }
    }

    /// Vocabulary size including the end-of-sequence token.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Tokenize a transcript; pieces missing from the vocabulary fall back
    /// to per-character pieces, and anything still unknown is dropped with
    /// a warning.
    pub fn encode(&self, model: &BpeModel, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            for piece in bpe_apply(model, word) {
                if let Some(id) = self.id(&piece) {
                    ids.push(id);
                } else {
                    log::warn!("no vocabulary entry for piece {piece:?}");
                }
            }
        }
        ids
    }

    /// Reassemble token ids into words (the inverse of `encode` for
    /// in-vocabulary text).
    pub fn decode_words(&self, ids: &[usize]) -> String {
        let tokens: Vec<String> =
            ids.iter().filter(|&&i| i != self.eos).map(|&i| self.tokens[i].clone()).collect();
        crate::text::bpe_decode_text(&tokens)
    }

    /// One token string per line, in id order.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.tokens {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        use std::io::BufRead;
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        let tokens: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let eos = tokens.iter().position(|t| t == EOS).unwrap_or(tokens.len() - 1);
        Ok(Self { tokens, index, eos })
    }
}
