//! Text frontends: the character vocabulary used for synthesis input and
//! byte-pair-encoding subwords for the recognizer labels.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown symbol id {0}")]
    UnknownSymbol(usize),
    #[error("bpe model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TextError>;

/// End-of-sequence marker appended to every synthesis input.
pub const END_TOKEN: char = '~';

/// Lowercase letters, space, apostrophe and the end token, in a fixed order.
#[derive(Debug, Clone)]
pub struct CharVocab {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for CharVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl CharVocab {
    pub fn new() -> Self {
        let mut symbols: Vec<char> = ('a'..='z').collect();
        symbols.push(' ');
        symbols.push('\'');
        symbols.push(END_TOKEN);
        let index = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { symbols, index }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: usize) -> Result<char> {
        self.symbols.get(id).copied().ok_or(TextError::UnknownSymbol(id))
    }

    pub fn end_id(&self) -> usize {
        self.index[&END_TOKEN]
    }

    /// Lowercase, drop anything outside the vocabulary (with a warning), and
    /// terminate with the end token. Already-normalized text is a fixed
    /// point.
    pub fn normalize_text(&self, s: &str) -> String {
        let mut out = String::with_capacity(s.len() + 1);
        for c in s.chars().flat_map(char::to_lowercase) {
            if c == END_TOKEN {
                continue; // re-appended below
            }
            if self.index.contains_key(&c) {
                out.push(c);
            } else {
                log::warn!("dropping out-of-vocabulary character {c:?}");
            }
        }
        out.push(END_TOKEN);
        out
    }

    pub fn encode(&self, normalized: &str) -> Vec<usize> {
        normalized.chars().filter_map(|c| self.id(c)).collect()
    }
}

/// Continuation marker on non-final word pieces ("@@"-style convention).
pub const CONTINUATION: &str = "@@";

/// Ordered merge list learned from a word-frequency table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
}

impl BpeModel {
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn n_merges(&self) -> usize {
        self.merges.len()
    }

    /// Model restricted to its first `n` merges.
    pub fn truncated(&self, n: usize) -> BpeModel {
        BpeModel { merges: self.merges[..n.min(self.merges.len())].to_vec() }
    }

    /// One merge per line, the two symbols separated by a space.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (a, b) in &self.merges {
            writeln!(out, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut merges = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            match (parts.next(), parts.next()) {
                (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()));
                }
                _ => return Err(TextError::ModelFile(format!("bad merge line {line:?}"))),
            }
        }
        Ok(Self { merges })
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    word.chars().map(String::from).collect()
}

/// Learn `n_merges` merges greedily: repeatedly merge the most frequent
/// adjacent symbol pair, breaking ties lexicographically. Stops early when
/// no pair occurs anymore.
pub fn bpe_learn(corpus: &HashMap<String, usize>, n_merges: usize) -> Result<BpeModel> {
    if corpus.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let mut words: Vec<(Vec<String>, usize)> = {
        let mut entries: Vec<(&String, &usize)> = corpus.iter().collect();
        entries.sort(); // deterministic iteration regardless of hash order
        entries.into_iter().map(|(w, &f)| (word_symbols(w), f)).collect()
    };

    let mut merges = Vec::with_capacity(n_merges);
    for _ in 0..n_merges {
        let mut counts: HashMap<(String, String), usize> = HashMap::new();
        for (symbols, freq) in &words {
            for pair in symbols.windows(2) {
                *counts.entry((pair[0].clone(), pair[1].clone())).or_default() += freq;
            }
        }
        let Some(best) = counts
            .into_iter()
            .map(|(pair, count)| (count, std::cmp::Reverse(pair)))
            .max()
            .map(|(_, std::cmp::Reverse(pair))| pair)
        else {
            break;
        };
        for (symbols, _) in &mut words {
            merge_in_place(symbols, &best);
        }
        merges.push(best);
    }
    Ok(BpeModel { merges })
}

fn merge_in_place(symbols: &mut Vec<String>, pair: &(String, String)) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == pair.0 && symbols[i + 1] == pair.1 {
            let merged = format!("{}{}", pair.0, pair.1);
            symbols[i] = merged;
            symbols.remove(i + 1);
        } else {
            i += 1;
        }
    }
}

/// Split a word into subword tokens by replaying the merges in learned
/// order. Non-final pieces carry the continuation marker.
pub fn bpe_apply(model: &BpeModel, word: &str) -> Vec<String> {
    if word.is_empty() {
        return Vec::new();
    }
    let mut symbols = word_symbols(word);
    for pair in &model.merges {
        merge_in_place(&mut symbols, pair);
    }
    let last = symbols.len() - 1;
    symbols
        .into_iter()
        .enumerate()
        .map(|(i, s)| if i < last { format!("{s}{CONTINUATION}") } else { s })
        .collect()
}

/// Invert [`bpe_apply`]: strip continuation markers and join.
pub fn bpe_decode(tokens: &[String]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(t.strip_suffix(CONTINUATION).unwrap_or(t));
    }
    out
}

/// Tokenize a whitespace-separated transcript word by word.
pub fn bpe_apply_text(model: &BpeModel, text: &str) -> Vec<String> {
    text.split_whitespace().flat_map(|w| bpe_apply(model, w)).collect()
}

/// Reassemble a transcript: a token without the continuation marker ends a
/// word.
pub fn bpe_decode_text(tokens: &[String]) -> String {
    let mut words = Vec::new();
    let mut current = String::new();
    for t in tokens {
        match t.strip_suffix(CONTINUATION) {
            Some(body) => current.push_str(body),
            None => {
                current.push_str(t);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words.join(" ")
}
