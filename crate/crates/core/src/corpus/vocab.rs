use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pair::BimodalPair;
use super::tokenize::{tokenize_code, tokenize_comment};
use super::CorpusError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token-to-index table; index 0 is padding and index 1 the unknown token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_freq: usize,
    max_size: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabFile {
    tokens: Vec<String>,
    min_freq: usize,
    max_size: usize,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabFile) -> Result<Self, Self::Error> {
        if f.tokens.len() < 2 || f.tokens[0] != PAD_TOKEN || f.tokens[1] != UNK_TOKEN {
            return Err(format!("vocabulary must start with {PAD_TOKEN}, {UNK_TOKEN}"));
        }
        if f.tokens.len() > f.max_size.max(2) {
            return Err(format!("{} tokens exceed max_size {}", f.tokens.len(), f.max_size));
        }
        let mut index = HashMap::with_capacity(f.tokens.len());
        for (i, t) in f.tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate token `{t}`"));
            }
        }
        Ok(Vocabulary { tokens: f.tokens, index, min_freq: f.min_freq, max_size: f.max_size })
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { tokens: v.tokens, min_freq: v.min_freq, max_size: v.max_size }
    }
}

impl Vocabulary {
    /// Counts tokens over `streams`; keeps those seen at least `min_freq` times,
    /// most frequent first with lexicographic tie-break, capped at `max_size` entries
    /// including PAD and UNK.
    pub fn build<I, S, T>(streams: I, min_freq: usize, max_size: usize) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        if max_size < 2 {
            return Err(CorpusError::InvalidArgument(format!("max_size {max_size} < 2")));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for stream in streams {
            any = true;
            for tok in stream {
                *counts.entry(tok.as_ref().to_string()).or_default() += 1;
            }
        }
        if !any {
            return Err(CorpusError::EmptyCorpus);
        }
        counts.remove(PAD_TOKEN);
        counts.remove(UNK_TOKEN);
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        let tokens = [PAD_TOKEN.to_string(), UNK_TOKEN.to_string()]
            .into_iter()
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Ok(VocabFile { tokens, min_freq, max_size }.try_into().expect("built vocabulary is well formed"))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, CorpusError> {
        serde_json::from_str(s).map_err(|e| CorpusError::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let s = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Vocabulary over the comment and code tokens of a corpus.
pub fn build_vocab(corpus: &[BimodalPair], min_freq: usize, max_size: usize) -> Result<Vocabulary, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut streams = Vec::with_capacity(corpus.len() * 2);
    for p in corpus {
        streams.push(tokenize_comment(&p.comment)?);
        streams.push(tokenize_code(&p.code)?);
    }
    Vocabulary::build(streams, min_freq, max_size)
}

/// Per-modality sequence budgets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqLimits {
    pub comment: usize,
    pub code: usize,
}

impl Default for SeqLimits {
    fn default() -> Self {
        SeqLimits { comment: 32, code: 64 }
    }
}

/// Fixed-length id sequences; positions at or past the true length hold PAD.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub comment_ids: Vec<u32>,
    pub code_ids: Vec<u32>,
    pub comment_len: usize,
    pub code_len: usize,
}

impl EncodedPair {
    pub fn comment(&self) -> &[u32] {
        &self.comment_ids[..self.comment_len]
    }

    pub fn code(&self) -> &[u32] {
        &self.code_ids[..self.code_len]
    }
}

pub fn encode_tokens(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> (Vec<u32>, usize) {
    let len = tokens.len().min(max_len);
    let mut ids: Vec<u32> = tokens[..len].iter().map(|t| vocab.id_or_unk(t)).collect();
    ids.resize(max_len, PAD);
    (ids, len)
}

pub fn encode_pair(pair: &BimodalPair, vocab: &Vocabulary, limits: SeqLimits) -> Result<EncodedPair, CorpusError> {
    if limits.comment == 0 || limits.code == 0 {
        return Err(CorpusError::InvalidArgument("max_len must be at least 1".into()));
    }
    let (comment_ids, comment_len) = encode_tokens(&tokenize_comment(&pair.comment)?, vocab, limits.comment);
    let (code_ids, code_len) = encode_tokens(&tokenize_code(&pair.code)?, vocab, limits.code);
    Ok(EncodedPair { comment_ids, code_ids, comment_len, code_len })
}
