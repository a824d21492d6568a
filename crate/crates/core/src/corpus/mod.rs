//! Bimodal (comment, code) records: JSONL I/O, tokenization, vocabularies,
//! length-matched sampling and a synthetic two-domain corpus.

mod jsonl;
mod pair;
mod sample;
mod synth;
mod tokenize;
mod vocab;

use std::path::Path;

pub use jsonl::{load_jsonl, parse_pair_line, save_jsonl, to_jsonl_line};
pub use pair::{BimodalPair, Scenario};
pub use sample::{comment_length, length_bin, length_matched_sample, DEFAULT_BIN_WIDTH};
pub use synth::{generate_synthetic_corpus, SynthDomain, SynthSpec, TEMPLATES};
pub use tokenize::{is_punct_token, is_stopword, tokenize_code, tokenize_comment, STOPWORDS};
pub use vocab::{
    build_vocab, encode_pair, encode_tokens, EncodedPair, SeqLimits, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid record: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("insufficient source pairs: {0}")]
    InsufficientSource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        CorpusError::Io { path: path.display().to_string(), message: err.to_string() }
    }
}
