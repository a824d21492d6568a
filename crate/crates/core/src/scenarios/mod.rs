//! Outlier generators for the four scenarios and the benchmark assembler.

mod benchmark;
mod generators;
mod rng;

pub use benchmark::{
    assemble_benchmark, BenchmarkDraft, BenchmarkManifest, FileEntry, TestFileEntry, GENERATOR_VERSION, MANIFEST_FILE,
};
pub use generators::{
    gen_buggy_code, gen_misaligned, gen_out_domain, gen_shuffled_comment, generate, misuse_candidates, mutate_code,
    shuffle_comment,
};
pub use rng::{derive_seed, SeededRng};

use crate::corpus::CorpusError;

/// Share of eligible comment tokens a shuffle moves (at least two).
pub const DEFAULT_SHUFFLE_RATIO: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("need at least 2 pairs to misalign, got {n}")]
    TooFewPairs { n: usize },
    #[error("only {found} of {needed} comments can be shuffled")]
    InsufficientEligible { needed: usize, found: usize },
    #[error("only {found} of {needed} records admit a variable misuse")]
    NoMutableRecords { needed: usize, found: usize },
    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
