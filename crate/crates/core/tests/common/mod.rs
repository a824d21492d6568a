#![allow(dead_code)]

pub mod gradcases;

use std::path::Path;

use coodkit::corpus::{build_vocab, generate_synthetic_corpus, BimodalPair, SynthDomain, SynthSpec, Vocabulary};
use coodkit::pipeline::{Mode, RunConfig};
use coodkit::scenarios::{assemble_benchmark, BenchmarkDraft, BenchmarkManifest};

pub fn domain_a(n: usize, seed: u64) -> Vec<BimodalPair> {
    generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::a() }, seed)
}

pub fn domain_b(n: usize, seed: u64) -> Vec<BimodalPair> {
    generate_synthetic_corpus(&SynthSpec { n, domain: SynthDomain::b() }, seed)
}

pub fn vocab_for(rows: &[BimodalPair]) -> Vocabulary {
    build_vocab(rows, 1, 4096).unwrap()
}

/// A small, fast encoder for tests that only need the training machinery.
pub fn tiny_config(mode: Mode) -> RunConfig {
    RunConfig {
        mode,
        embed_dim: 16,
        layers: 1,
        heads: 2,
        ffn_dim: 32,
        comment_max_len: 16,
        code_max_len: 40,
        batch_size: 16,
        epochs: 2,
        lr: 1e-3,
        ..RunConfig::default()
    }
}

/// Synthetic benchmark with `n` ID and `n` foreign pairs written under `dir`.
pub fn benchmark(dir: &Path, n: usize, seed: u64, draft: &BenchmarkDraft) -> BenchmarkManifest {
    let mut m = assemble_benchmark(&domain_a(n, seed), &domain_b(n, seed + 1), draft, seed, dir).unwrap();
    m = BenchmarkManifest::load(dir).unwrap_or(m);
    m
}
