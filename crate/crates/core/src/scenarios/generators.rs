use super::rng::SeededRng;
use super::ScenarioError;
use crate::corpus::{is_punct_token, length_matched_sample, tokenize_comment, BimodalPair, Scenario, DEFAULT_BIN_WIDTH};
use crate::minicode::{analyze_scope, lex, splice_identifier};

/// Corpus indices in a seeded order, so candidates are tried reproducibly.
fn visit_order(len: usize, seed: u64, scenario: Scenario) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    SeededRng::substream(seed, &format!("order:{scenario}")).shuffle(&mut order);
    order
}

/// Out-domain outliers: `n` foreign pairs whose comment lengths follow `id_corpus`.
pub fn gen_out_domain(
    id_corpus: &[BimodalPair],
    foreign_corpus: &[BimodalPair],
    n: usize,
    seed: u64,
) -> Result<Vec<BimodalPair>, ScenarioError> {
    let sample = length_matched_sample(id_corpus, foreign_corpus, n, DEFAULT_BIN_WIDTH, seed)?;
    Ok(sample
        .into_iter()
        .map(|p| {
            let source = p.id.clone();
            p.into_outlier(Scenario::OutDomain, &source)
        })
        .collect())
}

/// Misaligned outliers: `n` sampled comments paired with a derangement of their codes.
pub fn gen_misaligned(corpus: &[BimodalPair], n: usize, seed: u64) -> Result<Vec<BimodalPair>, ScenarioError> {
    if n < 2 {
        return Err(ScenarioError::TooFewPairs { n });
    }
    if n > corpus.len() {
        return Err(ScenarioError::InsufficientCorpus(format!("misaligned needs {n} pairs, corpus has {}", corpus.len())));
    }
    let mut rng = SeededRng::substream(seed, "misaligned");
    let picked = rng.sample_indices(corpus.len(), n);
    let mut perm = rng.cyclic_permutation(n);
    // Index derangement can still hand a record identical code text; swap such
    // slots with any partner where both sides end up with foreign code.
    let code = |slot: usize| &corpus[picked[slot]].code;
    let fixed = |perm: &[usize], i: usize| code(perm[i]) == code(i);
    for i in 0..n {
        if !fixed(&perm, i) {
            continue;
        }
        let partner = (0..n).find(|&j| j != i && code(perm[j]) != code(i) && code(perm[i]) != code(j));
        match partner {
            Some(j) => perm.swap(i, j),
            None => return Err(ScenarioError::TooFewPairs { n }),
        }
    }
    Ok((0..n)
        .map(|i| {
            let src = &corpus[picked[i]];
            let donor = &corpus[picked[perm[i]]];
            let mut out = src.clone().into_outlier(Scenario::Misaligned, &src.id);
            out.code = donor.code.clone();
            out.meta.insert("code_source_id".into(), donor.id.clone());
            out
        })
        .collect())
}

/// Shuffles one comment: picks `k` eligible positions holding pairwise distinct
/// tokens and rotates them one step. `None` when fewer than two distinct eligible tokens exist.
pub fn shuffle_comment(comment: &str, ratio: f64, stopwords: &[&str], rng: &mut SeededRng) -> Option<String> {
    let mut tokens = tokenize_comment(comment).ok()?;
    let mut eligible: Vec<usize> = (0..tokens.len())
        .filter(|&i| !stopwords.contains(&tokens[i].as_str()) && !is_punct_token(&tokens[i]))
        .collect();
    let mut distinct: Vec<&str> = eligible.iter().map(|&i| tokens[i].as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return None;
    }
    let k = ((ratio * eligible.len() as f64).round() as usize).max(2).min(distinct.len());
    rng.shuffle(&mut eligible);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for i in eligible {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&c| tokens[c] != tokens[i]) {
            chosen.push(i);
        }
    }
    let moved: Vec<String> = chosen.iter().map(|&i| tokens[i].clone()).collect();
    for (j, &pos) in chosen.iter().enumerate() {
        tokens[pos] = moved[(j + k - 1) % k].clone();
    }
    Some(tokens.join(" "))
}

/// Shuffled-comment outliers from `n` distinct records; code is unchanged.
pub fn gen_shuffled_comment(
    corpus: &[BimodalPair],
    n: usize,
    ratio: f64,
    stopwords: &[&str],
    seed: u64,
) -> Result<Vec<BimodalPair>, ScenarioError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(ScenarioError::InvalidArgument(format!("shuffle ratio {ratio} not in (0, 1]")));
    }
    let mut out = Vec::with_capacity(n);
    for i in visit_order(corpus.len(), seed, Scenario::ShuffledComment) {
        if out.len() == n {
            break;
        }
        let src = &corpus[i];
        let mut rng = SeededRng::substream(seed, &src.id);
        if let Some(comment) = shuffle_comment(&src.comment, ratio, stopwords, &mut rng) {
            let mut p = src.clone().into_outlier(Scenario::ShuffledComment, &src.id);
            p.comment = comment;
            out.push(p);
        }
    }
    if out.len() < n {
        return Err(ScenarioError::InsufficientEligible { needed: n, found: out.len() });
    }
    Ok(out)
}

/// Every legal variable-misuse edit `(use index, replacement)` of a minicode function.
pub fn misuse_candidates(code: &str) -> Vec<(usize, String)> {
    let Ok(tokens) = lex(code) else { return Vec::new() };
    let Ok(report) = analyze_scope(&tokens) else { return Vec::new() };
    let mut out = Vec::new();
    for (name, idx) in &report.uses {
        for cand in report.in_scope_at(*idx) {
            if cand != name {
                out.push((*idx, cand.to_string()));
            }
        }
    }
    out
}

/// Injects one variable misuse, chosen uniformly over all legal edits.
pub fn mutate_code(code: &str, rng: &mut SeededRng) -> Option<String> {
    let cands = misuse_candidates(code);
    if cands.is_empty() {
        return None;
    }
    let (idx, name) = rng.choose(&cands);
    let tokens = lex(code).ok()?;
    splice_identifier(&tokens, *idx, name).ok()
}

/// Buggy-code outliers from `n` distinct mutable records; comments are unchanged.
pub fn gen_buggy_code(corpus: &[BimodalPair], n: usize, seed: u64) -> Result<Vec<BimodalPair>, ScenarioError> {
    let mut out = Vec::with_capacity(n);
    for i in visit_order(corpus.len(), seed, Scenario::BuggyCode) {
        if out.len() == n {
            break;
        }
        let src = &corpus[i];
        let mut rng = SeededRng::substream(seed, &src.id);
        if let Some(code) = mutate_code(&src.code, &mut rng) {
            let mut p = src.clone().into_outlier(Scenario::BuggyCode, &src.id);
            p.code = code;
            out.push(p);
        }
    }
    if out.len() < n {
        return Err(ScenarioError::NoMutableRecords { needed: n, found: out.len() });
    }
    Ok(out)
}

/// Dispatches to the generator for `scenario` with default shuffle settings.
pub fn generate(
    scenario: Scenario,
    corpus: &[BimodalPair],
    foreign: &[BimodalPair],
    n: usize,
    seed: u64,
) -> Result<Vec<BimodalPair>, ScenarioError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    match scenario {
        Scenario::OutDomain => gen_out_domain(corpus, foreign, n, seed),
        Scenario::Misaligned => gen_misaligned(corpus, n, seed),
        Scenario::ShuffledComment => {
            gen_shuffled_comment(corpus, n, super::DEFAULT_SHUFFLE_RATIO, &crate::corpus::STOPWORDS, seed)
        }
        Scenario::BuggyCode => gen_buggy_code(corpus, n, seed),
        Scenario::Id => Err(ScenarioError::InvalidArgument("`id` is not an outlier scenario".into())),
    }
}
