use std::collections::BTreeMap;

use super::pair::BimodalPair;
use super::tokenize::tokenize_comment;
use super::CorpusError;
use crate::scenarios::SeededRng;

pub const DEFAULT_BIN_WIDTH: usize = 8;

/// Number of comment tokens; 0 when the comment has none.
pub fn comment_length(pair: &BimodalPair) -> usize {
    tokenize_comment(&pair.comment).map(|t| t.len()).unwrap_or(0)
}

pub fn length_bin(len: usize, bin_width: usize) -> usize {
    len / bin_width
}

/// Splits `n` over bins in proportion to `counts` (largest remainder, ties to the lower bin).
fn quotas(counts: &BTreeMap<usize, usize>, n: usize) -> BTreeMap<usize, usize> {
    let total: usize = counts.values().sum();
    let mut out: BTreeMap<usize, usize> = counts.iter().map(|(&b, &c)| (b, n * c / total)).collect();
    let mut rest = n - out.values().sum::<usize>();
    let mut order: Vec<(usize, usize)> = counts.iter().map(|(&b, &c)| (b, n * c % total)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (b, _) in order {
        if rest == 0 {
            break;
        }
        *out.get_mut(&b).unwrap() += 1;
        rest -= 1;
    }
    out
}

/// Draws `n` pairs from `source` so that the comment-length histogram follows
/// `reference`. A bin the source cannot fill borrows from the nearest bin with
/// spare pairs (lower bin on ties).
pub fn length_matched_sample(
    reference: &[BimodalPair],
    source: &[BimodalPair],
    n: usize,
    bin_width: usize,
    seed: u64,
) -> Result<Vec<BimodalPair>, CorpusError> {
    if bin_width == 0 {
        return Err(CorpusError::InvalidArgument("bin_width must be at least 1".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > source.len() {
        return Err(CorpusError::InsufficientSource(format!("need {n} pairs, source has {}", source.len())));
    }
    if reference.is_empty() {
        return Err(CorpusError::InvalidArgument("reference corpus is empty".into()));
    }
    let mut ref_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in reference {
        *ref_counts.entry(length_bin(comment_length(p), bin_width)).or_default() += 1;
    }
    let mut rng = SeededRng::new(seed);
    let mut pools: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in source.iter().enumerate() {
        pools.entry(length_bin(comment_length(p), bin_width)).or_default().push(i);
    }
    for pool in pools.values_mut() {
        rng.shuffle(pool);
    }

    let mut picked = Vec::with_capacity(n);
    let mut shortfall = Vec::new();
    for (bin, quota) in quotas(&ref_counts, n) {
        let pool = pools.entry(bin).or_default();
        let take = quota.min(pool.len());
        picked.extend(pool.drain(..take));
        shortfall.extend(std::iter::repeat(bin).take(quota - take));
    }
    for bin in shortfall {
        let nearest = pools
            .iter()
            .filter(|(_, pool)| !pool.is_empty())
            .map(|(&b, _)| b)
            .min_by_key(|&b| (b.abs_diff(bin), b))
            .ok_or_else(|| CorpusError::InsufficientSource(format!("no pair left for length bin {bin}")))?;
        picked.push(pools.get_mut(&nearest).unwrap().pop().unwrap());
    }
    rng.shuffle(&mut picked);
    Ok(picked.into_iter().map(|i| source[i].clone()).collect())
}
