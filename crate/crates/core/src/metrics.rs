//! AUROC, FPR at 95% TPR, mean reciprocal rank and seed aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Scenario;
use crate::scoring::{calibrate_threshold, score_cl, ScoringError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("score set is empty")]
    EmptySet,
    #[error("non-finite score")]
    NonFinite,
    #[error("gold index {gold} missing from pool of {pool} (query {query})")]
    GoldMissing { query: usize, gold: usize, pool: usize },
    #[error("rows mix scenarios `{0}` and `{1}`")]
    MismatchedScenario(Scenario, Scenario),
    #[error("seed averaging needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{0}")]
    Io(String),
}

fn check(scores: &[f64]) -> Result<(), MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

/// Probability that an inlier outscores an outlier, ties counting one half.
///
/// Mann-Whitney U from mid-ranks, kept in doubled integer form so the result
/// is exactly `(2·wins + ties) / (2·n_id·n_ood)`.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64, MetricsError> {
    check(id_scores)?;
    check(ood_scores)?;
    let mut all: Vec<(f64, bool)> =
        id_scores.iter().map(|&s| (s, true)).chain(ood_scores.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Doubled mid-rank of a tie block covering 1-based ranks lo..=hi is lo + hi.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let ids = all[i..=j].iter().filter(|x| x.1).count() as u128;
        rank_sum2 += ids * (i as u128 + 1 + j as u128 + 1);
        i = j + 1;
    }
    let (n_id, n_ood) = (id_scores.len() as u128, ood_scores.len() as u128);
    let u2 = rank_sum2 - n_id * (n_id + 1);
    Ok(u2 as f64 / (2 * n_id * n_ood) as f64)
}

/// Fraction of outliers scoring at or above the 95%-retention inlier threshold.
pub fn fpr_at_95_tpr(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64, MetricsError> {
    fpr_at_tpr(id_scores, ood_scores, 0.95)
}

pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr: f64) -> Result<f64, MetricsError> {
    check(ood_scores)?;
    let t = calibrate_threshold(id_scores, tpr)?;
    Ok(ood_scores.iter().filter(|&&s| s >= t).count() as f64 / ood_scores.len() as f64)
}

/// 1-based rank of `gold` among `scores` sorted descending; every other entry
/// scoring at least as high ranks ahead of it.
pub fn gold_rank(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    1 + scores.iter().enumerate().filter(|&(j, &s)| j != gold && s >= g).count()
}

/// Mean reciprocal rank of each query's gold code under cosine similarity.
pub fn mrr(queries: &[Vec<f64>], gold: &[usize], pool: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if queries.is_empty() || queries.len() != gold.len() {
        return Err(MetricsError::EmptySet);
    }
    let mut total = 0.0;
    for (qi, (q, &g)) in queries.iter().zip(gold).enumerate() {
        if g >= pool.len() {
            return Err(MetricsError::GoldMissing { query: qi, gold: g, pool: pool.len() });
        }
        let scores: Vec<f64> = pool.iter().map(|c| score_cl(q, c)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        total += 1.0 / gold_rank(&scores, g) as f64;
    }
    Ok(total / queries.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub seed: usize,
    pub auroc: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: Scenario,
    pub n_seeds: usize,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub fpr95_mean: f64,
    pub fpr95_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchEvalRow {
    pub dataset: String,
    pub mrr: f64,
    pub n_queries: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of AUROC and FPR95 over seed rows of one scenario.
pub fn seed_average(rows: &[MetricsRow]) -> Result<AggregateRow, MetricsError> {
    if rows.len() < 2 {
        return Err(MetricsError::TooFewRows(rows.len()));
    }
    let scenario = rows[0].scenario;
    if let Some(r) = rows.iter().find(|r| r.scenario != scenario) {
        return Err(MetricsError::MismatchedScenario(scenario, r.scenario));
    }
    let (auroc_mean, auroc_std) = mean_std(&rows.iter().map(|r| r.auroc).collect::<Vec<_>>());
    let (fpr95_mean, fpr95_std) = mean_std(&rows.iter().map(|r| r.fpr95).collect::<Vec<_>>());
    Ok(AggregateRow { scenario, n_seeds: rows.len(), auroc_mean, auroc_std, fpr95_mean, fpr95_std })
}

/// Writes serializable rows with a header derived from their field names.
pub fn write_csv<R: Serialize>(rows: &[R], path: &Path) -> Result<(), MetricsError> {
    let io = |e: csv::Error| MetricsError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| MetricsError::Io(e.to_string()))
}
