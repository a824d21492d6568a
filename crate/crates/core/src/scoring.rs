//! Per-pair inlier scores, fixed-retention thresholds and filtering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::corpus::Scenario;

pub const DEFAULT_RETENTION: f64 = 0.95;
pub const MIN_CALIBRATION: usize = 20;
const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("threshold calibration needs at least {MIN_CALIBRATION} scores, got {0}")]
    TooFewScores(usize),
    #[error("retention must lie in (0, 1), got {0}")]
    BadRetention(f64),
    #[error("non-finite score")]
    NonFinite,
    #[error("{0}")]
    Io(String),
}

/// One scored pair. `p_bc` is absent for similarity-only models, in which case
/// `p_id == sim`; otherwise `p_id == p_cl_star * p_bc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub sim: f64,
    pub p_cl_star: f64,
    pub p_bc: Option<f64>,
    pub p_id: f64,
    pub label: u8,
    pub scenario: Scenario,
}

impl ScoredRecord {
    pub fn new(id: String, sim: f64, p_bc: Option<f64>, label: u8, scenario: Scenario) -> Self {
        let p_id = match p_bc {
            Some(p) => score_combined(sim, p),
            None => sim,
        };
        ScoredRecord { id, sim, p_cl_star: sigmoid(sim), p_bc, p_id, label, scenario }
    }
}

/// Cosine similarity; norms are floored at a tiny epsilon so zero vectors score 0.
pub fn score_cl(vt: &[f64], vc: &[f64]) -> f64 {
    let dot: f64 = vt.iter().zip(vc).map(|(a, b)| a * b).sum();
    let na = vt.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = vc.iter().map(|b| b * b).sum::<f64>().sqrt();
    dot / (na.max(NORM_EPS) * nb.max(NORM_EPS))
}

/// `σ(sim) · p_bc`.
pub fn score_combined(sim: f64, p_bc: f64) -> f64 {
    sigmoid(sim) * p_bc
}

/// Largest softmax probability of `logits`.
pub fn score_msp(logits: &[f64]) -> f64 {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|&l| (l - mx).exp()).sum();
    1.0 / total
}

/// The threshold `σ_t` keeping the `⌈retention·n⌉` highest calibration scores:
/// the smallest value such that at least that fraction scores `≥ σ_t`.
pub fn calibrate_threshold(scores: &[f64], retention: f64) -> Result<f64, ScoringError> {
    let n = scores.len();
    if n < MIN_CALIBRATION {
        return Err(ScoringError::TooFewScores(n));
    }
    if !(retention > 0.0 && retention < 1.0) {
        return Err(ScoringError::BadRetention(retention));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ScoringError::NonFinite);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    // The tolerance keeps 0.95 * 100 from rounding up to 96.
    let keep = ((retention * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[n - keep])
}

/// Records scoring at least `threshold`, in input order.
pub fn filter(records: &[ScoredRecord], threshold: f64) -> Vec<ScoredRecord> {
    records.iter().filter(|r| r.p_id >= threshold).cloned().collect()
}

pub fn write_scores_csv(records: &[ScoredRecord], path: &Path) -> Result<(), ScoringError> {
    let io = |e: csv::Error| ScoringError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["id", "sim", "p_cl_star", "p_bc", "p_id", "label", "scenario"]).map_err(io)?;
    for r in records {
        let p_bc = r.p_bc.map(|p| p.to_string()).unwrap_or_default();
        w.write_record([
            r.id.clone(),
            r.sim.to_string(),
            r.p_cl_star.to_string(),
            p_bc,
            r.p_id.to_string(),
            r.label.to_string(),
            r.scenario.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ScoringError::Io(e.to_string()))
}
