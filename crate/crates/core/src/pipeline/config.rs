use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::SeqLimits;
use crate::encoder::EncoderConfig;
use crate::losses::{DEFAULT_LAMBDA, DEFAULT_MARGIN, DEFAULT_TAU};

/// Training objective and scoring path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Inliers only, InfoNCE, scored by cosine similarity.
    Cood,
    /// Inliers and outliers, margin losses plus the classification head,
    /// scored by `σ(sim) · p_bc`.
    #[serde(alias = "cood-plus")]
    CoodPlus,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cood => "cood",
            Mode::CoodPlus => "cood_plus",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cood" => Ok(Mode::Cood),
            "cood_plus" | "cood-plus" => Ok(Mode::CoodPlus),
            _ => Err(format!("unknown mode `{s}` (expected cood or cood-plus)")),
        }
    }
}

/// Flat run configuration; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub comment_max_len: usize,
    pub code_max_len: usize,
    pub tau: f64,
    pub margin: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    pub manifest: Option<String>,
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::default();
        let limits = SeqLimits::default();
        RunConfig {
            mode: Mode::Cood,
            embed_dim: enc.embed_dim,
            layers: enc.layers,
            heads: enc.heads,
            ffn_dim: enc.ffn_dim,
            comment_max_len: limits.comment,
            code_max_len: limits.code,
            tau: DEFAULT_TAU,
            margin: DEFAULT_MARGIN,
            lambda: DEFAULT_LAMBDA,
            batch_size: 32,
            epochs: 10,
            lr: 3e-4,
            warmup_frac: 0.10,
            val_frac: 0.10,
            seed: 0,
            manifest: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn limits(&self) -> SeqLimits {
        SeqLimits { comment: self.comment_max_len, code: self.code_max_len }
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            layers: self.layers,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            comment_max_len: self.comment_max_len,
            code_max_len: self.code_max_len,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        self.encoder_config(2).validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) || !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("margin and lambda must be non-negative".into());
        }
        if self.batch_size < 2 || self.epochs == 0 {
            return bad("batch_size must be at least 2 and epochs at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be non-negative, got {}", self.lr));
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad(format!("warmup_frac must lie in (0, 1), got {}", self.warmup_frac));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return bad(format!("val_frac must lie in (0, 1), got {}", self.val_frac));
        }
        Ok(())
    }
}
