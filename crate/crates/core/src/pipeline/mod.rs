//! Training loops, checkpoints, benchmark evaluation and the corrupt-filter-recover
//! code-search experiment.

mod checkpoint;
mod config;
mod eval;
mod model;
mod train;

use std::path::Path;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{Mode, RunConfig};
pub use eval::{
    aggregate_rows, corrupt_pool, evaluate_run, evaluate_scores, search_eval, set_mrr, CorruptedPool, EvalReport,
    ScoreSource,
};
pub use model::{batch_objective, Model};
pub use train::{train_cood, train_cood_plus, train_on, EpochLog, TrainReport};

use crate::autodiff::AutodiffError;
use crate::corpus::{CorpusError, Scenario};
use crate::encoder::EncoderError;
use crate::losses::LossError;
use crate::metrics::MetricsError;
use crate::scenarios::ScenarioError;
use crate::scoring::ScoringError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("benchmark manifest missing: {0}")]
    ManifestMissing(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("benchmark has no test files for scenario `{0}`")]
    ScenarioMissing(Scenario),
    #[error("checkpoint mode {found} does not match requested {expected}")]
    ModeMismatch { expected: Mode, found: Mode },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptPayload(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io(format!("{}: {e}", path.display()))
    }

    /// Stable snake_case tag for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::ManifestMissing(_) => "manifest_missing",
            PipelineError::NonFiniteLoss { .. } => "non_finite_loss",
            PipelineError::ScenarioMissing(_) => "scenario_missing",
            PipelineError::ModeMismatch { .. } => "mode_mismatch",
            PipelineError::BadMagic => "bad_magic",
            PipelineError::VersionUnsupported(_) => "version_unsupported",
            PipelineError::CorruptPayload(_) => "corrupt_payload",
            PipelineError::InvalidConfig(_) => "invalid_config",
            PipelineError::Io(_) => "io",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Scenario(_) => "scenario",
            PipelineError::Encoder(_) => "encoder",
            PipelineError::Loss(_) => "loss",
            PipelineError::Autodiff(_) => "autodiff",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::Scoring(_) => "scoring",
        }
    }
}

/// Worker-thread cap from `COODKIT_THREADS`; 1 when unset or unparsable.
pub fn threads_from_env() -> usize {
    std::env::var("COODKIT_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Loads a benchmark manifest, mapping a missing directory or file to [`PipelineError::ManifestMissing`].
pub fn load_manifest(dir: &Path) -> Result<crate::scenarios::BenchmarkManifest, PipelineError> {
    if !dir.join(crate::scenarios::MANIFEST_FILE).is_file() {
        return Err(PipelineError::ManifestMissing(dir.display().to_string()));
    }
    Ok(crate::scenarios::BenchmarkManifest::load(dir)?)
}
