//! Error types shared across the pipeline stages.

use thiserror::Error;

use crate::document::CollectionId;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("top-level value is {found}, expected an object")]
    NotAnObject { found: &'static str },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("source unavailable: {0}")]
    Unavailable(String),
    #[error("i/o error under {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("coverage curve needs at least two points")]
    TooFewPoints,
    #[error("coverage curve has a degenerate edge-count range")]
    DegenerateRange,
}

#[derive(Debug, Error)]
pub enum EntityError {
    #[error("collection {0} is already part of the partition")]
    DuplicateCollection(CollectionId),
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("modularity is undefined on a graph without edges")]
    NoEdges,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown export format {0:?}")]
    UnknownFormat(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error under {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("result does not belong to this ground truth: {0}")]
    CorpusMismatch(String),
}

/// Top-level pipeline error, tagged with the stage that raised it.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage}: {message}")]
    Source { stage: &'static str, message: String },
    #[error("stage {stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("internal invariant violated in {stage}: {message}")]
    Internal { stage: &'static str, message: String },
}

impl PipelineError {
    /// Process exit code contract: 1 validation, 2 source, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Source { .. } | PipelineError::Stage { .. } => 2,
            PipelineError::Internal { .. } => 3,
        }
    }
}
