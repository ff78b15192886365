//! Stage orchestration, persistent run state and reports.
//!
//! A run lives in `runs/<run_id>/`. Every stage reads the previous stage's
//! files and the run manifest, writes its own files, and checkpoints the
//! manifest after each sample so a killed run resumes where it stopped.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod config;
pub mod report;
pub mod stages;
pub mod state;

pub use config::{
    EmbeddingConfig, ReportFormat, RunConfig, SampleConfig, SandboxConfig, TransportConfig,
};
pub use report::{
    build_fad_table, build_generation_summary, emit_report, FadRow, GenerationSummary, Report,
};
pub use stages::{sample_id, Pipeline, StageOptions, StageReport};
pub use state::{GenerationRecord, ManifestStore, RunManifest, SampleScore, StageStatus};

use crate::corpus::CorpusError;
use crate::embed::EmbedError;
use crate::gateway::GatewayError;
use crate::metrics::MetricsError;
use crate::prompt::PromptError;
use crate::sandbox::SandboxError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage {stage} needs {missing} to be done first")]
    StageOrderViolation { stage: Stage, missing: Stage },
    #[error("run directory belongs to a different run: {0}")]
    ConfigMismatch(String),
    #[error("stage {stage} stopped with {remaining} samples pending")]
    Interrupted { stage: Stage, remaining: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sampled,
    Prompted,
    Generated,
    Executed,
    Embedded,
    Scored,
    Reported,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Sampled,
        Stage::Prompted,
        Stage::Generated,
        Stage::Executed,
        Stage::Embedded,
        Stage::Scored,
        Stage::Reported,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Sampled => "sampled",
            Stage::Prompted => "prompted",
            Stage::Generated => "generated",
            Stage::Executed => "executed",
            Stage::Embedded => "embedded",
            Stage::Scored => "scored",
            Stage::Reported => "reported",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self).expect("listed");
        i.checked_sub(1).map(|j| Stage::ALL[j])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s:?}")))
    }
}
