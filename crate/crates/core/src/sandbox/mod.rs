//! Turning model replies into audio: code extraction, sandboxed execution,
//! failure classification and WAV validation.

pub mod classify;
pub mod exec;
pub mod extract;
pub mod profile;
pub mod wav;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use classify::{classify_failure, FailureKind, PatternKind, PatternTable};
pub use exec::{execute, ExecRequest, ExecStatus, ExecutionOutcome, Limits, Runner};
pub use extract::{extract_code, ExtractedProgram, ExtractionMode};
pub use profile::TierProfile;
pub use wav::{parse_wave, parse_wave_for, WavError, WaveInfo};

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("model response is empty")]
    EmptyResponse,
    #[error("sandbox setup failed: {0}")]
    Setup(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad failure pattern: {0}")]
    Pattern(String),
}

impl SandboxError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SandboxError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
