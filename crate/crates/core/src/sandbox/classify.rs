use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SandboxError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "module", rename_all = "snake_case")]
pub enum FailureKind {
    MissingModule(String),
    SyntaxError,
    RuntimeError,
    Timeout,
    NoArtifact,
    ResourceLimit,
}

impl FailureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FailureKind::MissingModule(_) => "missing_module",
            FailureKind::SyntaxError => "syntax_error",
            FailureKind::RuntimeError => "runtime_error",
            FailureKind::Timeout => "timeout",
            FailureKind::NoArtifact => "no_artifact",
            FailureKind::ResourceLimit => "resource_limit",
        }
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureKind::MissingModule(m) => write!(f, "missing_module({m})"),
            other => f.write_str(other.label()),
        }
    }
}

/// What a matching pattern reports. `MissingModule` takes the module name
/// from the first capture group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    MissingModule,
    SyntaxError,
    RuntimeError,
    Timeout,
    NoArtifact,
    ResourceLimit,
}

#[derive(Debug, Clone)]
pub struct FailurePattern {
    pub regex: Regex,
    pub kind: PatternKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct PatternRow {
    regex: String,
    kind: PatternKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct PatternFile {
    #[serde(rename = "pattern")]
    patterns: Vec<PatternRow>,
}

#[derive(Debug, Clone)]
pub struct PatternTable {
    pub patterns: Vec<FailurePattern>,
}

impl PatternTable {
    pub fn new(rows: &[(&str, PatternKind)]) -> Result<Self, SandboxError> {
        let patterns = rows
            .iter()
            .map(|(re, kind)| {
                Ok(FailurePattern {
                    regex: Regex::new(re).map_err(|e| SandboxError::Pattern(e.to_string()))?,
                    kind: *kind,
                })
            })
            .collect::<Result<_, SandboxError>>()?;
        Ok(PatternTable { patterns })
    }

    /// Diagnostics emitted by common interpreters.
    pub fn defaults() -> Self {
        PatternTable::new(&[
            (r"No module named '([^']+)'", PatternKind::MissingModule),
            (r"\b(?:SyntaxError|IndentationError|TabError)\b", PatternKind::SyntaxError),
            (r"\bMemoryError\b", PatternKind::ResourceLimit),
        ])
        .expect("default patterns compile")
    }

    /// Reads a table from TOML (`[[pattern]]` rows) or, for `.json` files, a
    /// JSON object with a `pattern` array. Each row has `regex` and `kind`.
    pub fn load(path: &Path) -> Result<Self, SandboxError> {
        let text = std::fs::read_to_string(path).map_err(|e| SandboxError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let file: PatternFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| SandboxError::Pattern(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| SandboxError::Pattern(e.to_string()))?
        };
        let rows: Vec<(&str, PatternKind)> = file
            .patterns
            .iter()
            .map(|r| (r.regex.as_str(), r.kind))
            .collect();
        PatternTable::new(&rows)
    }
}

/// Maps a finished run to a failure kind. The first matching pattern wins;
/// otherwise a nonzero exit is a runtime error and a clean exit without a
/// usable artifact is `NoArtifact`.
pub fn classify_failure(exit_code: i32, stderr: &str, patterns: &PatternTable) -> FailureKind {
    for p in &patterns.patterns {
        if let Some(caps) = p.regex.captures(stderr) {
            return match p.kind {
                PatternKind::MissingModule => FailureKind::MissingModule(
                    caps.get(1)
                        .map(|m| m.as_str().to_string())
                        .unwrap_or_default(),
                ),
                PatternKind::SyntaxError => FailureKind::SyntaxError,
                PatternKind::RuntimeError => FailureKind::RuntimeError,
                PatternKind::Timeout => FailureKind::Timeout,
                PatternKind::NoArtifact => FailureKind::NoArtifact,
                PatternKind::ResourceLimit => FailureKind::ResourceLimit,
            };
        }
    }
    if exit_code != 0 {
        FailureKind::RuntimeError
    } else {
        FailureKind::NoArtifact
    }
}
