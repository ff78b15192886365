//! Persistent run state: `manifest.json` and its single writer.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::corpus::Tier;
use crate::gateway::ExchangeStatus;
use crate::metrics::{FadResult, ForcedChoiceResult};
use crate::prompt::Method;
use crate::sandbox::{ExecStatus, FailureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Done,
}

/// One sample's way through the pipeline. Paths are relative to the run
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub sample_id: String,
    /// Sound id, class label or word the sample was generated for.
    pub target_id: String,
    pub index: usize,
    /// Reporting group; the instrument for notes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Last stage this sample finished.
    pub reached: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_at: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_status: Option<ExchangeStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_status: Option<ExecStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<FailureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fad: Option<FadResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<ForcedChoiceResult>,
}

impl GenerationRecord {
    pub fn new(sample_id: impl Into<String>, target_id: impl Into<String>, index: usize) -> Self {
        GenerationRecord {
            sample_id: sample_id.into(),
            target_id: target_id.into(),
            index,
            group: None,
            reached: Stage::Sampled,
            failed_at: None,
            error: None,
            prompt: None,
            response: None,
            exchange_status: None,
            program: None,
            outcome: None,
            exec_status: None,
            failure_kind: None,
            artifact: None,
            score: None,
            fad: None,
            choice: None,
        }
    }

    /// Execution produced a valid artifact.
    pub fn generated(&self) -> bool {
        self.exec_status == Some(ExecStatus::Success)
    }

    /// Still needs `stage`: not failed and finished exactly the stage before.
    pub fn pending_for(&self, stage: Stage) -> bool {
        self.failed_at.is_none() && Some(self.reached) == stage.previous()
    }

    pub fn fail(&mut self, stage: Stage, reason: impl Into<String>) {
        self.reached = stage;
        self.failed_at = Some(stage);
        self.error = Some(reason.into());
    }

    /// Forgets everything produced by `stage` and later ones.
    pub fn reset_from(&mut self, stage: Stage) {
        if self.failed_at.is_some_and(|f| f >= stage) {
            self.failed_at = None;
            self.error = None;
        }
        if self.reached >= stage {
            self.reached = stage.previous().unwrap_or(Stage::Sampled);
        }
        if stage <= Stage::Prompted {
            self.prompt = None;
        }
        if stage <= Stage::Generated {
            self.response = None;
            self.exchange_status = None;
        }
        if stage <= Stage::Executed {
            self.program = None;
            self.outcome = None;
            self.exec_status = None;
            self.failure_kind = None;
            self.artifact = None;
        }
        if stage <= Stage::Scored {
            self.score = None;
            self.fad = None;
            self.choice = None;
        }
    }
}

/// Score file written per sample under `scores/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fad: Option<FadResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<ForcedChoiceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tier: Tier,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub seed: u64,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub samples: Vec<GenerationRecord>,
    /// Per-group FAD when scoring pools whole groups.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub group_fad: BTreeMap<String, FadResult>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, tier: Tier, method: Method, endpoint: Option<String>, seed: u64) -> Self {
        RunManifest {
            run_id: run_id.into(),
            tier,
            method,
            endpoint,
            seed,
            stages: Stage::ALL.iter().map(|s| (*s, StageStatus::Pending)).collect(),
            samples: Vec::new(),
            group_fad: BTreeMap::new(),
        }
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        self.stages.get(&stage) == Some(&StageStatus::Done)
    }

    pub fn pending(&self, stage: Stage) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].pending_for(stage))
            .collect()
    }

    /// Marks `stage` and all later stages pending and rewinds samples.
    pub fn reset_from(&mut self, stage: Stage) {
        for (s, status) in self.stages.iter_mut() {
            if *s >= stage {
                *status = StageStatus::Pending;
            }
        }
        if stage == Stage::Sampled {
            self.samples.clear();
        } else {
            for r in &mut self.samples {
                r.reset_from(stage);
            }
        }
        if stage <= Stage::Scored {
            self.group_fad.clear();
        }
    }
}

/// Serialized access to a run manifest; every change is written through
/// to disk atomically.
#[derive(Debug)]
pub struct ManifestStore {
    path: PathBuf,
    inner: Mutex<RunManifest>,
}

impl ManifestStore {
    pub fn create(path: &Path, manifest: RunManifest) -> Result<Self, PipelineError> {
        let store = ManifestStore {
            path: path.to_path_buf(),
            inner: Mutex::new(manifest),
        };
        store.save(&store.inner.lock())?;
        Ok(store)
    }

    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let manifest = serde_json::from_str(&text).map_err(|source| PipelineError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ManifestStore {
            path: path.to_path_buf(),
            inner: Mutex::new(manifest),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> RunManifest {
        self.inner.lock().clone()
    }

    /// Applies `f` and checkpoints the result.
    pub fn update<R>(&self, f: impl FnOnce(&mut RunManifest) -> R) -> Result<R, PipelineError> {
        let mut guard = self.inner.lock();
        let out = f(&mut guard);
        self.save(&guard)?;
        Ok(out)
    }

    fn save(&self, manifest: &RunManifest) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        text.push('\n');
        let tmp = self.path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| PipelineError::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| PipelineError::io(&self.path, e))
    }
}
