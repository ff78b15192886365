//! Running one extracted program in its own working directory.
//!
//! Isolation is process-level only: a fresh working directory, a scrubbed
//! environment, a wall-clock limit and a cap on captured output. Network
//! access is not blocked here; confine the runner at the OS level when that
//! matters.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;
use walkdir::WalkDir;

use super::classify::{classify_failure, FailureKind, PatternTable};
use super::extract::ExtractedProgram;
use super::profile::TierProfile;
use super::wav::{parse_wave_for, WaveInfo};
use super::SandboxError;

pub const STDERR_EXCERPT_BYTES: usize = 4096;
const POLL: Duration = Duration::from_millis(25);

/// How to invoke the interpreter. `{script_path}` in `command` is replaced by
/// the script's path; without it the path is appended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Runner {
    pub command: String,
    #[serde(default = "default_script_name")]
    pub script_name: String,
    /// Host variables passed through the scrubbed environment.
    #[serde(default)]
    pub pass_env: Vec<String>,
}

fn default_script_name() -> String {
    "main.py".to_string()
}

impl Runner {
    pub fn new(command: impl Into<String>) -> Self {
        Runner {
            command: command.into(),
            script_name: default_script_name(),
            pass_env: Vec::new(),
        }
    }

    fn argv(&self, script: &Path) -> Result<Vec<String>, SandboxError> {
        let script = script.display().to_string();
        let mut saw_slot = false;
        let mut argv: Vec<String> = self
            .command
            .split_whitespace()
            .map(|tok| {
                if tok.contains("{script_path}") {
                    saw_slot = true;
                    tok.replace("{script_path}", &script)
                } else {
                    tok.to_string()
                }
            })
            .collect();
        if argv.is_empty() {
            return Err(SandboxError::Setup("runner command is empty".into()));
        }
        if !saw_slot {
            argv.push(script);
        }
        Ok(argv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub timeout: Duration,
    pub max_output_bytes: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: Duration::from_secs(60),
            max_output_bytes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub sample_id: String,
    pub status: ExecStatus,
    pub failure_kind: Option<FailureKind>,
    /// `-1` when the process was killed or ended by a signal.
    pub exit_code: i32,
    pub stderr_excerpt: String,
    pub wall_time: f64,
    /// Paths are relative to the working directory.
    pub artifacts: Vec<WaveInfo>,
    pub selected_artifact: Option<PathBuf>,
    /// WAV files that could not be parsed, with the reason.
    #[serde(default)]
    pub unreadable_artifacts: Vec<(PathBuf, String)>,
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        self.status == ExecStatus::Success
    }

    pub fn selected(&self) -> Option<&WaveInfo> {
        let sel = self.selected_artifact.as_ref()?;
        self.artifacts.iter().find(|a| &a.path == sel)
    }
}

/// Per-run knobs that are not part of the program itself.
#[derive(Debug, Clone)]
pub struct ExecRequest<'a> {
    pub runner: &'a Runner,
    pub profile: &'a TierProfile,
    pub limits: Limits,
    pub patterns: &'a PatternTable,
    /// File stem the prompt asked for (e.g. the sound id); matched
    /// case-insensitively.
    pub preferred_stem: Option<&'a str>,
}

/// Writes `program` into `workdir` (which must be absent or empty), runs it,
/// and collects WAV artifacts. Program-level failures are reported in the
/// outcome; only problems preparing the sandbox are errors.
pub fn execute(
    program: &ExtractedProgram,
    req: &ExecRequest<'_>,
    workdir: &Path,
) -> Result<ExecutionOutcome, SandboxError> {
    prepare_workdir(workdir)?;
    let workdir = workdir
        .canonicalize()
        .map_err(|e| SandboxError::io(workdir, e))?;
    let script = workdir.join(&req.runner.script_name);
    fs::write(&script, &program.source_text).map_err(|e| SandboxError::io(&script, e))?;
    let stdout_path = workdir.join("stdout.log");
    let stderr_path = workdir.join("stderr.log");
    let stdout = File::create(&stdout_path).map_err(|e| SandboxError::io(&stdout_path, e))?;
    let stderr = File::create(&stderr_path).map_err(|e| SandboxError::io(&stderr_path, e))?;

    let argv = req.runner.argv(&script)?;
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .current_dir(&workdir)
        .env_clear()
        .env("HOME", &workdir)
        .env("TMPDIR", &workdir)
        .env("LANG", "C.UTF-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONUNBUFFERED", "1")
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr);
    if let Some(path) = std::env::var_os("PATH") {
        cmd.env("PATH", path);
    }
    for key in &req.runner.pass_env {
        if let Some(v) = std::env::var_os(key) {
            cmd.env(key, v);
        }
    }

    let started = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| SandboxError::Setup(format!("cannot start {:?}: {e}", argv[0])))?;
    let mut forced: Option<FailureKind> = None;
    let status = loop {
        match child.wait_timeout(POLL).map_err(|e| SandboxError::io(&workdir, e))? {
            Some(status) => break Some(status),
            None => {
                if started.elapsed() >= req.limits.timeout {
                    forced = Some(FailureKind::Timeout);
                } else if output_size(&stdout_path) + output_size(&stderr_path)
                    > req.limits.max_output_bytes
                {
                    forced = Some(FailureKind::ResourceLimit);
                }
                if forced.is_some() {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
            }
        }
    };
    let wall_time = started.elapsed().as_secs_f64();
    let exit_code = status.and_then(|s| s.code()).unwrap_or(-1);
    let stderr_excerpt = tail(&stderr_path, STDERR_EXCERPT_BYTES);

    let (artifacts, unreadable_artifacts) = collect_artifacts(&workdir, req.profile);
    let selected_artifact = select_artifact(&artifacts, req.preferred_stem);
    let has_valid = selected_artifact.is_some();
    let failure_kind = match forced {
        Some(kind) => Some(kind),
        None if exit_code == 0 && has_valid => None,
        None => Some(classify_failure(exit_code, &stderr_excerpt, req.patterns)),
    };
    Ok(ExecutionOutcome {
        sample_id: program.sample_id.clone(),
        status: if failure_kind.is_none() {
            ExecStatus::Success
        } else {
            ExecStatus::Failure
        },
        failure_kind,
        exit_code,
        stderr_excerpt,
        wall_time,
        artifacts,
        selected_artifact,
        unreadable_artifacts,
    })
}

fn prepare_workdir(dir: &Path) -> Result<(), SandboxError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| SandboxError::io(dir, e))?;
        if entries.next().is_some() {
            return Err(SandboxError::Setup(format!(
                "working directory {} is not empty",
                dir.display()
            )));
        }
        Ok(())
    } else {
        fs::create_dir_all(dir).map_err(|e| SandboxError::io(dir, e))
    }
}

fn output_size(path: &Path) -> u64 {
    fs::metadata(path).map(|m| m.len()).unwrap_or(0)
}

fn tail(path: &Path, max: usize) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = output_size(path);
    let start = len.saturating_sub(max as u64);
    if f.seek(SeekFrom::Start(start)).is_err() {
        return String::new();
    }
    let mut buf = Vec::with_capacity(max);
    let _ = f.take(max as u64).read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}

fn collect_artifacts(workdir: &Path, profile: &TierProfile) -> (Vec<WaveInfo>, Vec<(PathBuf, String)>) {
    let mut found: Vec<PathBuf> = WalkDir::new(workdir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    found.sort();
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for path in found {
        let rel = path.strip_prefix(workdir).unwrap_or(&path).to_path_buf();
        match parse_wave_for(&path, profile) {
            Ok(mut info) => {
                info.path = rel;
                ok.push(info);
            }
            Err(e) => bad.push((rel, e.to_string())),
        }
    }
    (ok, bad)
}

/// Prefers the valid artifact named after the requested stem, then the
/// longest valid one (ties broken by path order).
pub fn select_artifact(artifacts: &[WaveInfo], preferred_stem: Option<&str>) -> Option<PathBuf> {
    let valid = artifacts.iter().filter(|a| a.valid_for_tier);
    if let Some(stem) = preferred_stem {
        let hit = valid.clone().find(|a| {
            a.path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.eq_ignore_ascii_case(stem))
        });
        if let Some(a) = hit {
            return Some(a.path.clone());
        }
    }
    let mut best: Option<&WaveInfo> = None;
    for a in valid {
        let better = match best {
            None => true,
            Some(b) => (a.frame_count * a.channels as u64 * a.bit_depth as u64)
                > (b.frame_count * b.channels as u64 * b.bit_depth as u64),
        };
        if better {
            best = Some(a);
        }
    }
    best.map(|a| a.path.clone())
}
