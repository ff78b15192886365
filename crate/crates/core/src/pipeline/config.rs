//! Run configuration, read from TOML. Relative paths resolve against the
//! directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Tier;
use crate::embed::ProviderConfig;
use crate::gateway::{ModelEndpoint, TransportMode};
use crate::metrics::{FadMode, DEFAULT_EPS};
use crate::prompt::Method;
use crate::sandbox::{Limits, Runner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_runs_dir")]
    pub runs_dir: PathBuf,
    #[serde(default = "default_tier")]
    pub tier: Tier,
    /// Defaults to the tier's standard template.
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sample: SampleConfig,
    /// Overrides the built-in body for `method`.
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<ModelEndpoint>,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_run_id() -> String {
    "default".into()
}
fn default_runs_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_tier() -> Tier {
    Tier::Notes
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    /// JSONL target list for the tier.
    pub manifest: Option<PathBuf>,
    /// Notes tier only: per-(instrument, source) cap. Absent means use all.
    pub cap_per_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default = "default_mode")]
    pub mode: TransportMode,
    pub cassette: Option<PathBuf>,
}

fn default_mode() -> TransportMode {
    TransportMode::Live
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            mode: default_mode(),
            cassette: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    /// Interpreter command; `{script_path}` marks where the script goes.
    pub runner: Option<String>,
    #[serde(default = "default_script_name")]
    pub script_name: String,
    #[serde(default)]
    pub pass_env: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_output")]
    pub max_output_bytes: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub keep_workdirs: bool,
    /// Failure-pattern table (TOML or JSON); built-in defaults otherwise.
    pub patterns: Option<PathBuf>,
}

fn default_script_name() -> String {
    "main.py".into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_max_output() -> u64 {
    1 << 20
}
fn default_workers() -> usize {
    4
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            runner: None,
            script_name: default_script_name(),
            pass_env: Vec::new(),
            timeout_secs: default_timeout(),
            max_output_bytes: default_max_output(),
            workers: default_workers(),
            keep_workdirs: false,
            patterns: None,
        }
    }
}

impl SandboxConfig {
    pub fn runner(&self) -> Result<Runner, PipelineError> {
        let command = self
            .runner
            .clone()
            .ok_or_else(|| PipelineError::Config("sandbox.runner is not set".into()))?;
        Ok(Runner {
            command,
            script_name: self.script_name.clone(),
            pass_env: self.pass_env.clone(),
        })
    }

    pub fn limits(&self) -> Limits {
        Limits {
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_output_bytes: self.max_output_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Provider for generated audio, `file:<path>` or `sidecar:<url>`.
    pub audio: Option<String>,
    pub audio_model: Option<String>,
    /// Notes tier: provider for reference audio, keyed by sound id.
    pub reference: Option<String>,
    pub reference_model: Option<String>,
    /// Where `<sound_id>.wav` references live when `reference` is a sidecar.
    pub reference_audio_dir: Option<PathBuf>,
    /// Environment and speech tiers: provider for label text.
    pub text: Option<String>,
    #[serde(default = "default_text_model")]
    pub text_model: String,
    pub expected_dim: Option<usize>,
    #[serde(default = "default_fad_mode")]
    pub fad_mode: FadMode,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_text_model() -> String {
    "clap-text".into()
}
fn default_fad_mode() -> FadMode {
    FadMode::PerSample
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_scale() -> f64 {
    crate::metrics::choice::DEFAULT_SCALE
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            audio: None,
            audio_model: None,
            reference: None,
            reference_model: None,
            reference_audio_dir: None,
            text: None,
            text_model: default_text_model(),
            expected_dim: None,
            fad_mode: default_fad_mode(),
            eps: default_eps(),
            scale: default_scale(),
        }
    }
}

impl EmbeddingConfig {
    fn audio_model_for(&self, tier: Tier) -> String {
        self.audio_model.clone().unwrap_or_else(|| match tier {
            Tier::Notes => "vggish".into(),
            _ => "clap-audio".into(),
        })
    }

    fn provider(&self, spec: Option<&String>, role: &str, model: String, base: &Path) -> Result<ProviderConfig, PipelineError> {
        let spec = spec.ok_or_else(|| PipelineError::Config(format!("embedding.{role} provider is not set")))?;
        let mut p = ProviderConfig::parse(spec, &model)?.resolved(base);
        p.expected_dim = self.expected_dim;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown]
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            formats: default_formats(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: default_run_id(),
            runs_dir: default_runs_dir(),
            tier: default_tier(),
            method: None,
            seed: 0,
            sample: SampleConfig::default(),
            template: None,
            endpoint: None,
            transport: TransportConfig::default(),
            sandbox: SandboxConfig::default(),
            embedding: EmbeddingConfig::default(),
            report: ReportConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::parse(&text, &base)
    }

    /// `p` made absolute against the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or_else(|| Method::default_for(self.tier))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.runs_dir).join(&self.run_id)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return bad(format!("run_id {:?} is not a plain directory name", self.run_id));
        }
        if self.method().tier() != self.tier {
            return bad(format!("method {} does not belong to tier {}", self.method(), self.tier));
        }
        if self.sample.cap_per_class == Some(0) {
            return bad("sample.cap_per_class must be >= 1".into());
        }
        if self.sample.cap_per_class.is_some() && self.tier != Tier::Notes {
            return bad("sample.cap_per_class applies to the notes tier only".into());
        }
        if !(self.sandbox.timeout_secs > 0.0) || !self.sandbox.timeout_secs.is_finite() {
            return bad("sandbox.timeout_secs must be > 0".into());
        }
        if self.sandbox.workers == 0 {
            return bad("sandbox.workers must be >= 1".into());
        }
        if !(self.embedding.eps >= 0.0) {
            return bad("embedding.eps must be >= 0".into());
        }
        if !(self.embedding.scale > 0.0) {
            return bad("embedding.scale must be > 0".into());
        }
        if let Some(ep) = &self.endpoint {
            ep.validate()?;
        }
        Ok(())
    }

    pub fn audio_provider(&self) -> Result<ProviderConfig, PipelineError> {
        let e = &self.embedding;
        e.provider(e.audio.as_ref(), "audio", e.audio_model_for(self.tier), &self.base_dir)
    }

    pub fn reference_provider(&self) -> Result<ProviderConfig, PipelineError> {
        let e = &self.embedding;
        let model = e.reference_model.clone().unwrap_or_else(|| e.audio_model_for(self.tier));
        e.provider(e.reference.as_ref(), "reference", model, &self.base_dir)
    }

    pub fn text_provider(&self) -> Result<ProviderConfig, PipelineError> {
        let e = &self.embedding;
        e.provider(e.text.as_ref(), "text", e.text_model.clone(), &self.base_dir)
    }
}
