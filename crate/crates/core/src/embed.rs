//! Embedding acquisition behind one interface.
//!
//! Providers are either a precomputed JSONL file or the HTTP embedding
//! sidecar. Both yield an [`EmbeddingSet`]; ids that could not be embedded
//! are reported next to it, never dropped.
//!
//! File layout: a header line `{"model":…,"dim":…,"granularity":"frame"|"clip"}`
//! followed by one `{"id":…,"vectors":[[…],…]}` line per item.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("embedding file has no header line")]
    MissingHeader,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Frame,
    Clip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub model_name: String,
    pub dim: usize,
    pub granularity: Granularity,
    pub items: BTreeMap<String, Vec<Vec<f64>>>,
    /// Model version the provider reported, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl EmbeddingSet {
    pub fn new(model_name: impl Into<String>, dim: usize, granularity: Granularity) -> Self {
        EmbeddingSet {
            model_name: model_name.into(),
            dim,
            granularity,
            items: BTreeMap::new(),
            checkpoint: None,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[Vec<f64>]> {
        self.items.get(id).map(Vec::as_slice)
    }

    /// The single vector of a clip-level item.
    pub fn clip(&self, id: &str) -> Option<&[f64]> {
        self.items.get(id).and_then(|v| v.first()).map(Vec::as_slice)
    }

    /// Adds an item after checking every set invariant for it.
    pub fn insert(&mut self, id: impl Into<String>, vectors: Vec<Vec<f64>>) -> Result<(), EmbedError> {
        let id = id.into();
        check_vectors(self.dim, self.granularity, &vectors)?;
        if self.items.contains_key(&id) {
            return Err(EmbedError::DuplicateId(id));
        }
        self.items.insert(id, vectors);
        Ok(())
    }

    /// Vectors of the given ids concatenated, skipping unknown ids.
    pub fn pooled<'a>(&'a self, ids: impl IntoIterator<Item = &'a str>) -> Vec<&'a [f64]> {
        ids.into_iter()
            .filter_map(|id| self.items.get(id))
            .flat_map(|vs| vs.iter().map(Vec::as_slice))
            .collect()
    }

    /// Only the listed ids, in a new set.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> EmbeddingSet {
        let mut out = EmbeddingSet::new(self.model_name.clone(), self.dim, self.granularity);
        out.checkpoint = self.checkpoint.clone();
        for id in ids {
            if let Some(v) = self.items.get(id) {
                out.items.insert(id.to_string(), v.clone());
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut header = serde_json::json!({
            "model": self.model_name,
            "dim": self.dim,
            "granularity": self.granularity,
        });
        if let Some(c) = &self.checkpoint {
            header["checkpoint"] = Value::String(c.clone());
        }
        let mut out = header.to_string();
        out.push('\n');
        for (id, vectors) in &self.items {
            out.push_str(&serde_json::json!({ "id": id, "vectors": vectors }).to_string());
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), EmbedError> {
        let io = |source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }
}

fn check_vectors(dim: usize, granularity: Granularity, vectors: &[Vec<f64>]) -> Result<(), EmbedError> {
    if vectors.is_empty() {
        return Err(EmbedError::Protocol("item has no vectors".into()));
    }
    if granularity == Granularity::Clip && vectors.len() != 1 {
        return Err(EmbedError::Protocol(format!(
            "clip granularity needs exactly 1 vector, got {}",
            vectors.len()
        )));
    }
    for v in vectors {
        if v.len() != dim {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Protocol("non-finite".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Header {
    model: String,
    dim: usize,
    granularity: Granularity,
    #[serde(default)]
    checkpoint: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Item {
    id: String,
    vectors: Vec<Vec<f64>>,
}

fn parse_line<T: serde::de::DeserializeOwned>(line: &str, n: usize) -> Result<T, EmbedError> {
    serde_json::from_str(line).map_err(|e| {
        let non_finite = Regex::new(r"\b(NaN|Infinity)\b").expect("static regex");
        let reason = if non_finite.is_match(line) {
            "non-finite".to_string()
        } else {
            e.to_string()
        };
        EmbedError::Parse { line: n, reason }
    })
}

pub fn parse_embedding_jsonl(text: &str) -> Result<EmbeddingSet, EmbedError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hn, hline) = lines.next().ok_or(EmbedError::MissingHeader)?;
    let raw: Value = parse_line(hline, hn)?;
    if raw.get("id").is_some() || raw.get("model").is_none() {
        return Err(EmbedError::MissingHeader);
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| EmbedError::Parse {
        line: hn,
        reason: e.to_string(),
    })?;
    if header.dim == 0 {
        return Err(EmbedError::Parse {
            line: hn,
            reason: "dim must be positive".into(),
        });
    }
    let mut set = EmbeddingSet::new(header.model, header.dim, header.granularity);
    set.checkpoint = header.checkpoint;
    for (n, line) in lines {
        let item: Item = parse_line(line, n)?;
        set.insert(item.id, item.vectors).map_err(|e| match e {
            EmbedError::DuplicateId(id) => EmbedError::DuplicateId(id),
            other => EmbedError::Parse {
                line: n,
                reason: match other {
                    EmbedError::Protocol(r) => r,
                    o => o.to_string(),
                },
            },
        })?;
    }
    Ok(set)
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingSet, EmbedError> {
    let text = fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embedding_jsonl(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    File,
    Sidecar,
}

/// Where embeddings come from. Written `file:<path>` or `sidecar:<url>` on
/// the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub location: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_dim: Option<usize>,
}

impl ProviderConfig {
    pub fn file(path: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::File,
            location: path.into(),
            model_name: model_name.into(),
            expected_dim: None,
        }
    }

    pub fn sidecar(url: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Sidecar,
            location: url.into(),
            model_name: model_name.into(),
            expected_dim: None,
        }
    }

    /// Parses `file:<path>` / `sidecar:<url>`.
    pub fn parse(spec: &str, model_name: &str) -> Result<Self, EmbedError> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| EmbedError::Precondition(format!("provider {spec:?} lacks a kind prefix")))?;
        let kind = ProviderKind::from_str(kind)?;
        Ok(ProviderConfig {
            kind,
            location: rest.to_string(),
            model_name: model_name.to_string(),
            expected_dim: None,
        })
    }

    /// Resolves a relative file location against `base`.
    pub fn resolved(&self, base: &Path) -> ProviderConfig {
        let mut out = self.clone();
        if self.kind == ProviderKind::File && Path::new(&self.location).is_relative() {
            out.location = base.join(&self.location).display().to_string();
        }
        out
    }

    fn validate(&self) -> Result<(), EmbedError> {
        match self.kind {
            ProviderKind::File if !Path::new(&self.location).exists() => Err(EmbedError::ProviderUnreachable(
                format!("embedding file {} does not exist", self.location),
            )),
            ProviderKind::Sidecar => match self.location.parse::<ureq::http::Uri>() {
                Ok(u) if matches!(u.scheme_str(), Some("http" | "https")) && u.authority().is_some() => Ok(()),
                _ => Err(EmbedError::Precondition(format!("bad sidecar URL {:?}", self.location))),
            },
            _ => Ok(()),
        }
    }
}

impl FromStr for ProviderKind {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(ProviderKind::File),
            "sidecar" => Ok(ProviderKind::Sidecar),
            other => Err(EmbedError::Precondition(format!("unknown provider kind {other:?}"))),
        }
    }
}

impl fmt::Display for ProviderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ProviderKind::File => "file",
            ProviderKind::Sidecar => "sidecar",
        };
        write!(f, "{kind}:{} ({})", self.location, self.model_name)
    }
}

/// Result of an embedding request: the set plus per-id failures.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutcome {
    pub set: EmbeddingSet,
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
enum SidecarInput<'a> {
    Audio { id: &'a str, path: String },
    Text { id: &'a str, text: &'a str },
}

#[derive(Debug, Deserialize)]
struct SidecarEmbedding {
    id: String,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct SidecarFailure {
    id: String,
    reason: String,
}

#[derive(Debug, Deserialize)]
struct SidecarResponse {
    model: String,
    dim: usize,
    granularity: Granularity,
    embeddings: Vec<SidecarEmbedding>,
    #[serde(default)]
    failures: Vec<SidecarFailure>,
    #[serde(default)]
    checkpoint: Option<String>,
}

/// Inputs per sidecar request.
pub const SIDECAR_BATCH: usize = 32;
const SIDECAR_TIMEOUT: Duration = Duration::from_secs(300);

fn sidecar_agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(SIDECAR_TIMEOUT))
        .http_status_as_error(false)
        .build()
        .into()
}

/// `GET /health` of a sidecar, returned as raw JSON.
pub fn sidecar_health(url: &str) -> Result<Value, EmbedError> {
    let mut resp = sidecar_agent()
        .get(&format!("{}/health", url.trim_end_matches('/')))
        .call()
        .map_err(|e| EmbedError::ProviderUnreachable(e.to_string()))?;
    resp.body_mut()
        .read_json()
        .map_err(|e| EmbedError::Protocol(e.to_string()))
}

fn sidecar_embed(
    provider: &ProviderConfig,
    inputs: &[SidecarInput<'_>],
) -> Result<SidecarResponse, EmbedError> {
    let url = format!("{}/embed", provider.location.trim_end_matches('/'));
    let body = serde_json::json!({ "model": provider.model_name, "inputs": inputs });
    let mut resp = sidecar_agent()
        .post(&url)
        .send_json(&body)
        .map_err(|e| EmbedError::ProviderUnreachable(e.to_string()))?;
    let code = resp.status().as_u16();
    let text = resp
        .body_mut()
        .with_config()
        .limit(256 << 20)
        .read_to_string()
        .map_err(|e| EmbedError::ProviderUnreachable(e.to_string()))?;
    match code {
        200 => serde_json::from_str(&text).map_err(|e| EmbedError::Protocol(e.to_string())),
        503 => Err(EmbedError::ProviderUnreachable(format!("sidecar not ready: {text}"))),
        _ => Err(EmbedError::Protocol(format!("HTTP {code}: {text}"))),
    }
}

fn from_sidecar<'a>(
    provider: &ProviderConfig,
    ids: &[&'a str],
    make_input: impl Fn(usize) -> SidecarInput<'a>,
    want: Option<Granularity>,
) -> Result<EmbedOutcome, EmbedError> {
    let mut set: Option<EmbeddingSet> = None;
    let mut failures = Vec::new();
    let mut start = 0;
    while start < ids.len() {
        let end = (start + SIDECAR_BATCH).min(ids.len());
        let inputs: Vec<SidecarInput<'a>> = (start..end).map(&make_input).collect();
        let resp = sidecar_embed(provider, &inputs)?;
        if resp.model != provider.model_name {
            return Err(EmbedError::Protocol(format!(
                "asked for model {}, sidecar answered {}",
                provider.model_name, resp.model
            )));
        }
        let target = set.get_or_insert_with(|| {
            let mut s = EmbeddingSet::new(resp.model.clone(), resp.dim, resp.granularity);
            s.checkpoint = resp.checkpoint.clone();
            s
        });
        if resp.dim != target.dim {
            return Err(EmbedError::DimMismatch {
                expected: target.dim,
                got: resp.dim,
            });
        }
        let batch: HashSet<&str> = ids[start..end].iter().copied().collect();
        let mut answered = HashSet::new();
        for e in resp.embeddings {
            if !batch.contains(e.id.as_str()) || !answered.insert(e.id.clone()) {
                return Err(EmbedError::Protocol(format!("unexpected id {:?} in response", e.id)));
            }
            target.insert(e.id, e.vectors)?;
        }
        for f in resp.failures {
            if batch.contains(f.id.as_str()) && answered.insert(f.id.clone()) {
                failures.push((f.id, f.reason));
            }
        }
        for id in &ids[start..end] {
            if !answered.contains(*id) {
                failures.push((id.to_string(), "missing from sidecar response".into()));
            }
        }
        start = end;
    }
    let set = set.expect("ids is non-empty");
    if let Some(g) = want {
        if set.granularity != g {
            return Err(EmbedError::Protocol(format!("expected {g:?} granularity")));
        }
    }
    Ok(EmbedOutcome { set, failures })
}

fn from_file(provider: &ProviderConfig, ids: &[&str]) -> Result<EmbedOutcome, EmbedError> {
    let all = load_embedding_file(Path::new(&provider.location))?;
    if all.model_name != provider.model_name {
        log::warn!(
            "embedding file {} holds model {}, configured {}",
            provider.location,
            all.model_name,
            provider.model_name
        );
    }
    let set = all.subset(ids.iter().copied());
    let failures = ids
        .iter()
        .filter(|id| !set.items.contains_key(**id))
        .map(|id| (id.to_string(), "id not present in embedding file".to_string()))
        .collect();
    Ok(EmbedOutcome { set, failures })
}

fn check_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<Vec<&'a str>, EmbedError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(EmbedError::DuplicateId(id.to_string()));
        }
        out.push(id);
    }
    if out.is_empty() {
        return Err(EmbedError::Precondition("nothing to embed".into()));
    }
    Ok(out)
}

fn check_dim(provider: &ProviderConfig, out: &EmbedOutcome) -> Result<(), EmbedError> {
    match provider.expected_dim {
        Some(d) if d != out.set.dim => Err(EmbedError::DimMismatch {
            expected: d,
            got: out.set.dim,
        }),
        _ => Ok(()),
    }
}

/// Embeds audio files given as `(id, path)`.
pub fn embed_audio(provider: &ProviderConfig, files: &[(String, PathBuf)]) -> Result<EmbedOutcome, EmbedError> {
    let ids = check_ids(files.iter().map(|(id, _)| id.as_str()))?;
    provider.validate()?;
    let out = match provider.kind {
        ProviderKind::File => from_file(provider, &ids)?,
        ProviderKind::Sidecar => {
            let abs: Vec<String> = files
                .iter()
                .map(|(_, p)| {
                    p.canonicalize()
                        .unwrap_or_else(|_| p.clone())
                        .display()
                        .to_string()
                })
                .collect();
            from_sidecar(
                provider,
                &ids,
                |i| SidecarInput::Audio {
                    id: ids[i],
                    path: abs[i].clone(),
                },
                None,
            )?
        }
    };
    check_dim(provider, &out)?;
    Ok(out)
}

/// Embeds text labels; the label doubles as the id.
pub fn embed_text(provider: &ProviderConfig, labels: &[String]) -> Result<EmbedOutcome, EmbedError> {
    let ids = check_ids(labels.iter().map(String::as_str))?;
    provider.validate()?;
    let out = match provider.kind {
        ProviderKind::File => from_file(provider, &ids)?,
        ProviderKind::Sidecar => from_sidecar(
            provider,
            &ids,
            |i| SidecarInput::Text {
                id: ids[i],
                text: ids[i],
            },
            Some(Granularity::Clip),
        )?,
    };
    if out.set.granularity != Granularity::Clip {
        return Err(EmbedError::Protocol("text embeddings must be clip-level".into()));
    }
    check_dim(provider, &out)?;
    Ok(out)
}
