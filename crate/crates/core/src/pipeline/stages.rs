//! The seven stages and the driver that runs them over a run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::RunConfig;
use super::report::emit_report;
use super::state::{GenerationRecord, ManifestStore, RunManifest, SampleScore, StageStatus};
use super::{PipelineError, Stage};
use crate::corpus::{load_manifest, parse_manifest, stratified_sample, Entries, Tier};
use crate::embed::{embed_audio, embed_text, load_embedding_file, EmbedOutcome, EmbeddingSet, Granularity, ProviderKind};
use crate::gateway::{describe_classes, Cassette, ChatExchange, Gateway, TransportMode, Transport};
use crate::metrics::{candidate_set, fad_between, forced_choice, FadMode};
use crate::par;
use crate::prompt::{render_as, Method, PromptTemplate, RenderedPrompt, Target};
use crate::rng::derive_seed;
use crate::sandbox::{execute, extract_code, ExecRequest, ExtractedProgram, PatternTable, TierProfile};

const MANIFEST: &str = "manifest.json";
const SAMPLES: &str = "samples.jsonl";
const DESCRIPTIONS: &str = "prompts/descriptions.json";
const GENERATED_EMB: &str = "embeddings/generated.jsonl";
const REFERENCE_EMB: &str = "embeddings/reference.jsonl";
const TEXT_EMB: &str = "embeddings/text.jsonl";
const EMBED_FAILURES: &str = "embeddings/failures.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageOptions {
    /// Redo the stage (and invalidate later ones) even if it is done.
    pub force: bool,
    /// Stop after this many samples; the stage stays pending.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageReport {
    pub stage: Stage,
    pub processed: usize,
    pub failed: usize,
    /// The stage was already done and nothing ran.
    pub skipped: bool,
}

struct Batch {
    processed: usize,
    failed: usize,
    remaining: usize,
}

pub struct Pipeline {
    config: RunConfig,
    run_dir: PathBuf,
    store: ManifestStore,
    transport: Option<Arc<dyn Transport>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("run_dir", &self.run_dir).finish_non_exhaustive()
    }
}

/// `0007_guitar_acoustic_010-057-100`: index prefix plus a path-safe id.
pub fn sample_id(index: usize, target_id: &str) -> String {
    let clean: String = target_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .take(64)
        .collect();
    format!("{index:04}_{clean}")
}

fn to_string<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn mkdir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

fn target_at(entries: &Entries, index: usize) -> Target<'_> {
    match entries {
        Entries::Notes(v) => Target::Note(&v[index]),
        Entries::Environment(v) => Target::Class(&v[index]),
        Entries::Speech(v) => Target::Word(&v[index]),
    }
}

impl Pipeline {
    /// Opens the run directory named by `config`, creating it on first use.
    pub fn open(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let run_dir = config.run_dir();
        mkdir(&run_dir)?;
        let path = run_dir.join(MANIFEST);
        let method = config.method();
        let endpoint = config.endpoint.as_ref().map(|e| e.name.clone());
        let store = if path.exists() {
            let store = ManifestStore::open(&path)?;
            let m = store.snapshot();
            let mut diffs = Vec::new();
            if m.tier != config.tier {
                diffs.push(format!("tier {} vs {}", m.tier, config.tier));
            }
            if m.method != method {
                diffs.push(format!("method {} vs {}", m.method, method));
            }
            if m.seed != config.seed {
                diffs.push(format!("seed {} vs {}", m.seed, config.seed));
            }
            if let (Some(a), Some(b)) = (&m.endpoint, &endpoint) {
                if a != b {
                    diffs.push(format!("endpoint {a} vs {b}"));
                }
            }
            if !diffs.is_empty() {
                return Err(PipelineError::ConfigMismatch(diffs.join(", ")));
            }
            if m.endpoint.is_none() && endpoint.is_some() {
                store.update(|m| m.endpoint = endpoint.clone())?;
            }
            store
        } else {
            let m = RunManifest::new(&config.run_id, config.tier, method, endpoint, config.seed);
            ManifestStore::create(&path, m)?
        };
        Ok(Pipeline {
            config,
            run_dir,
            store,
            transport: None,
        })
    }

    /// Uses `transport` instead of HTTP for live and record modes.
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn manifest(&self) -> RunManifest {
        self.store.snapshot()
    }

    /// Runs every stage that is not done yet, in order.
    pub fn run_all(&self, opts: StageOptions) -> Result<Vec<StageReport>, PipelineError> {
        if opts.force {
            self.store.update(|m| m.reset_from(Stage::Sampled))?;
        }
        let per_stage = StageOptions {
            force: false,
            limit: opts.limit,
        };
        Stage::ALL.iter().map(|s| self.run_stage(*s, per_stage)).collect()
    }

    pub fn run_stage(&self, stage: Stage, opts: StageOptions) -> Result<StageReport, PipelineError> {
        let m = self.store.snapshot();
        if let Some(prev) = stage.previous() {
            if !m.is_done(prev) {
                return Err(PipelineError::StageOrderViolation { stage, missing: prev });
            }
        }
        if m.is_done(stage) && !opts.force {
            log::info!("{stage}: already done");
            return Ok(StageReport {
                stage,
                processed: 0,
                failed: 0,
                skipped: true,
            });
        }
        if opts.force {
            self.store.update(|m| m.reset_from(stage))?;
        }
        log::info!("{stage}: running");
        let report = match stage {
            Stage::Sampled => self.sample()?,
            Stage::Prompted => self.prompt(opts)?,
            Stage::Generated => self.generate(opts)?,
            Stage::Executed => self.execute(opts)?,
            Stage::Embedded => self.embed()?,
            Stage::Scored => self.score(opts)?,
            Stage::Reported => self.report()?,
        };
        log::info!("{stage}: {} processed, {} failed", report.processed, report.failed);
        Ok(report)
    }

    fn mark_done(&self, stage: Stage) -> Result<(), PipelineError> {
        self.store.update(|m| {
            m.stages.insert(stage, StageStatus::Done);
        })
    }

    fn finish(&self, stage: Stage, batch: Batch) -> Result<StageReport, PipelineError> {
        if batch.remaining > 0 {
            return Err(PipelineError::Interrupted {
                stage,
                remaining: batch.remaining,
            });
        }
        self.mark_done(stage)?;
        Ok(StageReport {
            stage,
            processed: batch.processed,
            failed: batch.failed,
            skipped: false,
        })
    }

    /// Applies `work` to every sample pending for `stage`, on the worker
    /// pool, checkpointing after each one. A returned error marks that
    /// sample failed; the batch continues.
    fn run_samples<F>(&self, stage: Stage, limit: Option<usize>, work: F) -> Result<Batch, PipelineError>
    where
        F: Fn(&mut GenerationRecord) -> Result<(), String> + Sync + Send,
    {
        let snapshot = self.store.snapshot();
        let pending = snapshot.pending(stage);
        let take = limit.map_or(pending.len(), |l| l.min(pending.len()));
        let batch = &pending[..take];
        let results = par::with_workers(self.config.sandbox.workers, || {
            par::map(batch, |&i| {
                let mut rec = snapshot.samples[i].clone();
                match work(&mut rec) {
                    Ok(()) => rec.reached = stage,
                    Err(reason) => {
                        log::warn!("{stage}: {} failed: {reason}", rec.sample_id);
                        rec.fail(stage, reason)
                    }
                }
                let failed = rec.failed_at.is_some();
                self.store.update(|m| m.samples[i] = rec).map(|_| failed)
            })
        });
        let mut failed = 0;
        for r in results {
            failed += usize::from(r?);
        }
        Ok(Batch {
            processed: take,
            failed,
            remaining: pending.len() - take,
        })
    }

    fn path(&self, rel: &Path) -> PathBuf {
        self.run_dir.join(rel)
    }

    fn targets(&self) -> Result<Entries, PipelineError> {
        let path = self.run_dir.join(SAMPLES);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(parse_manifest(&text, self.config.tier)?)
    }

    fn gateway(&self) -> Result<Gateway, PipelineError> {
        let endpoint = self
            .config
            .endpoint
            .clone()
            .ok_or_else(|| PipelineError::Config("[endpoint] is not set".into()))?;
        let mode = self.config.transport.mode;
        let cassette = match &self.config.transport.cassette {
            Some(p) => Some(Arc::new(Cassette::open(&self.config.resolve(p))?)),
            None => None,
        };
        let gw = match (mode, &self.transport) {
            (TransportMode::Replay, _) => Gateway::new(endpoint, mode, None, cassette)?,
            (_, Some(t)) => Gateway::new(endpoint, mode, Some(t.clone()), cassette)?,
            (_, None) => Gateway::http(endpoint, mode, cassette)?,
        };
        Ok(gw)
    }

    fn sample(&self) -> Result<StageReport, PipelineError> {
        let cfg = &self.config;
        let src = cfg
            .sample
            .manifest
            .as_ref()
            .ok_or_else(|| PipelineError::Config("sample.manifest is not set".into()))?;
        let src = cfg.resolve(src);
        let mut manifest = load_manifest(&src, cfg.tier)?;
        if let (Some(cap), Entries::Notes(notes)) = (cfg.sample.cap_per_class, &manifest.entries) {
            manifest = stratified_sample(notes, cap, cfg.seed)?;
        }
        manifest.write_jsonl(&self.run_dir.join(SAMPLES))?;
        let records: Vec<GenerationRecord> = manifest
            .entries
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut r = GenerationRecord::new(sample_id(i, id), *id, i);
                if let Entries::Notes(v) = &manifest.entries {
                    r.group = Some(v[i].instrument.as_str().to_string());
                }
                r
            })
            .collect();
        let n = records.len();
        self.store.update(|m| {
            m.samples = records;
            m.stages.insert(Stage::Sampled, StageStatus::Done);
        })?;
        Ok(StageReport {
            stage: Stage::Sampled,
            processed: n,
            failed: 0,
            skipped: false,
        })
    }

    /// Fills missing class descriptions, asking the model once and caching
    /// the answer in the run directory.
    fn fill_descriptions(&self, entries: &mut Entries) -> Result<(), PipelineError> {
        let Entries::Environment(classes) = entries else {
            return Ok(());
        };
        let lacking: Vec<String> = classes
            .iter()
            .filter(|c| c.description.is_none())
            .map(|c| c.label.clone())
            .collect();
        if lacking.is_empty() {
            return Ok(());
        }
        let cache = self.run_dir.join(DESCRIPTIONS);
        let described: BTreeMap<String, String> = if cache.exists() {
            read_json(&cache)?
        } else {
            let got = describe_classes(&self.gateway()?, &lacking)?;
            if !got.format_errors.is_empty() {
                log::warn!("no description for {} classes", got.format_errors.len());
            }
            write_json(&cache, &got.descriptions)?;
            got.descriptions
        };
        for c in classes.iter_mut() {
            if c.description.is_none() {
                c.description = described.get(&c.label).cloned();
            }
        }
        Ok(())
    }

    fn prompt(&self, opts: StageOptions) -> Result<StageReport, PipelineError> {
        let method = self.config.method();
        let template = match &self.config.template {
            Some(p) => {
                let p = self.config.resolve(p);
                let body = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
                PromptTemplate::new(method, body)?
            }
            None => PromptTemplate::builtin(method),
        };
        mkdir(&self.run_dir.join("prompts"))?;
        let mut entries = self.targets()?;
        if method == Method::EnvDetailedPlusDescription {
            self.fill_descriptions(&mut entries)?;
        }
        let batch = self.run_samples(Stage::Prompted, opts.limit, |rec| {
            let rendered = render_as(&template, target_at(&entries, rec.index), &rec.sample_id).map_err(to_string)?;
            let rel = PathBuf::from("prompts").join(format!("{}.json", rec.sample_id));
            write_json(&self.path(&rel), &rendered).map_err(to_string)?;
            rec.prompt = Some(rel);
            Ok(())
        })?;
        self.finish(Stage::Prompted, batch)
    }

    fn generate(&self, opts: StageOptions) -> Result<StageReport, PipelineError> {
        let gw = self.gateway()?;
        mkdir(&self.run_dir.join("responses"))?;
        let batch = self.run_samples(Stage::Generated, opts.limit, |rec| {
            let prompt_ref = rec.prompt.clone().ok_or("no prompt recorded")?;
            let prompt: RenderedPrompt = read_json(&self.path(&prompt_ref)).map_err(to_string)?;
            let exchange = match gw.complete_prompt(&prompt.text) {
                Ok(x) => x,
                Err(e) => {
                    rec.exchange_status = Some(e.status());
                    return Err(e.to_string());
                }
            };
            let rel = PathBuf::from("responses").join(format!("{}.json", rec.sample_id));
            write_json(&self.path(&rel), &exchange).map_err(to_string)?;
            rec.response = Some(rel);
            rec.exchange_status = Some(exchange.status);
            if exchange.is_ok() {
                Ok(())
            } else {
                Err(format!("model call ended with {:?}", exchange.status))
            }
        })?;
        self.finish(Stage::Generated, batch)
    }

    fn execute(&self, opts: StageOptions) -> Result<StageReport, PipelineError> {
        let sb = &self.config.sandbox;
        let runner = sb.runner()?;
        let patterns = match &sb.patterns {
            Some(p) => PatternTable::load(&self.config.resolve(p))?,
            None => PatternTable::defaults(),
        };
        let profile = TierProfile::for_tier(self.config.tier);
        let limits = sb.limits();
        let ext = Path::new(&runner.script_name)
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("txt")
            .to_string();
        for d in ["programs", "outcomes", "audio", "workdirs"] {
            mkdir(&self.run_dir.join(d))?;
        }
        let batch = self.run_samples(Stage::Executed, opts.limit, |rec| {
            let id = rec.sample_id.clone();
            let response_ref = rec.response.clone().ok_or("no response recorded")?;
            let exchange: ChatExchange = read_json(&self.path(&response_ref)).map_err(to_string)?;
            let program: ExtractedProgram = extract_code(&id, &exchange.response_text).map_err(to_string)?;
            let rel = PathBuf::from("programs").join(format!("{id}.json"));
            write_json(&self.path(&rel), &program).map_err(to_string)?;
            let src = self.run_dir.join("programs").join(format!("{id}.{ext}"));
            fs::write(&src, &program.source_text).map_err(to_string)?;
            rec.program = Some(rel);

            let workdir = self.run_dir.join("workdirs").join(&id);
            if workdir.exists() {
                // left behind by an interrupted run
                fs::remove_dir_all(&workdir).map_err(to_string)?;
            }
            let req = ExecRequest {
                runner: &runner,
                profile: &profile,
                limits,
                patterns: &patterns,
                preferred_stem: Some(&rec.target_id),
            };
            let outcome = execute(&program, &req, &workdir).map_err(to_string)?;
            let rel = PathBuf::from("outcomes").join(format!("{id}.json"));
            write_json(&self.path(&rel), &outcome).map_err(to_string)?;
            rec.outcome = Some(rel);
            rec.exec_status = Some(outcome.status);
            rec.failure_kind = outcome.failure_kind.clone();
            let mut result = match &outcome.failure_kind {
                None => Ok(()),
                Some(kind) => Err(kind.to_string()),
            };
            if let (true, Some(sel)) = (outcome.is_success(), &outcome.selected_artifact) {
                let rel = PathBuf::from("audio").join(format!("{id}.wav"));
                match fs::copy(workdir.join(sel), self.path(&rel)) {
                    Ok(_) => rec.artifact = Some(rel),
                    Err(e) => result = Err(format!("cannot keep artifact: {e}")),
                }
            }
            if !sb.keep_workdirs {
                let _ = fs::remove_dir_all(&workdir);
            }
            result
        })?;
        self.finish(Stage::Executed, batch)
    }

    fn embed(&self) -> Result<StageReport, PipelineError> {
        let m = self.store.snapshot();
        let pending = m.pending(Stage::Embedded);
        mkdir(&self.run_dir.join("embeddings"))?;
        let mut failed_ids: BTreeMap<String, String> = BTreeMap::new();
        let mut failures: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        if !pending.is_empty() {
            let files: Vec<(String, PathBuf)> = pending
                .iter()
                .map(|&i| {
                    let r = &m.samples[i];
                    let rel = r.artifact.clone().unwrap_or_default();
                    (r.sample_id.clone(), self.path(&rel))
                })
                .collect();
            let audio = embed_audio(&self.config.audio_provider()?, &files)?;
            audio.set.write_jsonl(&self.run_dir.join(GENERATED_EMB))?;
            failed_ids.extend(audio.failures.iter().cloned());
            failures.insert("audio", audio.failures);

            let targets: BTreeSet<&str> = m.samples.iter().map(|r| r.target_id.as_str()).collect();
            let (path, side): (&str, EmbedOutcome) = match self.config.tier {
                Tier::Notes => {
                    let provider = self.config.reference_provider()?;
                    let dir = match (&provider.kind, &self.config.embedding.reference_audio_dir) {
                        (ProviderKind::Sidecar, None) => {
                            return Err(PipelineError::Config(
                                "embedding.reference_audio_dir is needed with a sidecar reference provider".into(),
                            ))
                        }
                        (_, d) => d.as_ref().map(|d| self.config.resolve(d)).unwrap_or_default(),
                    };
                    let refs: Vec<(String, PathBuf)> = targets
                        .iter()
                        .map(|t| (t.to_string(), dir.join(format!("{t}.wav"))))
                        .collect();
                    (REFERENCE_EMB, embed_audio(&provider, &refs)?)
                }
                _ => {
                    let labels: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
                    (TEXT_EMB, embed_text(&self.config.text_provider()?, &labels)?)
                }
            };
            side.set.write_jsonl(&self.run_dir.join(path))?;
            failures.insert(if path == TEXT_EMB { "text" } else { "reference" }, side.failures);
        }
        write_json(&self.run_dir.join(EMBED_FAILURES), &failures)?;
        let failed = pending
            .iter()
            .filter(|&&i| failed_ids.contains_key(&m.samples[i].sample_id))
            .count();
        self.store.update(|m| {
            for &i in &pending {
                let r = &mut m.samples[i];
                match failed_ids.get(&r.sample_id) {
                    Some(reason) => r.fail(Stage::Embedded, reason.clone()),
                    None => r.reached = Stage::Embedded,
                }
            }
            m.stages.insert(Stage::Embedded, StageStatus::Done);
        })?;
        Ok(StageReport {
            stage: Stage::Embedded,
            processed: pending.len(),
            failed,
            skipped: false,
        })
    }

    fn load_set(&self, rel: &str) -> Result<EmbeddingSet, PipelineError> {
        Ok(load_embedding_file(&self.run_dir.join(rel))?)
    }

    fn score(&self, opts: StageOptions) -> Result<StageReport, PipelineError> {
        let m = self.store.snapshot();
        mkdir(&self.run_dir.join("scores"))?;
        if m.pending(Stage::Scored).is_empty() {
            let batch = self.run_samples(Stage::Scored, opts.limit, |_| Ok(()))?;
            return self.finish(Stage::Scored, batch);
        }
        let emb = &self.config.embedding;
        let audio = self.load_set(GENERATED_EMB)?;
        let batch = if self.config.tier == Tier::Notes {
            let reference = self.load_set(REFERENCE_EMB)?;
            let batch = self.run_samples(Stage::Scored, opts.limit, |rec| {
                if emb.fad_mode == FadMode::PerGroup {
                    return Ok(());
                }
                let generated = audio.get(&rec.sample_id).ok_or("no embedding for generated audio")?;
                let refs = reference
                    .get(&rec.target_id)
                    .ok_or_else(|| format!("no reference embedding for {}", rec.target_id))?;
                let fad = fad_between(refs, generated, FadMode::PerSample, emb.eps).map_err(to_string)?;
                self.write_score(rec, SampleScore {
                    sample_id: rec.sample_id.clone(),
                    fad: Some(fad),
                    choice: None,
                })?;
                rec.fad = Some(fad);
                Ok(())
            })?;
            if batch.remaining == 0 && emb.fad_mode == FadMode::PerGroup {
                self.score_groups(&audio, &reference)?;
            }
            batch
        } else {
            let text = self.load_set(TEXT_EMB)?;
            if audio.granularity != Granularity::Clip {
                return Err(PipelineError::Config(format!(
                    "forced choice needs clip-level audio embeddings, {} is frame-level",
                    audio.model_name
                )));
            }
            let mut universe: Vec<String> = Vec::new();
            for r in &m.samples {
                if !universe.contains(&r.target_id) {
                    universe.push(r.target_id.clone());
                }
            }
            self.run_samples(Stage::Scored, opts.limit, |rec| {
                let clip = audio.clip(&rec.sample_id).ok_or("no embedding for generated audio")?;
                let labels = candidate_set(&universe, &rec.target_id, derive_seed(m.seed, rec.index as u64))
                    .map_err(to_string)?;
                let candidates = labels
                    .into_iter()
                    .map(|l| {
                        let v = text.clip(&l).ok_or_else(|| format!("no text embedding for {l:?}"))?;
                        Ok((l, v))
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                let choice = forced_choice(&rec.sample_id, clip, &candidates, &rec.target_id, emb.scale)
                    .map_err(to_string)?;
                self.write_score(rec, SampleScore {
                    sample_id: rec.sample_id.clone(),
                    fad: None,
                    choice: Some(choice.clone()),
                })?;
                rec.choice = Some(choice);
                Ok(())
            })?
        };
        self.finish(Stage::Scored, batch)
    }

    fn write_score(&self, rec: &mut GenerationRecord, score: SampleScore) -> Result<(), String> {
        let rel = PathBuf::from("scores").join(format!("{}.json", rec.sample_id));
        write_json(&self.path(&rel), &score).map_err(to_string)?;
        rec.score = Some(rel);
        Ok(())
    }

    /// Pools all reference and generated vectors of each group.
    fn score_groups(&self, audio: &EmbeddingSet, reference: &EmbeddingSet) -> Result<(), PipelineError> {
        let m = self.store.snapshot();
        let mut groups: BTreeMap<String, (BTreeSet<&str>, Vec<&str>)> = BTreeMap::new();
        for r in &m.samples {
            let g = groups.entry(r.group.clone().unwrap_or_else(|| "all".into())).or_default();
            g.0.insert(&r.target_id);
            if r.reached == Stage::Scored && r.failed_at.is_none() {
                g.1.push(&r.sample_id);
            }
        }
        let mut out = BTreeMap::new();
        for (name, (targets, samples)) in &groups {
            let refs = reference.pooled(targets.iter().copied());
            let gen = audio.pooled(samples.iter().copied());
            if refs.len() < 2 || gen.len() < 2 {
                log::warn!("group {name}: too few vectors for FAD ({} reference, {} generated)", refs.len(), gen.len());
                continue;
            }
            match fad_between(&refs, &gen, FadMode::PerGroup, self.config.embedding.eps) {
                Ok(f) => {
                    out.insert(name.clone(), f);
                }
                Err(e) => log::warn!("group {name}: {e}"),
            }
        }
        self.store.update(|m| m.group_fad = out)
    }

    fn report(&self) -> Result<StageReport, PipelineError> {
        let m = self.store.snapshot();
        let paths = emit_report(&m, &self.config.report.formats, &self.run_dir)?;
        for p in &paths {
            log::info!("wrote {}", p.display());
        }
        self.mark_done(Stage::Reported)?;
        Ok(StageReport {
            stage: Stage::Reported,
            processed: paths.len(),
            failed: 0,
            skipped: false,
        })
    }
}
